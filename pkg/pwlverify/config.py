"""
配置文件
包含验证器的重要配置常数
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# 加载.env文件
load_dotenv()

# 项目根目录
BASE_DIR = Path(__file__).parent.parent

# 日志目录
LOG_DIR = Path(os.getenv("PWLVERIFY_LOG_DIR", str(BASE_DIR / "logs")))

# 日志级别: 控制台默认只显示警告，文件记录全部调试信息
LOG_CONSOLE_LEVEL = os.getenv("PWLVERIFY_LOG_LEVEL", "WARNING").upper()
LOG_TO_FILE = os.getenv("PWLVERIFY_LOG_TO_FILE", "true").lower() == "true"

# 节点类型
NODE_TYPE_INPUT = "input"
NODE_TYPE_LINEAR = "linear"
NODE_TYPE_RELU = "relu"
NODE_TYPE_MAXPOOL = "maxpool"

# .pnet 关键字到节点类型的映射
PNET_KEYWORDS = {
    "Input": NODE_TYPE_INPUT,
    "Linear": NODE_TYPE_LINEAR,
    "ReLU": NODE_TYPE_RELU,
    "MaxPool": NODE_TYPE_MAXPOOL,
}

# ReLU 相位标签
PHASE_INACTIVE = "<=0"
PHASE_ACTIVE = ">=0"

# 数值容差
FEASIBILITY_TOLERANCE = 1e-7
PIVOT_TOLERANCE = 1e-9
OPTIMALITY_TOLERANCE = 1e-9
SAFETY_MARGIN = 0.0001  # 比较节点取值时的固定安全余量

# 单纯形法
DEGENERATE_PIVOTS_BEFORE_BLAND = 50
REFACTOR_INTERVAL = 50
MAX_SIMPLEX_ITERATIONS = 50000

# 界收紧
REFINE_CHANGE_THRESHOLD = 1.0
REFINE_MAX_UPDATES = 5000
REFINE_MIN_UPDATES_PER_NODE = 3
REFINE_PADDING = 1e-6

# 可行相位组合缓存
FEASIBLE_CACHE_CAPACITY = 4096

# 目标函数权重
RELU_OBJECTIVE_WEIGHT = 1.0
MAXPOOL_OBJECTIVE_WEIGHT = 0.1

# SAT 求解器
LUBY_RESTART_BASE = 100
ACTIVITY_DECAY = 0.95

# 运行预算
DEFAULT_TIME_BUDGET = float(os.getenv("PWLVERIFY_TIME_BUDGET", "3600"))  # 1小时
_conflict_budget = os.getenv("PWLVERIFY_CONFLICT_BUDGET", "")
DEFAULT_CONFLICT_BUDGET = int(_conflict_budget) if _conflict_budget else None

# 暴力枚举上限
ORACLE_CAP = int(os.getenv("PWLVERIFY_ORACLE_CAP", str(2 ** 20)))

# 鲁棒性查询默认值
MARGIN_DEFAULT_LO = 0.0
MARGIN_DEFAULT_HI = 0.05
MARGIN_DEFAULT_PRECISION = 0.002
SMOOTH_NOISE_DEFAULT_BOUND = 0.05
BOUNDED_NOISE_DEFAULT_AMPLITUDE = 0.08
NOISE_DEFAULT_BORDER = 3

# 随机网络生成
RANDOM_WEIGHT_RANGE = 1.0
RANDOM_BIAS_RANGE = 0.5

# 测试语料规模
CORPUS_SIZE = int(os.getenv("PWLVERIFY_CORPUS_SIZE", "200"))

# HTTP服务
SERVER_HOST = os.getenv("PWLVERIFY_HOST", "0.0.0.0")
SERVER_PORT = int(os.getenv("PWLVERIFY_PORT", "8000"))

# 命令行退出码
EXIT_SAT = 10
EXIT_UNSAT = 20
EXIT_ERROR = 1

# 结果状态
STATUS_SAT = "SAT"
STATUS_UNSAT = "UNSAT"
