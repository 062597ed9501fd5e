"""
Pydantic模型定义，用于运行配置、查询参数、验证结果以及HTTP接口的请求和响应
"""

from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

from pwlverify.config import (
    DEFAULT_CONFLICT_BUDGET, DEFAULT_TIME_BUDGET, ORACLE_CAP, SAFETY_MARGIN,
    MARGIN_DEFAULT_LO, MARGIN_DEFAULT_HI, MARGIN_DEFAULT_PRECISION,
    SMOOTH_NOISE_DEFAULT_BOUND, BOUNDED_NOISE_DEFAULT_AMPLITUDE, NOISE_DEFAULT_BORDER,
    STATUS_SAT
)


# 运行配置
class VerifierConfig(BaseModel):
    """一次验证运行的配置，关闭 use_* 开关用于消融实验"""
    time_budget: float = Field(DEFAULT_TIME_BUDGET, gt=0, description="墙钟时间预算(秒)")
    conflict_budget: Optional[int] = Field(DEFAULT_CONFLICT_BUDGET, ge=0, description="SAT冲突次数预算")
    use_cache: bool = Field(True, description="是否使用可行组合缓存")
    use_inference: bool = Field(True, description="是否进行隐含相位推断")
    use_refinement: bool = Field(True, description="是否进行界收紧")
    tolerance: float = Field(SAFETY_MARGIN, ge=0, description="证据检查的安全余量")
    oracle_cap: int = Field(ORACLE_CAP, gt=0, description="暴力枚举的相位组合上限")


# 验证结果
class VerificationStats(BaseModel):
    """验证统计信息"""
    lp_solves: int = 0
    refine_lp_solves: int = 0
    refine_sweeps: int = 0
    sat_conflicts: int = 0
    decisions: int = 0
    propagations: int = 0
    learned_clauses: int = 0
    restarts: int = 0
    inference_clauses: int = 0
    conflict_clauses: int = 0
    inferred_clauses: int = 0
    elastic_iterations: int = 0
    cache_hits: int = 0
    fixtures_enumerated: int = 0
    idle_iterations: int = 0
    wall_time: float = 0.0

    def without_time(self) -> Dict[str, int]:
        """去掉墙钟时间的统计，用于确定性比较"""
        return self.model_dump(exclude={"wall_time"})


class VerificationResult(BaseModel):
    """验证结果: SAT 时给出证据输入和完整取值"""
    status: str = Field(..., description="SAT 或 UNSAT")
    witness: Optional[List[float]] = Field(None, description="证据输入向量")
    valuation: Optional[Dict[str, float]] = Field(None, description="证据的完整节点取值")
    stats: VerificationStats = Field(default_factory=VerificationStats)

    @property
    def satisfiable(self) -> bool:
        return self.status == STATUS_SAT


# 查询参数
class MarginQuery(BaseModel):
    """安全余量二分查询"""
    base: List[float] = Field(..., min_length=1, description="基准输入点")
    lo: float = Field(MARGIN_DEFAULT_LO, ge=0, description="搜索区间下端")
    hi: float = Field(MARGIN_DEFAULT_HI, description="搜索区间上端")
    precision: float = Field(MARGIN_DEFAULT_PRECISION, gt=0, description="二分精度")
    expected_class: Optional[int] = Field(None, ge=1, description="期望类别(从1开始)，缺省取基准点的分类")
    frozen: List[int] = Field(default_factory=list, description="固定不动的输入下标(从0开始)")
    grid_width: Optional[int] = Field(None, gt=0, description="输入按网格排列时的宽度")
    grid_height: Optional[int] = Field(None, gt=0, description="输入按网格排列时的高度")
    border: int = Field(0, ge=0, description="网格边框宽度，边框像素固定不动")

    @model_validator(mode="after")
    def check_interval(self):
        if not self.lo < self.hi:
            raise ValueError("搜索区间必须满足 0 <= lo < hi")
        return self


class StrongClassQuery(BaseModel):
    """δ-强分类查询"""
    target_class: int = Field(..., ge=1, description="目标类别(从1开始)")
    delta: float = Field(..., ge=0, description="与其他输出之间的最小差距")
    box: Optional[List[List[float]]] = Field(None, description="输入区间 [[l, u], ...]，缺省使用文件中的约束")


class SmoothNoiseQuery(BaseModel):
    """平滑噪声查询: 相邻像素噪声之差有界"""
    base: List[float] = Field(..., min_length=1, description="基准图像(按行展开)")
    width: int = Field(..., gt=0, description="图像宽度")
    height: int = Field(..., gt=0, description="图像高度")
    bound: float = Field(SMOOTH_NOISE_DEFAULT_BOUND, ge=0, description="相邻像素噪声差的上界")
    border: int = Field(NOISE_DEFAULT_BORDER, ge=0, description="边框宽度，边框像素噪声为0")
    target_class: int = Field(..., ge=1, description="希望被误分到的类别(从1开始)")


class BoundedNoiseQuery(BaseModel):
    """幅度有界噪声查询: 每个像素的噪声绝对值有界"""
    base: List[float] = Field(..., min_length=1, description="基准图像(按行展开)")
    width: int = Field(..., gt=0, description="图像宽度")
    height: int = Field(..., gt=0, description="图像高度")
    amplitude: float = Field(BOUNDED_NOISE_DEFAULT_AMPLITUDE, ge=0, description="每个像素噪声的幅度上界")
    border: int = Field(NOISE_DEFAULT_BORDER, ge=0, description="边框宽度，边框像素噪声为0")
    target_class: int = Field(..., ge=1, description="希望被误分到的类别(从1开始)")


class NetworkShape(BaseModel):
    """随机网络的形状"""
    inputs: int = Field(2, ge=1, le=64, description="输入个数")
    hidden: List[int] = Field(default_factory=lambda: [3, 3], description="各 ReLU 隐层的宽度")
    maxpools: int = Field(1, ge=0, description="MaxPool 节点个数，取自最后一个隐层")
    pool_fan_in: int = Field(2, ge=2, description="每个 MaxPool 的前驱个数")
    outputs: int = Field(2, ge=1, description="输出个数")
    constraints: int = Field(1, ge=1, description="随机输出约束的条数")

    @model_validator(mode="after")
    def check_layers(self):
        if not self.hidden or any(width < 1 for width in self.hidden):
            raise ValueError("隐层宽度必须为正")
        if self.maxpools and self.pool_fan_in > self.hidden[-1]:
            raise ValueError("MaxPool 前驱个数不能超过最后一个隐层的宽度")
        return self


class MarginProbe(BaseModel):
    """二分过程中一次 ε 的测试"""
    epsilon: float
    robust: bool
    counterexample: Optional[List[float]] = None
    competitor: Optional[int] = None


class MarginResult(BaseModel):
    """安全余量查询结果"""
    epsilon: float = Field(..., description="找到的最大鲁棒 ε")
    robust_at_hi: bool = Field(..., description="搜索区间上端是否鲁棒")
    base_class: int
    probes: List[MarginProbe] = Field(default_factory=list)


# HTTP 接口
class VerifyRequest(BaseModel):
    """验证请求模型"""
    problem: str = Field(..., min_length=1, description=".pnet 文本")
    config: VerifierConfig = Field(default_factory=VerifierConfig)
    check_oracle: bool = Field(False, description="是否与暴力枚举交叉检查")


class OracleRequest(BaseModel):
    """暴力枚举请求模型"""
    problem: str = Field(..., min_length=1, description=".pnet 文本")
    cap: int = Field(ORACLE_CAP, gt=0, description="相位组合数上限")
    prune: bool = Field(False, description="是否剪枝不可行的部分组合")


class ExportRequest(BaseModel):
    """LP 导出请求模型"""
    problem: str = Field(..., min_length=1, description=".pnet 文本")
    refine: bool = Field(True, description="导出前是否收紧界")


class MarginRequest(BaseModel):
    problem: str = Field(..., min_length=1, description=".pnet 文本")
    query: MarginQuery
    config: VerifierConfig = Field(default_factory=VerifierConfig)


class StrongClassRequest(BaseModel):
    problem: str = Field(..., min_length=1, description=".pnet 文本")
    query: StrongClassQuery
    config: VerifierConfig = Field(default_factory=VerifierConfig)


class SmoothNoiseRequest(BaseModel):
    problem: str = Field(..., min_length=1, description=".pnet 文本")
    query: SmoothNoiseQuery
    config: VerifierConfig = Field(default_factory=VerifierConfig)


class BoundedNoiseRequest(BaseModel):
    problem: str = Field(..., min_length=1, description=".pnet 文本")
    query: BoundedNoiseQuery
    config: VerifierConfig = Field(default_factory=VerifierConfig)


class VerificationReport(BaseModel):
    """验证响应模型"""
    status: str
    witness: Optional[List[float]] = None
    witness_valid: Optional[bool] = Field(None, description="证据是否通过精确前向计算检查")
    oracle_status: Optional[str] = None
    agreement: Optional[bool] = None
    stats: VerificationStats


class BenchRow(BaseModel):
    """批量测试中一个实例的结果"""
    seed: int
    status: str
    oracle_status: Optional[str] = None
    agreement: Optional[bool] = None
    ablation_agreement: Optional[bool] = None
    lp_solves: int = 0
    lp_solves_no_inference: Optional[int] = None
    decisions: int = 0
    conflicts: int = 0
    wall_time: float = 0.0
