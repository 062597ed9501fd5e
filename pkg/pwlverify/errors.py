"""
验证器异常定义
每个异常带有一个错误码(E_*)，命令行和HTTP接口据此报告错误
"""


class VerifierError(Exception):
    """验证器异常基类"""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message


class ProblemFormatError(VerifierError):
    """.pnet 文件格式或问题校验错误"""


class LpNumericError(VerifierError):
    """单纯形法数值问题"""

    def __init__(self, message: str = ""):
        super().__init__("E_NUMERIC", message)


class BudgetExceeded(VerifierError):
    """超出时间或冲突预算"""

    def __init__(self, message: str = ""):
        super().__init__("E_TIMEOUT", message)


class RootConflict(VerifierError):
    """第0层冲突，SAT实例不可满足"""

    def __init__(self, message: str = ""):
        super().__init__("E_ROOT_CONFLICT", message)


class EmptyIntervalError(VerifierError):
    """区间传播得到空区间"""

    def __init__(self, node_id: str):
        super().__init__("E_EMPTY_INTERVAL", f"节点 {node_id} 的区间为空")
        self.node_id = node_id


class RelaxationInfeasible(VerifierError):
    """线性近似本身不可行，性质在近似中即不可满足"""

    def __init__(self, message: str = ""):
        super().__init__("E_INFEASIBLE_RELAXATION", message)
