"""
全局线性近似
节点变量与界、ReLU 三角松弛与 MaxPool 松弛、区间算术初始界、基于线性规划的界收紧以及 LP 文件导出
"""

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from pwlverify.config import (
    NODE_TYPE_INPUT, NODE_TYPE_LINEAR, NODE_TYPE_RELU, NODE_TYPE_MAXPOOL,
    REFINE_CHANGE_THRESHOLD, REFINE_MAX_UPDATES, REFINE_MIN_UPDATES_PER_NODE, REFINE_PADDING
)
from pwlverify.errors import EmptyIntervalError, ProblemFormatError, RelaxationInfeasible
from pwlverify.logger import get_logger
from pwlverify.lp import LinearProgram, Row, make_row, STATUS_INFEASIBLE, STATUS_OPTIMAL
from pwlverify.network import LinearConstraint, Network, VerificationProblem

logger = get_logger(__name__)

Interval = Tuple[float, float]


def value_var(node_id: str) -> str:
    """节点取值变量 d_v"""
    return f"d_{node_id}"


def pre_var(node_id: str) -> str:
    """ReLU 预激活变量 c_v"""
    return f"c_{node_id}"


@dataclass(frozen=True)
class BoundsMap:
    """每个节点的取值区间，ReLU 节点另有预激活区间"""
    value: Dict[str, Interval]
    pre: Dict[str, Interval] = field(default_factory=dict)

    def lower(self, node_id: str) -> float:
        return self.value[node_id][0]

    def upper(self, node_id: str) -> float:
        return self.value[node_id][1]

    def within(self, other: "BoundsMap", tolerance: float = 0.0) -> bool:
        """self 的每个区间都包含在 other 中"""
        for table, other_table in ((self.value, other.value), (self.pre, other.pre)):
            for node_id, (lower, upper) in table.items():
                other_lower, other_upper = other_table[node_id]
                if lower < other_lower - tolerance or upper > other_upper + tolerance:
                    return False
        return True

    def total_width(self) -> float:
        return sum(u - l for l, u in self.value.values()) + sum(u - l for l, u in self.pre.values())


def interval_sum(net: Network, node_id: str, value: Dict[str, Interval]) -> Interval:
    """B(v) + Σ W·[l, u] 的区间"""
    bias = net.node(node_id).bias
    lower = upper = bias
    for edge in net.predecessors(node_id):
        pred_lower, pred_upper = value[edge.source]
        if edge.weight >= 0:
            lower += edge.weight * pred_lower
            upper += edge.weight * pred_upper
        else:
            lower += edge.weight * pred_upper
            upper += edge.weight * pred_lower
    return lower, upper


def compute_initial_bounds(problem: VerificationProblem, hull_empty: bool = False) -> BoundsMap:
    """
    按拓扑序做区间算术，得到可靠的初始界

    Args:
        problem: 验证问题
        hull_empty: 为 True 时把上下界交叉的输入区间换成两端之间的区间，不抛出异常

    Returns:
        BoundsMap: 初始界

    Raises:
        ProblemFormatError: E_UNBOUNDED_INPUT
        EmptyIntervalError: 输入区间为空

    使用样例:
        bounds = compute_initial_bounds(problem)
        print(bounds.value["y"])
    """
    net = problem.network
    value: Dict[str, Interval] = {}
    pre: Dict[str, Interval] = {}
    for node_id, (lower, upper) in problem.input_box().items():
        if not (math.isfinite(lower) and math.isfinite(upper)):
            raise ProblemFormatError("E_UNBOUNDED_INPUT", f"输入 '{node_id}' 缺少有限的上下界")
        if lower > upper:
            if not hull_empty:
                raise EmptyIntervalError(node_id)
            lower, upper = upper, lower
        value[node_id] = (lower, upper)

    for node in net.nodes:
        if node.node_type == NODE_TYPE_INPUT:
            continue
        if node.node_type == NODE_TYPE_MAXPOOL:
            preds = [value[e.source] for e in net.predecessors(node.id)]
            value[node.id] = (max(l for l, _ in preds), max(u for _, u in preds))
        elif node.node_type == NODE_TYPE_RELU:
            pre_lower, pre_upper = interval_sum(net, node.id, value)
            pre[node.id] = (pre_lower, pre_upper)
            value[node.id] = (max(pre_lower, 0.0), max(pre_upper, 0.0))
        else:
            value[node.id] = interval_sum(net, node.id, value)
    return BoundsMap(value=value, pre=pre)


def property_rows(constraints: List[LinearConstraint]) -> List[Row]:
    """把 ψ 的约束翻译成取值变量上的行"""
    rows = []
    for constraint in constraints:
        terms = [(coeff, value_var(node_id)) for coeff, node_id in constraint.terms]
        # "<=" 即 c <= Σ，对应 Σ >= c
        sense = ">=" if constraint.sense == "<=" else "<="
        rows.append(make_row(terms, sense, constraint.constant))
    return rows


def relu_rows(node_id: str, pre_lower: float, pre_upper: float) -> List[Row]:
    d, c = value_var(node_id), pre_var(node_id)
    if pre_upper <= 0.0:
        return [make_row([(1.0, d)], "==", 0.0)]
    if pre_lower >= 0.0:
        return [make_row([(1.0, d), (-1.0, c)], "==", 0.0)]
    slope = pre_upper / (pre_upper - pre_lower)
    return [
        make_row([(1.0, d), (-1.0, c)], ">=", 0.0),
        make_row([(1.0, d), (-slope, c)], "<=", -slope * pre_lower),
    ]


def maxpool_rows(net: Network, node_id: str, bounds: BoundsMap) -> List[Row]:
    d = value_var(node_id)
    preds = [e.source for e in net.predecessors(node_id)]
    rows = [make_row([(1.0, d), (-1.0, value_var(p))], ">=", 0.0) for p in preds]
    lowers = [bounds.lower(p) for p in preds]
    terms = [(1.0, value_var(p)) for p in preds] + [(-1.0, d)]
    rows.append(make_row(terms, ">=", sum(lowers) - max(lowers)))
    return rows


def build_relaxation(problem: VerificationProblem, bounds: BoundsMap) -> LinearProgram:
    """
    构建网络行为的全局线性近似，包含 ψ

    Args:
        problem: 验证问题
        bounds: 可靠的节点界

    Returns:
        LinearProgram: 变量为 d_v 与 c_v 的线性规划，目标为空
    """
    net = problem.network
    lp = LinearProgram()
    for node in net.nodes:
        lower, upper = bounds.value[node.id]
        lp.add_variable(value_var(node.id), lower, upper)
        if node.node_type == NODE_TYPE_RELU:
            pre_lower, pre_upper = bounds.pre[node.id]
            lp.add_variable(pre_var(node.id), pre_lower, pre_upper)

    for node in net.nodes:
        if node.node_type in (NODE_TYPE_LINEAR, NODE_TYPE_RELU):
            target = value_var(node.id) if node.node_type == NODE_TYPE_LINEAR else pre_var(node.id)
            terms = [(1.0, target)] + [
                (-e.weight, value_var(e.source)) for e in net.predecessors(node.id)
            ]
            lp.add_row(make_row(terms, "==", node.bias))
            if node.node_type == NODE_TYPE_RELU:
                lp.add_rows(relu_rows(node.id, *bounds.pre[node.id]))
        elif node.node_type == NODE_TYPE_MAXPOOL:
            lp.add_rows(maxpool_rows(net, node.id, bounds))

    lp.add_rows(property_rows(list(problem.property)))
    return lp


@dataclass
class RefinementStats:
    sweeps: int = 0
    updates: int = 0
    lp_solves: int = 0
    last_change: float = 0.0


def _reconcile_relu(bounds: Dict[str, Interval], pre: Dict[str, Interval]):
    """利用 c <= d 与 d > 0 ⇒ c = d 在两族界之间互相收紧"""
    for node_id, (pre_lower, pre_upper) in pre.items():
        lower, upper = bounds[node_id]
        pre_upper = min(pre_upper, upper)
        if lower > 0.0:
            pre_lower = max(pre_lower, lower)
        upper = min(upper, max(pre_upper, 0.0))
        lower = max(lower, pre_lower, 0.0)
        pre_lower = min(pre_lower, pre_upper)
        lower = min(lower, upper)
        pre[node_id] = (pre_lower, pre_upper)
        bounds[node_id] = (lower, upper)


def refine_bounds(
    problem: VerificationProblem,
    lp: LinearProgram,
    bounds: BoundsMap,
    history: Optional[List[BoundsMap]] = None,
    stats: Optional[RefinementStats] = None
) -> BoundsMap:
    """
    逐个节点最小化/最大化取值变量以收紧界，直到一轮的累计变化小于阈值

    每个结果向外留出 REFINE_PADDING 的余量，并且不会超出旧界。
    每轮结束后用新界重建线性近似。

    Args:
        problem: 验证问题
        lp: 当前线性近似(不会被修改)
        bounds: 当前界
        history: 若给出，每轮结束后追加一次界的快照
        stats: 若给出，记录轮数和更新次数

    Returns:
        BoundsMap: 收紧后的界

    Raises:
        RelaxationInfeasible: 线性近似不可行，性质不可满足
        LpNumericError: 单纯形数值问题
    """
    net = problem.network
    stats = stats if stats is not None else RefinementStats()
    per_node: Counter = Counter()
    current = bounds
    work = lp.copy()

    while True:
        value = dict(current.value)
        pre = dict(current.pre)
        change = 0.0
        for node in net.nodes:
            targets = [(value_var(node.id), value)]
            if node.node_type == NODE_TYPE_RELU:
                targets.append((pre_var(node.id), pre))
            for var, table in targets:
                for side, sign in (("lower", 1.0), ("upper", -1.0)):
                    work.set_objective({var: sign})
                    outcome = work.solve()
                    stats.lp_solves += 1
                    if outcome.status == STATUS_INFEASIBLE:
                        raise RelaxationInfeasible("界收紧时线性近似不可行")
                    stats.updates += 1
                    per_node[node.id] += 1
                    if outcome.status != STATUS_OPTIMAL:
                        continue
                    optimum = sign * outcome.objective_value
                    lower, upper = table[node.id]
                    if side == "lower":
                        new = min(max(lower, optimum - REFINE_PADDING), upper)
                        change += new - lower
                        table[node.id] = (new, upper)
                    else:
                        new = max(min(upper, optimum + REFINE_PADDING), lower)
                        change += upper - new
                        table[node.id] = (lower, new)
                    work.tighten_var_bound(var, side, new)

        _reconcile_relu(value, pre)
        current = BoundsMap(value=value, pre=pre)
        stats.sweeps += 1
        stats.last_change = change
        if history is not None:
            history.append(current)
        logger.debug(
            f"界收紧第{stats.sweeps}轮, 累计变化 {change:.6g}",
            extra={"updates": stats.updates, "width": current.total_width()}
        )

        if change < REFINE_CHANGE_THRESHOLD:
            break
        if stats.updates >= REFINE_MAX_UPDATES and all(
            per_node[node.id] >= REFINE_MIN_UPDATES_PER_NODE for node in net.nodes
        ):
            break
        work = build_relaxation(problem, current)

    logger.info(
        f"界收紧完成: {stats.sweeps}轮, {stats.updates}次更新",
        extra={"lp_solves": stats.lp_solves}
    )
    return current


def exportable_relaxation(problem: VerificationProblem, refine: bool = True) -> LinearProgram:
    """
    构建用于导出的线性近似

    输入区间为空时按两端之间的区间建变量；界收紧中途发现不可行时，
    退回到最后一轮完整收紧的界(没有则用初始界)。ψ 的行始终保留，
    所以导出的程序仍然是不可行的。

    Args:
        problem: 验证问题
        refine: 是否先收紧界

    Returns:
        LinearProgram: 线性近似

    使用样例:
        text = export_lp(exportable_relaxation(problem))
    """
    try:
        bounds = compute_initial_bounds(problem)
    except EmptyIntervalError as e:
        logger.warning(f"输入区间为空, 导出未收紧的线性近似: {e.message}")
        return build_relaxation(problem, compute_initial_bounds(problem, hull_empty=True))

    lp = build_relaxation(problem, bounds)
    if not refine:
        return lp
    history: List[BoundsMap] = []
    try:
        return build_relaxation(problem, refine_bounds(problem, lp, bounds, history=history))
    except RelaxationInfeasible:
        logger.warning("界收紧时线性近似不可行, 导出收紧前的界", extra={"sweeps": len(history)})
        return build_relaxation(problem, history[-1]) if history else lp


def _format_number(value: float) -> str:
    if value == math.inf:
        return "+inf"
    if value == -math.inf:
        return "-inf"
    return format(value, ".15g")


def _format_terms(terms) -> str:
    return " ".join(f"{coeff:+.15g} {var}" for coeff, var in terms)


def export_lp(lp: LinearProgram) -> str:
    """
    以 CPLEX LP 文本格式输出线性规划

    约束按程序顺序命名为 c1..cN，输出是确定的。

    使用样例:
        text = export_lp(build_relaxation(problem, bounds))
        Path("relaxation.lp").write_text(text)
    """
    lines = ["Minimize"]
    objective = lp.objective
    if objective:
        lines.append(" obj: " + _format_terms((c, v) for v, c in objective.items()))
    else:
        variables = lp.variables()
        lines.append(f" obj: 0 {variables[0]}" if variables else " obj: 0")

    lines.append("Subject To")
    senses = {"<=": "<=", ">=": ">=", "==": "="}
    for i, constraint in enumerate(lp.rows(), 1):
        lines.append(
            f" c{i}: {_format_terms(constraint.terms)} "
            f"{senses[constraint.sense]} {_format_number(constraint.rhs)}"
        )

    lines.append("Bounds")
    for var in lp.variables():
        lower, upper = lp.bounds(var)
        if lower == -math.inf and upper == math.inf:
            lines.append(f" {var} free")
        else:
            lines.append(f" {_format_number(lower)} <= {var} <= {_format_number(upper)}")
    lines.append("End")
    return "\n".join(lines) + "\n"
