"""
相位组合分析
在线性近似上检查部分相位组合: 不可行时用弹性过滤缩小责任集合并给出冲突子句，
可行时用紧致性目标求解、缓存可行组合并推导附加子句
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple

from pwlverify.config import (
    FEASIBLE_CACHE_CAPACITY, MAXPOOL_OBJECTIVE_WEIGHT, NODE_TYPE_MAXPOOL, NODE_TYPE_RELU,
    PHASE_ACTIVE, PHASE_INACTIVE, RELU_OBJECTIVE_WEIGHT, SAFETY_MARGIN
)
from pwlverify.errors import VerifierError
from pwlverify.logger import get_logger
from pwlverify.lp import LinearProgram, Row, make_row
from pwlverify.network import Network
from pwlverify.relaxation import pre_var, value_var
from pwlverify.sat import Clause, Literal, PhaseEncoding, PhaseFixture

logger = get_logger(__name__)

FIXTURE_BATCH = "fixture"
# 弹性规划中松弛量视为零的阈值
SLACK_ZERO = 1e-9


def slack_var(node_id: str) -> str:
    return f"s_{node_id}"


@dataclass
class AnalysisCounters:
    """相位组合分析的计数器"""
    lp_solves: int = 0
    cache_hits: int = 0
    conflict_clauses: int = 0
    conflict_literals: int = 0
    inferred_clauses: int = 0
    elastic_iterations: int = 0


@dataclass
class FeasibilityReport:
    """check_feasibility 的结果"""
    feasible: bool
    conflict_clause: Optional[Clause] = None
    blamed: Optional[PhaseFixture] = None
    solution: Optional[Dict[str, float]] = None
    tight_nodes: Set[str] = field(default_factory=set)
    tight_phases: PhaseFixture = field(default_factory=dict)
    inferred: Optional[Clause] = None
    from_cache: bool = False

    @property
    def clauses(self) -> List[Clause]:
        if self.conflict_clause is not None:
            return [self.conflict_clause]
        return [self.inferred] if self.inferred is not None else []


class FeasibleCache:
    """
    已知在线性近似中可行的文字集合，容量满时先进先出淘汰

    查询集合是某个缓存集合的子集即命中。
    """

    def __init__(self, capacity: int = FEASIBLE_CACHE_CAPACITY):
        self._entries = deque(maxlen=capacity)

    def add(self, literals: Iterable[Literal]):
        self._entries.append(frozenset(literals))

    def hit(self, literals: Iterable[Literal]) -> bool:
        key = frozenset(literals)
        return any(key <= entry for entry in self._entries)

    def __len__(self) -> int:
        return len(self._entries)


def _check_phase(net: Network, node_id: str, tag: str):
    if not net.has_node(node_id):
        raise VerifierError("E_UNKNOWN_NODE", f"相位组合引用了未声明的节点 '{node_id}'")
    node = net.node(node_id)
    if node.node_type == NODE_TYPE_RELU and tag in (PHASE_ACTIVE, PHASE_INACTIVE):
        return
    if node.node_type == NODE_TYPE_MAXPOOL and any(e.source == tag for e in net.predecessors(node_id)):
        return
    raise VerifierError("E_UNKNOWN_NODE", f"节点 '{node_id}' 没有相位 '{tag}'")


def fixture_constraints(net: Network, fixture: PhaseFixture) -> List[Tuple[str, Row]]:
    """
    相位组合对应的约束，以节点 id 作为批次标签

    ReLU ≤0: d = 0, c ≤ 0；ReLU ≥0: d ≤ c；MaxPool 固定到边 (u, v): d_v = d_u。

    Raises:
        VerifierError: E_UNKNOWN_NODE
    """
    constraints: List[Tuple[str, Row]] = []
    for node_id, tag in fixture.items():
        _check_phase(net, node_id, tag)
        d = value_var(node_id)
        if tag == PHASE_INACTIVE:
            constraints.append((node_id, make_row([(1.0, d)], "==", 0.0)))
            constraints.append((node_id, make_row([(1.0, pre_var(node_id))], "<=", 0.0)))
        elif tag == PHASE_ACTIVE:
            constraints.append((node_id, make_row([(1.0, d), (-1.0, pre_var(node_id))], "<=", 0.0)))
        else:
            constraints.append((node_id, make_row([(1.0, d), (-1.0, value_var(tag))], "==", 0.0)))
    return constraints


def elastic_rows(node_id: str, tag: str) -> List[Row]:
    """用松弛变量 s_v 放宽节点 v 的相位约束"""
    d, s = value_var(node_id), slack_var(node_id)
    if tag == PHASE_INACTIVE:
        return [
            make_row([(1.0, pre_var(node_id)), (-1.0, s)], "<=", 0.0),
            make_row([(1.0, d), (-1.0, s)], "<=", 0.0),
            make_row([(1.0, d), (1.0, s)], ">=", 0.0),
        ]
    if tag == PHASE_ACTIVE:
        return [make_row([(1.0, d), (-1.0, pre_var(node_id)), (-1.0, s)], "<=", 0.0)]
    source = value_var(tag)
    return [
        make_row([(1.0, d), (-1.0, source), (-1.0, s)], "<=", 0.0),
        make_row([(1.0, d), (-1.0, source), (1.0, s)], ">=", 0.0),
    ]


def tight_objective(net: Network, fixture: PhaseFixture) -> Dict[str, float]:
    """未固定 ReLU 节点权重为 1，未固定 MaxPool 节点权重为 1/10 的最小化目标"""
    objective: Dict[str, float] = {}
    for node in net.nodes:
        if node.id in fixture:
            continue
        if node.node_type == NODE_TYPE_RELU:
            objective[value_var(node.id)] = RELU_OBJECTIVE_WEIGHT
        elif node.node_type == NODE_TYPE_MAXPOOL:
            objective[value_var(node.id)] = MAXPOOL_OBJECTIVE_WEIGHT
    return objective


def _maxpool_choice(net: Network, node_id: str, solution: Dict[str, float], tolerance: float) -> Optional[str]:
    """取值最大的前驱(并列取编号最小者)；MaxPool 取值不等于任何前驱时返回 None"""
    d = solution[value_var(node_id)]
    sources = [e.source for e in net.predecessors(node_id)]
    best = max(solution[value_var(s)] for s in sources)
    if abs(d - best) > tolerance:
        return None
    for source in sources:
        if solution[value_var(source)] >= best - tolerance:
            return source
    return None


def tight_set(
    net: Network,
    solution: Dict[str, float],
    tolerance: float = SAFETY_MARGIN
) -> Tuple[Set[str], PhaseFixture]:
    """
    找出取值与其激活函数精确输出一致的节点

    Returns:
        tuple: (紧致节点集合, 紧致节点诱导的相位 p′)

    使用样例:
        nodes, phases = tight_set(net, outcome.solution)
    """
    nodes: Set[str] = set()
    phases: PhaseFixture = {}
    for node in net.nodes:
        if node.node_type == NODE_TYPE_RELU:
            d = solution[value_var(node.id)]
            c = solution[pre_var(node.id)]
            if abs(d - max(c, 0.0)) <= tolerance:
                nodes.add(node.id)
                phases[node.id] = PHASE_ACTIVE if c > 0.0 else PHASE_INACTIVE
        elif node.node_type == NODE_TYPE_MAXPOOL:
            choice = _maxpool_choice(net, node.id, solution, tolerance)
            if choice is not None:
                nodes.add(node.id)
                phases[node.id] = choice
    return nodes, phases


def inferred_clause(
    fixture: PhaseFixture,
    solution: Dict[str, float],
    net: Network,
    encoding: PhaseEncoding,
    tolerance: float = SAFETY_MARGIN
) -> Optional[Clause]:
    """
    紧致性目标最优时若某个未固定 ReLU 取值为正且所有 MaxPool 取值有效，
    推导子句 (∨¬p) ∨ (∨ x_{v,≥0}，v 为未固定为 ≤0 的 ReLU)

    子句为重言式(p 中已有 ≥0 的 ReLU)时返回 None。
    """
    unfixed = [v for v in net.nodes_of_type(NODE_TYPE_RELU) if v not in fixture]
    if not any(solution[value_var(v)] > tolerance for v in unfixed):
        return None
    for node_id in net.nodes_of_type(NODE_TYPE_MAXPOOL):
        if _maxpool_choice(net, node_id, solution, tolerance) is None:
            return None

    p = encoding.fixture_literals(fixture)
    positive = [
        encoding.literal(v, PHASE_ACTIVE)
        for v in net.nodes_of_type(NODE_TYPE_RELU)
        if fixture.get(v) != PHASE_INACTIVE
    ]
    if any(lit in p for lit in positive):
        return None
    return [-lit for lit in p] + positive


def elastic_filter(
    lp: LinearProgram,
    net: Network,
    fixture: PhaseFixture,
    encoding: PhaseEncoding,
    counters: Optional[AnalysisCounters] = None
) -> Tuple[PhaseFixture, Clause]:
    """
    弹性过滤: 反复最小化松弛量之和，把取值最大的松弛量固定为 0，直到规划不可行

    Args:
        lp: 不含相位约束的线性近似
        net: 网络
        fixture: 与线性近似联合不可行的相位组合
        encoding: 相位编码
        counters: 计数器

    Returns:
        tuple: (不可行的子组合, 冲突子句)

    Raises:
        VerifierError: E_NOT_INFEASIBLE
    """
    counters = counters if counters is not None else AnalysisCounters()
    elastic = lp.copy()
    order = [node.id for node in net.nodes if node.id in fixture]
    for node_id in order:
        _check_phase(net, node_id, fixture[node_id])
        elastic.add_variable(slack_var(node_id), 0.0)
        elastic.add_rows(elastic_rows(node_id, fixture[node_id]))
    elastic.set_objective({slack_var(node_id): 1.0 for node_id in order})

    hardened: List[str] = []
    while True:
        outcome = elastic.solve()
        counters.lp_solves += 1
        counters.elastic_iterations += 1
        if outcome.infeasible:
            break
        if outcome.objective_value is None or outcome.objective_value <= SLACK_ZERO:
            if not hardened:
                raise VerifierError("E_NOT_INFEASIBLE", "相位组合在线性近似中可行")
            hardened = list(order)
            break
        remaining = [v for v in order if v not in hardened]
        if not remaining:
            break
        best = max(remaining, key=lambda v: (outcome.solution[slack_var(v)], -net.index(v)))
        hardened.append(best)
        elastic.tighten_var_bound(slack_var(best), "upper", 0.0)

    sub = {node_id: fixture[node_id] for node_id in hardened}
    check = lp.copy()
    check.set_objective({})
    check.push_batch(FIXTURE_BATCH, [r for _, r in fixture_constraints(net, sub)])
    counters.lp_solves += 1
    if not check.solve().infeasible:
        logger.warning(
            "弹性过滤得到的子组合复查可行，退回完整相位组合",
            extra={"fixture_size": len(fixture), "sub_size": len(sub)}
        )
        sub = dict(fixture)

    clause = [-lit for lit in encoding.fixture_literals(sub)]
    counters.conflict_clauses += 1
    counters.conflict_literals += len(clause)
    logger.debug(
        f"弹性过滤: {len(fixture)} -> {len(sub)} 个节点",
        extra={"iterations": counters.elastic_iterations}
    )
    return sub, clause


def check_feasibility(
    net: Network,
    lp: LinearProgram,
    fixture: PhaseFixture,
    encoding: PhaseEncoding,
    cache: Optional[FeasibleCache] = None,
    counters: Optional[AnalysisCounters] = None
) -> FeasibilityReport:
    """
    在线性近似上检查相位组合

    完整相位组合不查缓存，因为调用方需要真实的线性规划解作为证据。
    返回前弹出相位约束批次并恢复原目标。

    Args:
        net: 网络
        lp: 当前线性近似
        fixture: 相位组合
        encoding: 相位编码
        cache: 可行组合缓存，None 表示不使用
        counters: 计数器

    Returns:
        FeasibilityReport: 检查结果

    Raises:
        LpNumericError: 单纯形数值问题

    使用样例:
        report = check_feasibility(net, lp, {"y": "<=0"}, encoding, FeasibleCache())
        if not report.feasible:
            print(report.conflict_clause)
    """
    counters = counters if counters is not None else AnalysisCounters()
    literals = encoding.fixture_literals(fixture)
    complete = encoding.is_complete(fixture)
    if cache is not None and not complete and cache.hit(literals):
        counters.cache_hits += 1
        return FeasibilityReport(feasible=True, from_cache=True)

    saved_objective = lp.objective
    lp.push_batch(FIXTURE_BATCH, [r for _, r in fixture_constraints(net, fixture)])
    lp.set_objective(tight_objective(net, fixture))
    try:
        outcome = lp.solve()
        counters.lp_solves += 1
        confirm = None
        candidate = None
        if outcome.optimal:
            unfixed_pools = [
                v for v in net.nodes_of_type(NODE_TYPE_MAXPOOL) if v not in fixture
            ]
            candidate = inferred_clause(fixture, outcome.solution, net, encoding)
            if candidate is not None and unfixed_pools:
                lp.set_objective({
                    value_var(v): RELU_OBJECTIVE_WEIGHT
                    for v in net.nodes_of_type(NODE_TYPE_RELU) if v not in fixture
                })
                confirm = lp.solve()
                counters.lp_solves += 1
    finally:
        lp.pop_batch(FIXTURE_BATCH)
        lp.set_objective(saved_objective)

    if outcome.infeasible:
        blamed, clause = elastic_filter(lp, net, fixture, encoding, counters)
        return FeasibilityReport(feasible=False, conflict_clause=clause, blamed=blamed)
    if not outcome.optimal:
        raise VerifierError("E_NUMERIC", "线性近似在有界变量下不应无界")

    nodes, phases = tight_set(net, outcome.solution)
    if cache is not None:
        merged = dict(fixture)
        for node_id, tag in phases.items():
            merged.setdefault(node_id, tag)
        cache.add(encoding.fixture_literals(merged))

    clause = candidate
    if clause is not None and confirm is not None:
        if not confirm.optimal or confirm.objective_value <= SAFETY_MARGIN:
            clause = None
    if clause is not None:
        counters.inferred_clauses += 1
    return FeasibilityReport(
        feasible=True,
        solution=outcome.solution,
        tight_nodes=nodes,
        tight_phases=phases,
        inferred=clause,
    )
