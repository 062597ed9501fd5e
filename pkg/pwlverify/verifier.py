"""
集成求解器
计算并收紧界、建立独热相位编码，然后在主循环中交替进行 SAT 步骤、隐含相位推断和线性近似可行性检查；
另提供枚举全部相位组合的暴力求解器作为对照
"""

import itertools
import math
import time
from collections import deque
from typing import Deque, Dict, List, Optional, Tuple

from pwlverify.config import (
    LUBY_RESTART_BASE, NODE_TYPE_INPUT, NODE_TYPE_LINEAR, NODE_TYPE_MAXPOOL, NODE_TYPE_RELU,
    ORACLE_CAP, PHASE_ACTIVE, PHASE_INACTIVE, SAFETY_MARGIN, STATUS_SAT, STATUS_UNSAT
)
from pwlverify.errors import (
    BudgetExceeded, EmptyIntervalError, LpNumericError, ProblemFormatError,
    RelaxationInfeasible, RootConflict, VerifierError
)
from pwlverify.fixtures import AnalysisCounters, FeasibleCache, check_feasibility
from pwlverify.inference import infer_node_phases
from pwlverify.logger import get_logger
from pwlverify.lp import LinearProgram, Row, make_row
from pwlverify.network import VerificationProblem, check_witness, evaluate
from pwlverify.relaxation import (
    RefinementStats, build_relaxation, compute_initial_bounds, pre_var,
    property_rows, refine_bounds, value_var
)
from pwlverify.sat import Clause, PhaseEncoding, SatSolver, init_phase_encoding, luby
from pwlverify.schemas import VerificationResult, VerificationStats, VerifierConfig

logger = get_logger(__name__)


class _PhaseSearch:
    """一次验证运行的全部可变状态，单线程使用"""

    def __init__(self, problem: VerificationProblem, config: VerifierConfig):
        self.problem = problem
        self.net = problem.network
        self.config = config
        self.stats = VerificationStats()
        self.counters = AnalysisCounters()
        self.started = time.monotonic()
        self.extra: Deque[Clause] = deque()
        self.solver: Optional[SatSolver] = None
        self.encoding: Optional[PhaseEncoding] = None
        self.restart_index = 1
        self.conflicts_at_restart = 0

    def _check_budget(self):
        elapsed = time.monotonic() - self.started
        if elapsed > self.config.time_budget:
            raise BudgetExceeded(f"超过时间预算 {self.config.time_budget} 秒")
        budget = self.config.conflict_budget
        if budget is not None and self.solver is not None and self.solver.stats.conflicts > budget:
            raise BudgetExceeded(f"超过冲突预算 {budget}")

    def _resolve(self, conflict: Optional[int]):
        self.solver.resolve_conflict(conflict)
        since = self.solver.stats.conflicts - self.conflicts_at_restart
        if since >= LUBY_RESTART_BASE * luby(self.restart_index):
            self.solver.restart()
            self.restart_index += 1
            self.conflicts_at_restart = self.solver.stats.conflicts
            logger.debug(f"第{self.restart_index - 1}次重启")

    def _finish(self, status: str, witness: Optional[List[float]] = None,
                valuation: Optional[Dict[str, float]] = None) -> VerificationResult:
        self.stats.lp_solves = self.counters.lp_solves
        self.stats.cache_hits = self.counters.cache_hits
        self.stats.conflict_clauses = self.counters.conflict_clauses
        self.stats.inferred_clauses = self.counters.inferred_clauses
        self.stats.elastic_iterations = self.counters.elastic_iterations
        if self.solver is not None:
            self.stats.sat_conflicts = self.solver.stats.conflicts
            self.stats.decisions = self.solver.stats.decisions
            self.stats.propagations = self.solver.stats.propagations
            self.stats.learned_clauses = self.solver.stats.learned
            self.stats.restarts = self.solver.stats.restarts
        self.stats.wall_time = time.monotonic() - self.started
        logger.info(
            f"验证结束: {status}",
            extra={"lp_solves": self.stats.lp_solves, "decisions": self.stats.decisions}
        )
        return VerificationResult(status=status, witness=witness, valuation=valuation, stats=self.stats)

    def run(self) -> VerificationResult:
        try:
            bounds = compute_initial_bounds(self.problem)
        except EmptyIntervalError:
            logger.info("输入区间为空，性质不可满足")
            return self._finish(STATUS_UNSAT)

        lp = build_relaxation(self.problem, bounds)
        if self.config.use_refinement:
            refine_stats = RefinementStats()
            try:
                bounds = refine_bounds(self.problem, lp, bounds, stats=refine_stats)
            except RelaxationInfeasible:
                self.stats.refine_lp_solves = refine_stats.lp_solves
                self.stats.refine_sweeps = refine_stats.sweeps
                return self._finish(STATUS_UNSAT)
            self.stats.refine_lp_solves = refine_stats.lp_solves
            self.stats.refine_sweeps = refine_stats.sweeps
            lp = build_relaxation(self.problem, bounds)

        self.solver, self.encoding = init_phase_encoding(self.net)
        try:
            for node_id in self.net.nodes_of_type(NODE_TYPE_RELU):
                pre_lower, pre_upper = bounds.pre[node_id]
                if pre_upper <= 0.0:
                    self.solver.add_clause([self.encoding.literal(node_id, PHASE_INACTIVE)])
                elif pre_lower >= 0.0:
                    self.solver.add_clause([self.encoding.literal(node_id, PHASE_ACTIVE)])
            return self._search(bounds, lp)
        except RootConflict:
            return self._finish(STATUS_UNSAT)

    def _search(self, bounds, lp: LinearProgram) -> VerificationResult:
        solver, encoding = self.solver, self.encoding
        cache = FeasibleCache() if self.config.use_cache else None

        while True:
            self._check_budget()
            footprint = (len(self.extra), len(solver.trail), len(solver.clauses))

            if self.extra:
                clause = self.extra.popleft()
                self._resolve(solver.add_clause(clause))
                continue

            fixture = encoding.fixture(solver.trail)
            if self.config.use_inference:
                inferred = infer_node_phases(self.net, bounds, fixture, encoding, known=solver._clause_keys)
                fresh = [c for c in inferred if not solver.is_satisfied(c)]
                if fresh:
                    self.stats.inference_clauses += len(fresh)
                    self.extra.extend(fresh)
                    continue

            report = check_feasibility(self.net, lp, fixture, encoding, cache, self.counters)
            if not report.feasible:
                self.extra.append(report.conflict_clause)
                continue
            pending = [
                c for c in report.clauses
                if not solver.is_satisfied(c) and not solver.contains(c)
            ]
            if pending:
                self.extra.extend(pending)
                continue

            if solver.is_complete():
                return self._witness(report.solution)

            conflict = solver.assign_decision(solver.decide())
            if conflict is not None:
                self._resolve(conflict)
            elif not solver.extendable(solver.trail):
                decisions = solver.decisions()
                solver.backjump(solver.decision_level - 1)
                self._resolve(solver.add_clause([-lit for lit in decisions]))

            if footprint == (len(self.extra), len(solver.trail), len(solver.clauses)):
                self.stats.idle_iterations += 1

    def _witness(self, solution: Optional[Dict[str, float]]) -> VerificationResult:
        if solution is None:
            raise LpNumericError("完整相位组合没有线性规划解")
        witness = [solution[value_var(x)] for x in self.net.input_order]
        if not check_witness(self.problem, witness, self.config.tolerance):
            logger.error("证据未通过精确前向计算检查", extra={"witness": witness})
            raise LpNumericError("完整相位组合的线性规划解未通过精确检查")
        return self._finish(STATUS_SAT, witness, evaluate(self.net, witness))


def verify(problem: VerificationProblem, config: Optional[VerifierConfig] = None) -> VerificationResult:
    """
    验证性质 ψ 在网络上是否可满足

    Args:
        problem: 输入有界的验证问题
        config: 运行配置，缺省使用默认值

    Returns:
        VerificationResult: SAT(附证据) 或 UNSAT

    Raises:
        BudgetExceeded: 超出时间或冲突预算
        LpNumericError: 数值问题

    使用样例:
        result = verify(parse_problem(text))
        if result.satisfiable:
            print(result.witness)
    """
    config = config or VerifierConfig()
    logger.info(
        "开始验证",
        extra={"nodes": len(problem.network.nodes), "constraints": len(problem.property)}
    )
    return _PhaseSearch(problem, config).run()


def _phase_options(problem: VerificationProblem) -> List[Tuple[str, List[str]]]:
    options = []
    for node in problem.network.nodes:
        if node.node_type == NODE_TYPE_RELU:
            options.append((node.id, [PHASE_ACTIVE, PHASE_INACTIVE]))
        elif node.node_type == NODE_TYPE_MAXPOOL:
            options.append((node.id, [e.source for e in problem.network.predecessors(node.id)]))
    return options


def exact_program(problem: VerificationProblem) -> LinearProgram:
    """不含任何近似的线性规划骨架: 输入区间、线性等式和 ψ，相位约束由 exact_phase_rows 提供"""
    net = problem.network
    box = problem.input_box()
    lp = LinearProgram()
    for node in net.nodes:
        if node.node_type == NODE_TYPE_INPUT:
            lower, upper = box[node.id]
            if not (math.isfinite(lower) and math.isfinite(upper)):
                raise ProblemFormatError("E_UNBOUNDED_INPUT", f"输入 '{node.id}' 缺少有限的上下界")
            if lower > upper:
                raise EmptyIntervalError(node.id)
            lp.add_variable(value_var(node.id), lower, upper)
        else:
            lp.add_variable(value_var(node.id))
        if node.node_type == NODE_TYPE_RELU:
            lp.add_variable(pre_var(node.id))
    for node in net.nodes:
        if node.node_type in (NODE_TYPE_LINEAR, NODE_TYPE_RELU):
            target = value_var(node.id) if node.node_type == NODE_TYPE_LINEAR else pre_var(node.id)
            terms = [(1.0, target)] + [(-e.weight, value_var(e.source)) for e in net.predecessors(node.id)]
            lp.add_row(make_row(terms, "==", node.bias))
    lp.add_rows(property_rows(list(problem.property)))
    return lp


def exact_phase_rows(problem: VerificationProblem, node_id: str, tag: str) -> List[Row]:
    """节点处于给定相位时的精确约束"""
    d = value_var(node_id)
    if tag == PHASE_ACTIVE:
        c = pre_var(node_id)
        return [make_row([(1.0, d), (-1.0, c)], "==", 0.0), make_row([(1.0, c)], ">=", 0.0)]
    if tag == PHASE_INACTIVE:
        return [make_row([(1.0, d)], "==", 0.0), make_row([(1.0, pre_var(node_id))], "<=", 0.0)]
    rows = [make_row([(1.0, d), (-1.0, value_var(tag))], "==", 0.0)]
    rows.extend(
        make_row([(1.0, d), (-1.0, value_var(e.source))], ">=", 0.0)
        for e in problem.network.predecessors(node_id)
    )
    return rows


def brute_force_oracle(
    problem: VerificationProblem,
    cap: int = ORACLE_CAP,
    prune: bool = False,
    tolerance: float = SAFETY_MARGIN
) -> VerificationResult:
    """
    枚举每个完整相位组合并求解对应的精确线性规划

    Args:
        problem: 验证问题
        cap: 相位组合数上限
        prune: 为 True 时深度优先枚举，部分组合不可行即剪掉整棵子树
        tolerance: 证据检查余量

    Returns:
        VerificationResult: 存在可行组合即为 SAT

    Raises:
        VerifierError: E_TOO_LARGE
    """
    started = time.monotonic()
    stats = VerificationStats()
    options = _phase_options(problem)
    total = math.prod(len(tags) for _, tags in options)
    if total > cap:
        raise VerifierError("E_TOO_LARGE", f"相位组合数 {total} 超过上限 {cap}")

    try:
        lp = exact_program(problem)
    except EmptyIntervalError:
        stats.wall_time = time.monotonic() - started
        return VerificationResult(status=STATUS_UNSAT, stats=stats)

    def finish(status, solution=None) -> VerificationResult:
        stats.wall_time = time.monotonic() - started
        if solution is None:
            return VerificationResult(status=status, stats=stats)
        witness = [solution[value_var(x)] for x in problem.network.input_order]
        if not check_witness(problem, witness, tolerance):
            raise LpNumericError("暴力枚举得到的证据未通过精确检查")
        return VerificationResult(
            status=status, witness=witness,
            valuation=evaluate(problem.network, witness), stats=stats
        )

    def solve_with(rows: List[Row]):
        lp.push_batch("phases", rows)
        try:
            stats.lp_solves += 1
            return lp.solve()
        finally:
            lp.pop_batch("phases")

    if not prune:
        for combination in itertools.product(*(tags for _, tags in options)):
            rows: List[Row] = []
            for (node_id, _), tag in zip(options, combination):
                rows.extend(exact_phase_rows(problem, node_id, tag))
            stats.fixtures_enumerated += 1
            outcome = solve_with(rows)
            if outcome.optimal:
                return finish(STATUS_SAT, outcome.solution)
        return finish(STATUS_UNSAT)

    def search(depth: int, rows: List[Row]):
        if depth == len(options):
            stats.fixtures_enumerated += 1
        outcome = solve_with(rows)
        if not outcome.optimal:
            return None
        if depth == len(options):
            return outcome.solution
        node_id, tags = options[depth]
        for tag in tags:
            found = search(depth + 1, rows + exact_phase_rows(problem, node_id, tag))
            if found is not None:
                return found
        return None

    solution = search(0, [])
    return finish(STATUS_SAT if solution is not None else STATUS_UNSAT, solution)
