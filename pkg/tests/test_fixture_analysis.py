"""
相位组合分析测试: 可行性检查、弹性过滤、紧致性目标、可行组合缓存与附加子句
"""

import itertools

import numpy as np
import pytest

from pwlverify.config import PHASE_ACTIVE, PHASE_INACTIVE
from pwlverify.errors import VerifierError
from pwlverify.fixtures import (
    AnalysisCounters, FeasibleCache, check_feasibility, elastic_filter,
    fixture_constraints, inferred_clause, tight_objective, tight_set
)
from pwlverify.network import parse_problem
from pwlverify.relaxation import build_relaxation, compute_initial_bounds
from pwlverify.sat import init_phase_encoding

RELU_PROBLEM = (
    "Input x\n"
    "ReLU y 0.0 1.0 x\n"
    "Assert >= 1.0 1.0 x\n"
    "Assert <= -1.0 1.0 x\n"
    "Assert <= 0.5 1.0 y\n"
)

# x 在 [0.5, 1] 内，y 的相位由区间确定
POSITIVE_PROBLEM = (
    "Input x\n"
    "ReLU y 0.0 1.0 x\n"
    "Assert <= 0.5 1.0 x\n"
    "Assert >= 1.0 1.0 x\n"
)

# r0 ≤0 与 y = x >= 0.5 矛盾，其余三个相位单独都可行
CORE_PROBLEM = (
    "Input x\n"
    "Linear y 0.0 1.0 x\n"
    "ReLU r0 0.0 1.0 x\n"
    "ReLU r1 0.0 0.5 x\n"
    "ReLU r2 2.0 -1.0 x\n"
    "ReLU r3 -2.0 1.0 x\n"
    "Assert >= 1.0 1.0 x\n"
    "Assert <= -1.0 1.0 x\n"
    "Assert <= 0.5 1.0 y\n"
)


def _setup(text: str):
    problem = parse_problem(text)
    lp = build_relaxation(problem, compute_initial_bounds(problem))
    _, encoding = init_phase_encoding(problem.network)
    return problem.network, lp, encoding


def test_inactive_fixture_conflict():
    """y 固定为 ≤0 与 y >= 0.5 矛盾，冲突子句为该相位文字的否定"""
    net, lp, encoding = _setup(RELU_PROBLEM)
    counters = AnalysisCounters()
    report = check_feasibility(net, lp, {"y": "<=0"}, encoding, counters=counters)
    assert not report.feasible
    assert report.blamed == {"y": "<=0"}
    assert report.conflict_clause == [-encoding.literal("y", "<=0")]
    assert report.clauses == [report.conflict_clause]
    assert counters.conflict_clauses == 1
    assert lp.batch_names() == []


def test_active_fixture_is_exact():
    """y 固定为 ≥0 且 x 在 [0.2, 1] 时可行，d_y = c_y"""
    net, lp, encoding = _setup(
        "Input x\nReLU y 0.0 1.0 x\nAssert <= 0.2 1.0 x\nAssert >= 1.0 1.0 x\n"
    )
    report = check_feasibility(net, lp, {"y": ">=0"}, encoding)
    assert report.feasible
    assert report.solution["d_y"] == pytest.approx(report.solution["c_y"])
    assert "y" in report.tight_nodes


def test_feasible_fixture_is_cached():
    """空组合可行，y 紧致并进入缓存；再次查询命中缓存且不求解 LP"""
    net, lp, encoding = _setup(POSITIVE_PROBLEM)
    cache = FeasibleCache()
    counters = AnalysisCounters()
    report = check_feasibility(net, lp, {}, encoding, cache, counters)
    assert report.feasible
    assert not report.from_cache
    assert report.tight_phases == {"y": ">=0"}
    assert cache.hit([encoding.literal("y", ">=0")])
    assert not cache.hit([encoding.literal("y", "<=0")])

    solves = counters.lp_solves
    again = check_feasibility(net, lp, {}, encoding, cache, counters)
    assert again.feasible and again.from_cache
    assert counters.lp_solves == solves
    assert counters.cache_hits == 1


def test_cache_capacity():
    """缓存满时淘汰最早的条目"""
    cache = FeasibleCache(capacity=2)
    cache.add([1])
    cache.add([2])
    cache.add([3])
    assert len(cache) == 2
    assert not cache.hit([1])
    assert cache.hit([3])


def test_tight_objective_weights():
    """未固定 ReLU 权重为1，未固定 MaxPool 权重为0.1"""
    net, _, _ = _setup(
        "Input x\nReLU r1 0.0 1.0 x\nReLU r2 0.0 -1.0 x\nMaxPool m r1 r2\n"
        "Assert <= -1.0 1.0 x\nAssert >= 1.0 1.0 x\n"
    )
    assert tight_objective(net, {}) == {"d_r1": 1.0, "d_r2": 1.0, "d_m": 0.1}
    assert tight_objective(net, {"r1": "<=0"}) == {"d_r2": 1.0, "d_m": 0.1}
    assert tight_objective(net, {"r1": "<=0", "r2": ">=0", "m": "r2"}) == {}


def test_tight_set():
    """ReLU 取值与 max(c, 0) 一致时紧致，MaxPool 取值等于某个前驱时紧致"""
    net, _, _ = _setup(
        "Input x\nReLU r1 0.0 1.0 x\nReLU r2 0.0 -1.0 x\nMaxPool m r1 r2\n"
        "Assert <= -1.0 1.0 x\nAssert >= 1.0 1.0 x\n"
    )
    solution = {
        "d_x": 0.5, "d_r1": 0.5, "c_r1": 0.5, "d_r2": 0.3, "c_r2": -0.2, "d_m": 0.5,
    }
    nodes, phases = tight_set(net, solution)
    assert nodes == {"r1", "m"}
    assert phases == {"r1": ">=0", "m": "r1"}

    solution.update({"d_r2": 0.0, "d_m": 0.6})
    nodes, phases = tight_set(net, solution)
    assert nodes == {"r1", "r2"}
    assert phases["r2"] == "<=0"


def test_inferred_clause_forces_active_phase():
    """x 在 [0.5, 1] 时最优解里 y 为正，推出子句 (x_{y,≥0})"""
    net, lp, encoding = _setup(POSITIVE_PROBLEM)
    report = check_feasibility(net, lp, {}, encoding)
    assert report.inferred == [encoding.literal("y", ">=0")]
    assert report.clauses == [report.inferred]


def test_inferred_clause_conditions():
    """所有未固定 ReLU 为0或子句为重言式时不推出子句"""
    net, _, encoding = _setup(RELU_PROBLEM)
    assert inferred_clause({}, {"d_x": 0.0, "d_y": 0.0, "c_y": 0.0}, net, encoding) is None
    assert inferred_clause({"y": ">=0"}, {"d_x": 0.6, "d_y": 0.6, "c_y": 0.6}, net, encoding) is None


def test_elastic_filter_finds_core():
    """四个相位中只有 r0 与 ψ 矛盾，弹性过滤只保留它"""
    net, lp, encoding = _setup(CORE_PROBLEM)
    fixture = {"r0": "<=0", "r1": ">=0", "r2": ">=0", "r3": "<=0"}
    counters = AnalysisCounters()
    sub, clause = elastic_filter(lp, net, fixture, encoding, counters)
    assert "r0" in sub
    assert len(sub) <= 2
    assert clause == [-lit for lit in encoding.fixture_literals(sub)]
    assert counters.elastic_iterations >= 2

    check = lp.copy()
    check.push_batch("fixture", [row for _, row in fixture_constraints(net, sub)])
    assert check.solve().infeasible


def _engineered_core(seed: int):
    """
    k 个互不相关的 ReLU r_i = ReLU(x_i - b_i)，ψ 只与其中一个或两个相位矛盾

    Returns:
        tuple: (问题文本, 完整相位组合, 唯一的最小不可行核)
    """
    rng = np.random.default_rng(seed)
    k = int(rng.integers(4, 7))
    offsets = rng.uniform(0.2, 0.8, size=k)
    lines = [f"Input x{i}" for i in range(k)]
    for i in range(k):
        lines.append(f"Linear s{i} 0.0 1.0 x{i}")
        lines.append(f"ReLU r{i} {-offsets[i]:.6f} 1.0 x{i}")
    for i in range(k):
        lines.append(f"Assert <= 0.0 1.0 x{i}")
        lines.append(f"Assert >= 1.0 1.0 x{i}")

    fixture = {f"r{i}": PHASE_ACTIVE if rng.random() < 0.5 else PHASE_INACTIVE for i in range(k)}
    j, other = (int(v) for v in rng.choice(k, size=2, replace=False))
    kind = seed % 3
    if kind == 0:
        # r_j 必须为正
        fixture[f"r{j}"] = PHASE_INACTIVE
        threshold = rng.uniform(0.05, 0.9) * (1.0 - offsets[j])
        lines.append(f"Assert <= {threshold:.6f} 1.0 r{j}")
        core = {f"r{j}"}
    elif kind == 1:
        # x_j 小于 b_j，预激活必为负
        fixture[f"r{j}"] = PHASE_ACTIVE
        gap = rng.uniform(0.05, 0.9) * offsets[j]
        lines.append(f"Assert >= {offsets[j] - gap:.6f} 1.0 s{j}")
        core = {f"r{j}"}
    else:
        # r_j + r_other 必须为正
        fixture[f"r{j}"] = fixture[f"r{other}"] = PHASE_INACTIVE
        threshold = rng.uniform(0.05, 0.9) * min(1.0 - offsets[j], 1.0 - offsets[other])
        lines.append(f"Assert <= {threshold:.6f} 1.0 r{j} 1.0 r{other}")
        core = {f"r{j}", f"r{other}"}
    return "\n".join(lines) + "\n", fixture, core


def _infeasible(lp, net, fixture) -> bool:
    check = lp.copy()
    check.push_batch("fixture", [row for _, row in fixture_constraints(net, fixture)])
    return check.solve().infeasible


def _minimal_cores(lp, net, fixture) -> list:
    """按子集大小枚举，找出所有最小的不可行子组合"""
    cores = []
    for size in range(1, len(fixture) + 1):
        for chosen in itertools.combinations(fixture, size):
            if any(core <= set(chosen) for core in cores):
                continue
            if _infeasible(lp, net, {v: fixture[v] for v in chosen}):
                cores.append(set(chosen))
    return cores


def test_elastic_filter_engineered_cores():
    """50个已知最小核的不可行组合: 返回的子组合不可行、包含该核，单节点核时至多两个节点"""
    for seed in range(50):
        text, fixture, core = _engineered_core(seed)
        net, lp, encoding = _setup(text)
        assert _minimal_cores(lp, net, fixture) == [core], seed

        sub, clause = elastic_filter(lp, net, fixture, encoding)
        assert sub.items() <= fixture.items()
        assert core <= set(sub)
        assert _infeasible(lp, net, sub)
        assert clause == [-lit for lit in encoding.fixture_literals(sub)]
        if len(core) == 1:
            assert len(sub) <= 2


def test_elastic_filter_singleton():
    """单个矛盾相位原样返回"""
    net, lp, encoding = _setup(RELU_PROBLEM)
    sub, clause = elastic_filter(lp, net, {"y": "<=0"}, encoding)
    assert sub == {"y": "<=0"}
    assert clause == [-encoding.literal("y", "<=0")]


def test_elastic_filter_requires_infeasible_fixture():
    """可行的相位组合违反前置条件"""
    net, lp, encoding = _setup(RELU_PROBLEM)
    with pytest.raises(VerifierError) as exc_info:
        elastic_filter(lp, net, {"y": ">=0"}, encoding)
    assert exc_info.value.code == "E_NOT_INFEASIBLE"


def test_fixture_constraints_reject_unknown_phase():
    """相位标签必须属于该节点"""
    net, _, _ = _setup(RELU_PROBLEM)
    with pytest.raises(VerifierError) as exc_info:
        fixture_constraints(net, {"y": "z"})
    assert exc_info.value.code == "E_UNKNOWN_NODE"
