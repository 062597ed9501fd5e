"""
SAT 核心测试: 单元传播、冲突学习、分支、可扩展性检查与独热相位编码
"""

import itertools

import numpy as np
import pytest

from pwlverify.errors import RootConflict, VerifierError
from pwlverify.network import parse_network
from pwlverify.sat import SatSolver, init_phase_encoding, luby


def _solver(num_vars: int) -> SatSolver:
    solver = SatSolver()
    for _ in range(num_vars):
        solver.new_var()
    return solver


def _pigeonhole(pigeons: int, holes: int) -> SatSolver:
    solver = _solver(pigeons * holes)

    def var(i, h):
        return i * holes + h + 1

    for i in range(pigeons):
        solver.add_clause([var(i, h) for h in range(holes)])
    for h in range(holes):
        for i, j in itertools.combinations(range(pigeons), 2):
            solver.add_clause([-var(i, h), -var(j, h)])
    return solver


def _random_cnf(seed: int, num_vars: int) -> list:
    """随机 3-CNF，子句数为变量数的 2 到 5 倍"""
    rng = np.random.default_rng(seed)
    clauses = []
    for _ in range(int(rng.integers(2 * num_vars, 5 * num_vars + 1))):
        chosen = rng.choice(num_vars, size=3, replace=False) + 1
        signs = rng.choice([-1, 1], size=3)
        clauses.append([int(v * s) for v, s in zip(chosen, signs)])
    return clauses


def _satisfies(model, clause) -> bool:
    return any(model[abs(lit) - 1] == (lit > 0) for lit in clause)


def _models(clauses, num_vars: int) -> list:
    return [
        model for model in itertools.product((False, True), repeat=num_vars)
        if all(_satisfies(model, clause) for clause in clauses)
    ]


def _unit_closure(clauses, assumed):
    """逐条扫描子句的朴素单元传播，返回 (已赋值文字集合, 是否冲突)"""
    assigned = set(assumed)
    changed = True
    while changed:
        changed = False
        for clause in clauses:
            if any(lit in assigned for lit in clause):
                continue
            open_lits = [lit for lit in clause if -lit not in assigned]
            if not open_lits:
                return assigned, True
            if len(open_lits) == 1:
                assigned.add(open_lits[0])
                changed = True
    return assigned, False


def _load(clauses, num_vars: int):
    """把子句逐条加入新求解器，第0层冲突时返回 None"""
    solver = _solver(num_vars)
    try:
        for clause in clauses:
            solver.add_clause(clause)
    except RootConflict:
        return None
    return solver


def test_luby_sequence():
    """Luby 序列前七项"""
    assert [luby(i) for i in range(1, 8)] == [1, 1, 2, 1, 1, 2, 4]


def test_unit_propagation():
    """(a∨b) ∧ (¬a) 推出 ¬a, b"""
    solver = _solver(2)
    assert solver.add_clause([1, 2]) is None
    assert solver.add_clause([-1]) is None
    assert solver.value(1) is False
    assert solver.value(2) is True
    assert solver.decision_level == 0


def test_root_conflict():
    """(a) ∧ (¬a) 在第0层冲突"""
    solver = _solver(1)
    solver.add_clause([1])
    with pytest.raises(RootConflict):
        solver.add_clause([-1])


def test_empty_clause():
    """空子句直接不可满足"""
    solver = _solver(1)
    with pytest.raises(RootConflict) as exc_info:
        solver.add_clause([])
    assert exc_info.value.code == "E_ROOT_CONFLICT"


def test_tautology_is_ignored():
    """重言式不进入子句库"""
    solver = _solver(1)
    assert solver.add_clause([1, -1]) is None
    assert solver.clauses == []


def test_single_decision_conflict_learns_unit():
    """单个决策导致冲突时学到否定该决策的单元子句"""
    solver = _solver(2)
    solver.add_clause([-1, 2])
    solver.add_clause([-1, -2])
    conflict = solver.assign_decision(1)
    assert conflict is not None
    learned, back = solver.analyze_conflict(conflict)
    assert learned == [-1]
    assert back == 0
    solver.backjump(back)
    solver.add_clause(learned, learned=True)
    assert solver.value(1) is False
    assert solver.stats.learned == 1


def test_decide_default_and_activity():
    """无活跃度时选编号最小的变量取正相位；冲突后优先选被提升的变量"""
    solver = _solver(8)
    assert solver.decide() == 1
    solver.add_clause([-7, 8])
    solver.add_clause([-7, -8])
    conflict = solver.assign_decision(7)
    learned, back = solver.analyze_conflict(conflict)
    solver.backjump(back)
    solver.add_clause(learned, learned=True)
    solver.backjump(0)
    assert solver.value(7) is False
    assert abs(solver.decide()) == 8


def test_decisions_are_deterministic():
    """相同实例两次求解的决策序列相同"""
    traces = []
    for _ in range(2):
        solver = _pigeonhole(3, 3)
        assert solver.solve()
        traces.append(list(solver.trail))
    assert traces[0] == traces[1]


def test_solve_pigeonhole():
    """3个鸽子2个洞不可满足，3个鸽子3个洞可满足且模型满足所有子句"""
    assert not _pigeonhole(3, 2).solve()
    solver = _pigeonhole(3, 3)
    assert solver.solve()
    assert solver.is_complete()
    assert all(solver.is_satisfied(clause) for clause in solver.clauses)


def test_extendable():
    """只看子句判断部分赋值能否扩展，且不改变求解器状态"""
    solver = _solver(2)
    solver.add_clause([-1, 2])
    solver.add_clause([-2])
    assert not solver.extendable([1])
    assert solver.extendable([])
    assert solver.trail == [-2, -1]

    other = _solver(2)
    other.add_clause([1, 2])
    other.add_clause([-1, -2])
    assert other.extendable([1])
    assert not other.extendable([1, 2])
    assert other.trail == []


def test_encoding_counts():
    """2个 ReLU 与1个二前驱 MaxPool: 6个变量、6个子句"""
    net = parse_network(
        "Input x\nReLU r1 0.0 1.0 x\nReLU r2 0.0 -1.0 x\nMaxPool m r1 r2\n"
    ).network
    solver, encoding = init_phase_encoding(net)
    assert solver.num_vars == 6
    assert len(solver.clauses) == 6
    assert encoding.node_vars["m"] == [encoding.literal("m", "r1"), encoding.literal("m", "r2")]
    # 默认分支选择第一个 ReLU 的 >=0 相位
    assert solver.decide() == encoding.literal("r1", ">=0")


def test_encoding_maxpool_fan_in():
    """四前驱 MaxPool 有 1+6 个子句，单前驱 MaxPool 的边变量在第0层为真"""
    net = parse_network("Input a\nInput b\nInput c\nInput d\nMaxPool m a b c d\n").network
    solver, _ = init_phase_encoding(net)
    assert len(solver.clauses) == 7

    net = parse_network("Input a\nMaxPool m a\n").network
    solver, encoding = init_phase_encoding(net)
    lit = encoding.literal("m", "a")
    assert solver.value(lit) is True
    assert solver.level[lit] == 0


def test_encoding_fixture_round_trip():
    """轨迹中的正文字读出相位组合"""
    net = parse_network("Input x\nReLU r1 0.0 1.0 x\nReLU r2 0.0 -1.0 x\n").network
    solver, encoding = init_phase_encoding(net)
    solver.assign_decision(encoding.literal("r1", "<=0"))
    fixture = encoding.fixture(solver.trail)
    assert fixture == {"r1": "<=0"}
    assert encoding.fixture_literals(fixture) == [encoding.literal("r1", "<=0")]
    assert not encoding.is_complete(fixture)


def test_decide_when_complete():
    """没有未赋值变量时 decide 报错"""
    solver = _solver(1)
    solver.add_clause([1])
    with pytest.raises(VerifierError) as exc_info:
        solver.decide()
    assert exc_info.value.code == "E_ALL_ASSIGNED"


@pytest.mark.parametrize("seed", range(40))
def test_propagation_matches_naive_closure(seed):
    """随机 3-CNF 上每次决策后的传播结果与朴素单元传播一致"""
    clauses = _random_cnf(seed, 8)
    closure, conflict = _unit_closure(clauses, [])
    solver = _load(clauses, 8)
    if solver is None:
        assert conflict
        return
    assert not conflict
    assert set(solver.trail) == closure

    rng = np.random.default_rng([seed, 1])
    decisions = []
    while not solver.is_complete():
        free = [v for v in range(1, 9) if solver.value(v) is None]
        var = int(rng.choice(free))
        decisions.append(var if rng.random() < 0.5 else -var)
        result = solver.assign_decision(decisions[-1])
        closure, conflict = _unit_closure(clauses, decisions)
        assert (result is not None) == conflict
        if conflict:
            break
        assert set(solver.trail) == closure


@pytest.mark.parametrize("seed", range(60))
def test_solve_matches_truth_table(seed):
    """随机 3-CNF 的求解结论与真值表一致，模型满足所有原始子句"""
    clauses = _random_cnf(seed, 10)
    models = _models(clauses, 10)
    solver = _load(clauses, 10)
    if solver is None:
        assert not models
        return
    assert solver.solve() == bool(models)
    if models:
        assert all(solver.is_satisfied(clause) for clause in clauses)


def test_learned_clauses_are_implied():
    """每条学习子句在原始子句的所有模型上都成立"""
    total = 0
    for seed in range(60):
        clauses = _random_cnf(seed, 10)
        solver = _load(clauses, 10)
        if solver is None:
            continue
        solver.solve()
        models = _models(clauses, 10)
        learned = [c for c, flag in zip(solver.clauses, solver.learned_flags) if flag]
        total += len(learned)
        for clause in learned:
            assert all(_satisfies(model, clause) for model in models)
    assert total > 0


@pytest.mark.parametrize("seed", range(30))
def test_extendable_matches_truth_table(seed):
    """部分赋值可扩展当且仅当存在与之相容的模型"""
    clauses = _random_cnf(seed, 8)
    models = _models(clauses, 8)
    solver = _load(clauses, 8)
    if solver is None:
        assert not models
        return
    trail = list(solver.trail)
    rng = np.random.default_rng([seed, 2])
    for _ in range(12):
        chosen = rng.choice(8, size=int(rng.integers(0, 5)), replace=False) + 1
        partial = [int(v) if rng.random() < 0.5 else -int(v) for v in chosen]
        expected = any(all(_satisfies(model, [lit]) for lit in partial) for model in models)
        assert solver.extendable(partial) == expected
    assert solver.trail == trail
