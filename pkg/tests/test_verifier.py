"""
集成求解器测试: 简单实例、暴力枚举对照、随机语料一致性与消融配置
"""

import itertools

import numpy as np
import pytest

from pwlverify.config import CORPUS_SIZE
from pwlverify.errors import BudgetExceeded, VerifierError
from pwlverify.fixtures import check_feasibility
from pwlverify.generator import gen_random_network, gen_random_problem
from pwlverify.network import check_witness, evaluate, parse_problem, preactivations
from pwlverify.relaxation import build_relaxation, compute_initial_bounds
from pwlverify.sat import init_phase_encoding
from pwlverify.schemas import NetworkShape, VerifierConfig
from pwlverify.verifier import _phase_options, brute_force_oracle, verify

SAT_PROBLEM = (
    "Input x\n"
    "ReLU y 0.0 1.0 x\n"
    "Assert >= 1.0 1.0 x\n"
    "Assert <= -1.0 1.0 x\n"
    "Assert <= 0.5 1.0 y\n"
)

UNSAT_PROBLEM = SAT_PROBLEM + "Assert >= -0.5 1.0 x\n"


def test_trivial_sat():
    """y = ReLU(x) >= 0.5 可满足，证据通过精确检查"""
    problem = parse_problem(SAT_PROBLEM)
    result = verify(problem)
    assert result.status == "SAT"
    assert result.satisfiable
    assert check_witness(problem, result.witness)
    assert result.valuation["y"] >= 0.4999


def test_trivial_unsat():
    """x <= -0.5 时 y = 0，不可满足"""
    result = verify(parse_problem(UNSAT_PROBLEM))
    assert result.status == "UNSAT"
    assert result.witness is None


@pytest.mark.parametrize("text", [SAT_PROBLEM, UNSAT_PROBLEM])
def test_oracle_agrees_on_trivial_problems(text):
    """暴力枚举与验证器结论一致"""
    problem = parse_problem(text)
    assert brute_force_oracle(problem).status == verify(problem).status
    assert brute_force_oracle(problem, prune=True).status == verify(problem).status


def test_oracle_enumerates_every_fixture():
    """1个三前驱 MaxPool 与2个 ReLU 共 3·2·2 = 12 个相位组合"""
    problem = parse_problem(
        "Input a\nInput b\nInput c\n"
        "ReLU r1 0.0 1.0 a\n"
        "ReLU r2 0.0 1.0 b\n"
        "MaxPool m a b c\n"
        "Linear y 0.0 1.0 m 1.0 r1 1.0 r2\n"
        "Assert <= 0.0 1.0 a\nAssert >= 1.0 1.0 a\n"
        "Assert <= 0.0 1.0 b\nAssert >= 1.0 1.0 b\n"
        "Assert <= 0.0 1.0 c\nAssert >= 1.0 1.0 c\n"
        "Assert <= 10.0 1.0 y\n"
    )
    result = brute_force_oracle(problem)
    assert result.status == "UNSAT"
    assert result.stats.fixtures_enumerated == 12
    assert result.stats.lp_solves == 12


def test_oracle_cap():
    """相位组合数超过上限时报错"""
    problem = parse_problem(gen_random_problem(1))
    with pytest.raises(VerifierError) as exc_info:
        brute_force_oracle(problem, cap=1)
    assert exc_info.value.code == "E_TOO_LARGE"


def test_empty_input_box_is_unsat():
    """输入区间为空时直接不可满足"""
    result = verify(parse_problem(
        "Input x\nReLU y 0.0 1.0 x\nAssert <= 1.0 1.0 x\nAssert >= 0.0 1.0 x\n"
    ))
    assert result.status == "UNSAT"


@pytest.mark.parametrize("seed", range(CORPUS_SIZE))
def test_random_corpus_matches_oracle(seed):
    """随机小网络上的结论与暴力枚举一致，SAT 证据通过精确检查"""
    problem = parse_problem(gen_random_problem(seed))
    result = verify(problem)
    oracle = brute_force_oracle(problem, prune=True)
    assert result.status == oracle.status
    if result.satisfiable:
        assert check_witness(problem, result.witness)
    assert result.stats.idle_iterations == 0


@pytest.mark.parametrize("seed", range(0, 40, 4))
def test_ablations_agree(seed):
    """关闭缓存、推断或界收紧都不改变结论"""
    problem = parse_problem(gen_random_problem(seed))
    expected = verify(problem).status
    for switch in ("use_cache", "use_inference", "use_refinement"):
        config = VerifierConfig(**{switch: False})
        assert verify(problem, config).status == expected


def test_runs_are_deterministic():
    """同一问题两次运行的统计(除耗时外)完全相同"""
    problem = parse_problem(gen_random_problem(12))
    first = verify(problem)
    second = verify(problem)
    assert first.status == second.status
    assert first.witness == second.witness
    assert first.stats.without_time() == second.stats.without_time()


def test_stats_are_reported():
    """统计信息包含 LP 调用和界收紧次数"""
    result = verify(parse_problem(SAT_PROBLEM))
    assert result.stats.lp_solves >= 1
    assert result.stats.refine_sweeps >= 1
    assert result.stats.refine_lp_solves >= 1
    assert result.stats.wall_time >= 0.0


def test_time_budget():
    """时间预算耗尽时中止并报告 E_TIMEOUT"""
    with pytest.raises(BudgetExceeded) as exc_info:
        verify(parse_problem(SAT_PROBLEM), VerifierConfig(time_budget=1e-9))
    assert exc_info.value.code == "E_TIMEOUT"


def test_conflict_budget():
    """冲突预算为0时一旦出现冲突即中止"""
    config = VerifierConfig(conflict_budget=0, use_inference=False, use_refinement=False)
    for seed in range(40):
        problem = parse_problem(gen_random_problem(seed))
        try:
            verify(problem, config)
        except BudgetExceeded as e:
            assert e.code == "E_TIMEOUT"
            return
    pytest.skip("前40个种子都没有产生冲突")


def _pool_gadgets(seed: int) -> str:
    """
    k 组 m = MaxPool(p, q)，p = ReLU(a + c1) 恒为正且恒大于 q = ReLU(b - c2)

    区间推断在根上就能确定每个 MaxPool 取 p，不做推断时只能逐个分支。
    """
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    lines = []
    for g in range(k):
        lines += [f"Input a{g}", f"Input b{g}"]
    for g in range(k):
        lines.append(f"ReLU p{g} {rng.uniform(0.5, 0.9):.6f} 1.0 a{g}")
        lines.append(f"ReLU q{g} {-rng.uniform(0.6, 0.9):.6f} 1.0 b{g}")
        lines.append(f"MaxPool m{g} p{g} q{g}")
    for g in range(k):
        lines += [f"Assert <= 0.0 1.0 a{g}", f"Assert >= 1.0 1.0 a{g}"]
        lines += [f"Assert <= 0.0 1.0 b{g}", f"Assert >= 1.0 1.0 b{g}"]
    return "\n".join(lines) + "\n"


def test_inference_saves_lp_solves():
    """关闭推断后至少一半实例的 LP 调用次数严格增加，结论不变"""
    increased = 0
    seeds = range(20)
    for seed in seeds:
        problem = parse_problem(_pool_gadgets(seed))
        with_inference = verify(problem, VerifierConfig(use_cache=False))
        without = verify(problem, VerifierConfig(use_cache=False, use_inference=False))
        assert with_inference.status == without.status == "SAT"
        assert with_inference.stats.inference_clauses >= 1
        if without.stats.lp_solves > with_inference.stats.lp_solves:
            increased += 1
    assert increased >= len(seeds) / 2


@pytest.mark.parametrize("seed", range(10))
def test_complete_fixture_matches_exact_evaluation(seed):
    """完整相位组合下线性近似的解与精确前向计算一致(误差不超过 1e-5)"""
    hidden = [3] if seed % 2 else [2, 2]
    shape = NetworkShape(inputs=2, hidden=hidden, maxpools=1, pool_fan_in=2, outputs=2)
    problem = parse_problem(gen_random_network(seed, shape))
    net = problem.network
    lp = build_relaxation(problem, compute_initial_bounds(problem))
    _, encoding = init_phase_encoding(net)
    options = _phase_options(problem)

    feasible = 0
    for combination in itertools.product(*(tags for _, tags in options)):
        fixture = {node_id: tag for (node_id, _), tag in zip(options, combination)}
        report = check_feasibility(net, lp, fixture, encoding)
        if not report.feasible:
            continue
        feasible += 1
        solution = report.solution
        values = evaluate(net, [solution[f"d_{x}"] for x in net.input_order])
        for node_id, value in values.items():
            assert solution[f"d_{node_id}"] == pytest.approx(value, abs=1e-5)
        for node_id, value in preactivations(net, values).items():
            assert solution[f"c_{node_id}"] == pytest.approx(value, abs=1e-5)
    assert feasible >= 1


def test_unsat_answers_survive_sampling():
    """UNSAT 的问题在输入区间内随机取 10000 个点，没有一个满足 ψ"""
    problems = [parse_problem(UNSAT_PROBLEM)]
    problems += [parse_problem(gen_random_problem(seed)) for seed in range(30)]
    checked = 0
    for index, problem in enumerate(problems):
        if verify(problem).status != "UNSAT":
            continue
        checked += 1
        box = [problem.input_box()[x] for x in problem.network.input_order]
        lower = np.array([l for l, _ in box])
        upper = np.array([u for _, u in box])
        rng = np.random.default_rng(index)
        for point in lower + (upper - lower) * rng.random((10000, len(box))):
            values = evaluate(problem.network, list(point))
            assert not all(c.slack(values) >= 0.0 for c in problem.property), (index, list(point))
    assert checked >= 1
