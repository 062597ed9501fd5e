"""
鲁棒性查询
把安全余量、强分类、平滑噪声和幅度有界噪声查询翻译成合取性质 ψ 并调用验证器
"""

from typing import Dict, List, Optional, Sequence, Set, Tuple

from pwlverify.config import NODE_TYPE_INPUT
from pwlverify.errors import VerifierError
from pwlverify.logger import get_logger
from pwlverify.network import LinearConstraint, Network, VerificationProblem, classify, with_property
from pwlverify.schemas import (
    BoundedNoiseQuery, MarginProbe, MarginQuery, MarginResult, SmoothNoiseQuery,
    StrongClassQuery, VerificationResult, VerifierConfig
)
from pwlverify.verifier import verify

logger = get_logger(__name__)

Box = Dict[str, Tuple[float, float]]


def box_constraints(box: Box) -> List[LinearConstraint]:
    """每个输入区间生成两条单变量约束"""
    constraints = []
    for node_id, (lower, upper) in box.items():
        constraints.append(LinearConstraint("<=", lower, ((1.0, node_id),)))
        constraints.append(LinearConstraint(">=", upper, ((1.0, node_id),)))
    return constraints


def input_constraints(problem: VerificationProblem) -> List[LinearConstraint]:
    """文件中约束输入节点的单变量约束，输出约束被丢弃"""
    net = problem.network
    return [
        c for c in problem.property
        if len(c.terms) == 1 and net.node(c.terms[0][1]).node_type == NODE_TYPE_INPUT
    ]


def class_gap(net: Network, winner: int, loser: int, delta: float = 0.0) -> LinearConstraint:
    """y_winner - y_loser >= delta，类别从1开始"""
    ids = net.output_order
    return LinearConstraint("<=", delta, ((1.0, ids[winner - 1]), (-1.0, ids[loser - 1])))


def _check_class(net: Network, label: int):
    if not 1 <= label <= net.m:
        raise VerifierError("E_CLASS_RANGE", f"类别 {label} 超出范围 1..{net.m}")


def _restricted_problem(problem: VerificationProblem, constraints: List[LinearConstraint]) -> VerificationProblem:
    return with_property(problem, constraints, keep_existing=False)


def border_indices(width: int, height: int, border: int) -> Set[int]:
    """按行展开后位于边框内的像素下标"""
    frozen = set()
    for row in range(height):
        for col in range(width):
            if min(row, col, height - 1 - row, width - 1 - col) < border:
                frozen.add(row * width + col)
    return frozen


def adjacent_pairs(width: int, height: int) -> List[Tuple[int, int]]:
    """4-邻接的像素对"""
    pairs = []
    for row in range(height):
        for col in range(width):
            p = row * width + col
            if col + 1 < width:
                pairs.append((p, p + 1))
            if row + 1 < height:
                pairs.append((p, p + width))
    return pairs


def _check_grid(net: Network, base: Sequence[float], width: int, height: int):
    if len(base) != width * height or net.n != width * height:
        raise VerifierError(
            "E_GRID_MISMATCH",
            f"网格 {width}x{height} 与基准图像长度 {len(base)}、网络输入个数 {net.n} 不一致"
        )


def _meet_file_box(problem: VerificationProblem, box: Box) -> Box:
    file_box = problem.input_box()
    return {
        node_id: (max(lower, file_box[node_id][0]), min(upper, file_box[node_id][1]))
        for node_id, (lower, upper) in box.items()
    }


# ---------- 安全余量 ----------

def margin_property(
    problem: VerificationProblem,
    query: MarginQuery,
    epsilon: float,
    base_class: int,
    competitor: int
) -> VerificationProblem:
    """ε-邻域(冻结坐标固定在基准值)与文件中的输入区间求交，再加上 y_competitor >= y_base"""
    net = problem.network
    frozen = _frozen_coordinates(net, query)
    box = {}
    for i, node_id in enumerate(net.input_order):
        radius = 0.0 if i in frozen else epsilon
        box[node_id] = (query.base[i] - radius, query.base[i] + radius)
    box = _meet_file_box(problem, box)
    return _restricted_problem(problem, box_constraints(box) + [class_gap(net, competitor, base_class)])


def _frozen_coordinates(net: Network, query: MarginQuery) -> Set[int]:
    frozen = set(query.frozen)
    if query.grid_width is not None or query.grid_height is not None:
        width, height = query.grid_width or 0, query.grid_height or 0
        _check_grid(net, query.base, width, height)
        frozen |= border_indices(width, height, query.border)
    bad = [i for i in frozen if not 0 <= i < net.n]
    if bad:
        raise VerifierError("E_ARITY", f"冻结坐标越界: {sorted(bad)}")
    return frozen


def robust_at(
    problem: VerificationProblem,
    query: MarginQuery,
    epsilon: float,
    base_class: int,
    config: Optional[VerifierConfig] = None
) -> MarginProbe:
    """对每个竞争类别各做一次验证，全部 UNSAT 才算鲁棒"""
    for competitor in range(1, problem.network.m + 1):
        if competitor == base_class:
            continue
        result = verify(margin_property(problem, query, epsilon, base_class, competitor), config)
        if result.satisfiable:
            return MarginProbe(
                epsilon=epsilon, robust=False,
                counterexample=result.witness, competitor=competitor
            )
    return MarginProbe(epsilon=epsilon, robust=True)


def margin_query(
    problem: VerificationProblem,
    query: MarginQuery,
    config: Optional[VerifierConfig] = None
) -> MarginResult:
    """
    二分搜索最大的鲁棒 ε

    先测试 hi，鲁棒则直接返回；否则在 [lo, hi] 上二分，区间宽度不超过 precision 时停止，
    返回已知鲁棒的最大 ε。误分类按 y_j >= y_b (非严格) 判定。

    Args:
        problem: 网络(文件中的输入区间会与 ε-邻域求交)
        query: 查询参数
        config: 验证配置

    Returns:
        MarginResult: 找到的 ε 与每次测试记录

    Raises:
        VerifierError: E_MISCLASSIFIED_BASE, E_ARITY, E_GRID_MISMATCH

    使用样例:
        result = margin_query(problem, MarginQuery(base=[0.52]))
        print(result.epsilon)
    """
    net = problem.network
    base_class = classify(net, query.base)
    if query.expected_class is not None and query.expected_class != base_class:
        raise VerifierError(
            "E_MISCLASSIFIED_BASE",
            f"基准点被分为第{base_class}类，期望第{query.expected_class}类"
        )

    probes: List[MarginProbe] = []
    top = robust_at(problem, query, query.hi, base_class, config)
    probes.append(top)
    if top.robust:
        logger.info(f"在上端 ε={query.hi} 处仍然鲁棒")
        return MarginResult(epsilon=query.hi, robust_at_hi=True, base_class=base_class, probes=probes)

    lo, hi = query.lo, query.hi
    while hi - lo > query.precision:
        mid = (lo + hi) / 2.0
        probe = robust_at(problem, query, mid, base_class, config)
        probes.append(probe)
        if probe.robust:
            lo = mid
        else:
            hi = mid
        logger.debug(f"二分: ε={mid:.6f} 鲁棒={probe.robust}", extra={"lo": lo, "hi": hi})

    logger.info(f"安全余量 ε={lo:.6f}", extra={"probes": len(probes), "base_class": base_class})
    return MarginResult(epsilon=lo, robust_at_hi=False, base_class=base_class, probes=probes)


# ---------- 强分类 ----------

def strongclass_property(problem: VerificationProblem, query: StrongClassQuery) -> VerificationProblem:
    """输入区间 ∧ 对所有 j≠i: y_i - y_j >= δ"""
    net = problem.network
    _check_class(net, query.target_class)
    if query.box is not None:
        if len(query.box) != net.n or any(len(pair) != 2 for pair in query.box):
            raise VerifierError("E_ARITY", f"输入区间需要 {net.n} 个 [l, u]")
        box_part = box_constraints({
            node_id: (pair[0], pair[1]) for node_id, pair in zip(net.input_order, query.box)
        })
    else:
        box_part = input_constraints(problem)
    gaps = [
        class_gap(net, query.target_class, j, query.delta)
        for j in range(1, net.m + 1) if j != query.target_class
    ]
    return _restricted_problem(problem, box_part + gaps)


def strongclass_query(
    problem: VerificationProblem,
    query: StrongClassQuery,
    config: Optional[VerifierConfig] = None
) -> VerificationResult:
    """
    寻找被强分类到目标类别的输入

    使用样例:
        result = strongclass_query(problem, StrongClassQuery(target_class=1, delta=0.5))
    """
    return verify(strongclass_property(problem, query), config)


# ---------- 噪声模型 ----------

def _misclassification(net: Network, base: Sequence[float], target_class: int) -> LinearConstraint:
    _check_class(net, target_class)
    base_class = classify(net, base)
    if base_class == target_class:
        raise VerifierError("E_CLASS_RANGE", f"目标类别 {target_class} 与基准图像的分类相同")
    return class_gap(net, target_class, base_class)


def _steps_to_frame(width: int, height: int, border: int, index: int) -> int:
    """到零噪声区域的步数: 边框像素为0，图像外一圈视为零噪声"""
    row, col = divmod(index, width)
    return max(0, min(row, col, height - 1 - row, width - 1 - col) - border + 1)


def smoothnoise_property(problem: VerificationProblem, query: SmoothNoiseQuery) -> VerificationProblem:
    """
    平滑噪声性质: 噪声 = 输入 - 基准；4-邻接像素的噪声差绝对值不超过 bound，边框噪声为0

    图像外一圈按零噪声处理，因此 bound 为0时噪声恒为0。
    每个像素的区间取基准值 ± 步数·bound，再与文件中的输入区间求交。
    """
    net = problem.network
    base, width, height = query.base, query.width, query.height
    _check_grid(net, base, width, height)
    ids = net.input_order

    box = {}
    for p, node_id in enumerate(ids):
        radius = _steps_to_frame(width, height, query.border, p) * query.bound
        box[node_id] = (base[p] - radius, base[p] + radius)
    box = _meet_file_box(problem, box)

    constraints = box_constraints(box)
    for p, q in adjacent_pairs(width, height):
        offset = base[p] - base[q]
        terms = ((1.0, ids[p]), (-1.0, ids[q]))
        constraints.append(LinearConstraint("<=", offset - query.bound, terms))
        constraints.append(LinearConstraint(">=", offset + query.bound, terms))
    constraints.append(_misclassification(net, base, query.target_class))
    return _restricted_problem(problem, constraints)


def smoothnoise_query(
    problem: VerificationProblem,
    query: SmoothNoiseQuery,
    config: Optional[VerifierConfig] = None
) -> VerificationResult:
    """平滑噪声下能否误分到目标类别"""
    return verify(smoothnoise_property(problem, query), config)


def boundednoise_property(problem: VerificationProblem, query: BoundedNoiseQuery) -> VerificationProblem:
    """幅度有界噪声: |输入 - 基准| <= amplitude，边框噪声为0，并与文件中的输入区间求交"""
    net = problem.network
    base, width, height = query.base, query.width, query.height
    _check_grid(net, base, width, height)
    frozen = border_indices(width, height, query.border)
    box = {}
    for p, node_id in enumerate(net.input_order):
        radius = 0.0 if p in frozen else query.amplitude
        box[node_id] = (base[p] - radius, base[p] + radius)
    box = _meet_file_box(problem, box)
    constraints = box_constraints(box) + [_misclassification(net, base, query.target_class)]
    return _restricted_problem(problem, constraints)


def boundednoise_query(
    problem: VerificationProblem,
    query: BoundedNoiseQuery,
    config: Optional[VerifierConfig] = None
) -> VerificationResult:
    """幅度有界噪声下能否误分到目标类别"""
    return verify(boundednoise_property(problem, query), config)
