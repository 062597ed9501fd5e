"""
随机网络与随机验证问题生成
同一个种子总是得到逐字节相同的 .pnet 文本
"""

from typing import List, Optional

import numpy as np

from pwlverify.config import RANDOM_BIAS_RANGE, RANDOM_WEIGHT_RANGE
from pwlverify.logger import get_logger
from pwlverify.network import evaluate, outputs, parse_problem
from pwlverify.schemas import NetworkShape

logger = get_logger(__name__)

# 校准随机输出约束时的采样点数
CALIBRATION_SAMPLES = 64


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def random_shape(seed: int) -> NetworkShape:
    """
    按种子挑选一个小网络形状: 2-4 个输入，至多 10 个 ReLU，至多 2 个前驱数不超过 3 的 MaxPool

    使用样例:
        shape = random_shape(7)
    """
    rng = np.random.default_rng([seed, 1])
    layers = int(rng.integers(1, 3))
    hidden = [int(w) for w in rng.integers(2, 6, size=layers)]
    fan_in = int(rng.integers(2, min(3, hidden[-1]) + 1))
    return NetworkShape(
        inputs=int(rng.integers(2, 5)),
        hidden=hidden,
        maxpools=int(rng.integers(0, 3)),
        pool_fan_in=fan_in,
        outputs=int(rng.integers(1, 4)),
        constraints=int(rng.integers(1, 3)),
    )


def gen_random_network(seed: int, shape: Optional[NetworkShape] = None) -> str:
    """
    生成随机的全连接 ReLU 网络，可带 MaxPool 层

    权重服从 [-1, 1] 均匀分布，偏置服从 [-0.5, 0.5] 均匀分布，输入区间为 [0, 1]。

    Args:
        seed: 随机种子
        shape: 网络形状，缺省使用 NetworkShape()

    Returns:
        str: 拓扑有序的 .pnet 文本

    使用样例:
        text = gen_random_network(3, NetworkShape(inputs=2, hidden=[4]))
    """
    shape = shape or NetworkShape()
    rng = np.random.default_rng(seed)
    lines: List[str] = [f"# random network, seed {seed}"]

    layer = [f"x{i}" for i in range(1, shape.inputs + 1)]
    lines.extend(f"Input {node_id}" for node_id in layer)

    for depth, width in enumerate(shape.hidden, 1):
        current = []
        for k in range(1, width + 1):
            node_id = f"r{depth}_{k}"
            bias = rng.uniform(-RANDOM_BIAS_RANGE, RANDOM_BIAS_RANGE)
            weights = rng.uniform(-RANDOM_WEIGHT_RANGE, RANDOM_WEIGHT_RANGE, size=len(layer))
            pairs = " ".join(f"{_fmt(w)} {src}" for w, src in zip(weights, layer))
            lines.append(f"ReLU {node_id} {_fmt(bias)} {pairs}")
            current.append(node_id)
        layer = current

    pools = []
    for k in range(1, shape.maxpools + 1):
        chosen = sorted(rng.choice(len(layer), size=shape.pool_fan_in, replace=False))
        node_id = f"m{k}"
        lines.append(f"MaxPool {node_id} " + " ".join(layer[i] for i in chosen))
        pools.append(node_id)
    layer = layer + pools

    for k in range(1, shape.outputs + 1):
        bias = rng.uniform(-RANDOM_BIAS_RANGE, RANDOM_BIAS_RANGE)
        weights = rng.uniform(-RANDOM_WEIGHT_RANGE, RANDOM_WEIGHT_RANGE, size=len(layer))
        pairs = " ".join(f"{_fmt(w)} {src}" for w, src in zip(weights, layer))
        lines.append(f"Linear y{k} {_fmt(bias)} {pairs}")

    for i in range(1, shape.inputs + 1):
        lines.append(f"Assert <= 0.000000 1.000000 x{i}")
        lines.append(f"Assert >= 1.000000 1.000000 x{i}")
    return "\n".join(lines) + "\n"


def gen_random_problem(seed: int, shape: Optional[NetworkShape] = None) -> str:
    """
    在随机网络上追加随机的合取输出性质

    每条约束形如 c <= Σ a·y，阈值 c 取采样输出范围内(或略高于)的随机位置，
    使语料中同时出现可满足与不可满足的实例。

    使用样例:
        problem = parse_problem(gen_random_problem(11))
    """
    shape = shape or random_shape(seed)
    text = gen_random_network(seed, shape)
    net = parse_problem(text).network
    rng = np.random.default_rng([seed, 2])

    samples = rng.random((CALIBRATION_SAMPLES, net.n))
    ys = np.array([outputs(net, evaluate(net, list(point))) for point in samples])

    lines = []
    for _ in range(shape.constraints):
        coeffs = rng.uniform(-1.0, 1.0, size=net.m)
        scores = ys @ coeffs
        low, high = float(scores.min()), float(scores.max())
        threshold = low + rng.uniform(0.2, 1.2) * (high - low)
        pairs = " ".join(f"{_fmt(a)} {node_id}" for a, node_id in zip(coeffs, net.output_order))
        lines.append(f"Assert <= {_fmt(threshold)} {pairs}")

    logger.debug(f"生成随机问题 seed={seed}", extra={"shape": shape.model_dump()})
    return text + "\n".join(lines) + "\n"
