"""
隐含相位推断
在部分相位组合下做一次前向、一次反向区间传播，推出被隐含的节点相位并生成子句
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Set

from pwlverify.config import (
    NODE_TYPE_INPUT, NODE_TYPE_RELU, NODE_TYPE_MAXPOOL,
    PHASE_ACTIVE, PHASE_INACTIVE, SAFETY_MARGIN
)
from pwlverify.errors import EmptyIntervalError
from pwlverify.logger import get_logger
from pwlverify.network import Network
from pwlverify.relaxation import BoundsMap, Interval, interval_sum
from pwlverify.sat import Clause, PhaseEncoding, PhaseFixture

logger = get_logger(__name__)

# 区间上下界交叉超过该值才视为空
EMPTY_TOLERANCE = 1e-9


@dataclass
class FixtureIntervals:
    """相位组合下的节点区间"""
    value: Dict[str, Interval]
    pre: Dict[str, Interval]
    sweeps: int = 0


def _meet(node_id: str, a: Interval, b: Interval) -> Interval:
    lower, upper = max(a[0], b[0]), min(a[1], b[1])
    if lower > upper + EMPTY_TOLERANCE:
        raise EmptyIntervalError(node_id)
    return lower, max(lower, upper)


def propagate_intervals(net: Network, bounds: BoundsMap, fixture: PhaseFixture) -> FixtureIntervals:
    """
    前向拓扑序传播一次区间(遵守相位固定)，再反向处理 MaxPool 节点一次

    反向规则:
        MaxPool 的上界压到所有前驱上；
        除一个前驱外其余前驱上界都低于 MaxPool 下界时，抬高剩余前驱的下界；
        固定到某条边的 MaxPool，其前驱取二者区间的交。

    Raises:
        EmptyIntervalError: 某个节点的区间为空

    使用样例:
        intervals = propagate_intervals(net, bounds, {"r1": "<=0"})
        print(intervals.value["m"])
    """
    value: Dict[str, Interval] = {}
    pre: Dict[str, Interval] = {}

    for node in net.nodes:
        node_id = node.id
        if node.node_type == NODE_TYPE_INPUT:
            value[node_id] = bounds.value[node_id]
        elif node.node_type == NODE_TYPE_RELU:
            interval = _meet(node_id, interval_sum(net, node_id, value), bounds.pre[node_id])
            phase = fixture.get(node_id)
            if phase == PHASE_INACTIVE:
                interval = _meet(node_id, interval, (-math.inf, 0.0))
                out = (0.0, 0.0)
            elif phase == PHASE_ACTIVE:
                interval = _meet(node_id, interval, (0.0, math.inf))
                out = interval
            else:
                out = (max(interval[0], 0.0), max(interval[1], 0.0))
            pre[node_id] = interval
            value[node_id] = _meet(node_id, out, bounds.value[node_id])
        elif node.node_type == NODE_TYPE_MAXPOOL:
            preds = [value[e.source] for e in net.predecessors(node_id)]
            out = (max(l for l, _ in preds), max(u for _, u in preds))
            chosen = fixture.get(node_id)
            if chosen is not None:
                out = _meet(node_id, out, value[chosen])
            value[node_id] = _meet(node_id, out, bounds.value[node_id])
        else:
            value[node_id] = _meet(node_id, interval_sum(net, node_id, value), bounds.value[node_id])

    for node in reversed(net.nodes):
        node_id = node.id
        if node.node_type == NODE_TYPE_MAXPOOL:
            lower, upper = value[node_id]
            sources = [e.source for e in net.predecessors(node_id)]
            for source in sources:
                value[source] = _meet(source, value[source], (-math.inf, upper))
            chosen = fixture.get(node_id)
            if chosen is not None:
                value[chosen] = _meet(chosen, value[chosen], (lower, upper))
            candidates = [s for s in sources if value[s][1] >= lower - EMPTY_TOLERANCE]
            if not candidates:
                raise EmptyIntervalError(node_id)
            if len(candidates) == 1:
                source = candidates[0]
                value[source] = _meet(source, value[source], (lower, math.inf))
        elif node.node_type == NODE_TYPE_RELU:
            lower, upper = value[node_id]
            pre_lower, pre_upper = pre[node_id]
            pre_upper = min(pre_upper, upper)
            if lower > 0.0:
                pre_lower = max(pre_lower, lower)
            pre[node_id] = _meet(node_id, (pre_lower, pre_upper), pre[node_id])

    return FixtureIntervals(value=value, pre=pre, sweeps=2)


def implied_phases(net: Network, intervals: FixtureIntervals, fixture: PhaseFixture) -> Dict[str, str]:
    """根据区间推出未固定节点的相位"""
    implied: Dict[str, str] = {}
    for node in net.nodes:
        node_id = node.id
        if node_id in fixture:
            continue
        if node.node_type == NODE_TYPE_RELU:
            pre_lower, pre_upper = intervals.pre[node_id]
            lower, upper = intervals.value[node_id]
            if pre_lower > SAFETY_MARGIN or lower > SAFETY_MARGIN:
                implied[node_id] = PHASE_ACTIVE
            elif pre_upper <= 0.0:
                implied[node_id] = PHASE_INACTIVE
        elif node.node_type == NODE_TYPE_MAXPOOL:
            sources = [e.source for e in net.predecessors(node_id)]
            if len(sources) < 2:
                continue
            for source in sources:
                others = [intervals.value[s][1] for s in sources if s != source]
                if intervals.value[source][0] > max(others) + SAFETY_MARGIN:
                    implied[node_id] = source
                    break
            else:
                lower = intervals.value[node_id][0]
                open_sources = [
                    s for s in sources if not (lower > intervals.value[s][1] + SAFETY_MARGIN)
                ]
                if len(open_sources) == 1:
                    implied[node_id] = open_sources[0]
    return implied


def infer_node_phases(
    net: Network,
    bounds: BoundsMap,
    fixture: PhaseFixture,
    encoding: PhaseEncoding,
    known: Optional[Set[frozenset]] = None
) -> List[Clause]:
    """
    推出当前相位组合隐含的相位，返回 (∨¬p) ∨ 隐含文字 形式的子句

    区间为空时返回单个冲突子句 (∨¬p)。

    Args:
        net: 网络
        bounds: 全局界
        fixture: 当前相位组合
        encoding: 相位编码
        known: 已在子句库中的子句，用于跳过重复

    Returns:
        list: 子句列表
    """
    blame = [-lit for lit in encoding.fixture_literals(fixture)]
    try:
        intervals = propagate_intervals(net, bounds, fixture)
    except EmptyIntervalError as e:
        logger.debug(f"相位组合下区间为空: {e.node_id}", extra={"fixture_size": len(fixture)})
        return [blame]

    clauses = []
    for node_id, tag in implied_phases(net, intervals, fixture).items():
        clause = blame + [encoding.literal(node_id, tag)]
        if known is not None and frozenset(clause) in known:
            continue
        clauses.append(clause)
    return clauses
