"""
网络模型
分段线性前馈网络的表示、.pnet 解析与输出、精确前向计算和证据检查
"""

import math
import re
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import Dict, Iterable, List, Sequence, Tuple

from pwlverify.config import (
    NODE_TYPE_INPUT, NODE_TYPE_RELU, NODE_TYPE_MAXPOOL,
    PNET_KEYWORDS, SAFETY_MARGIN
)
from pwlverify.errors import ProblemFormatError, VerifierError
from pwlverify.logger import get_logger

logger = get_logger(__name__)

ID_PATTERN = re.compile(r"^[A-Za-z0-9_]+$")

# 节点取值映射 node id -> value
Valuation = Dict[str, float]


@dataclass(frozen=True)
class NodeDecl:
    """节点声明"""
    id: str
    node_type: str
    bias: float = 0.0


@dataclass(frozen=True)
class Edge:
    """带权边，MaxPool 的入边权重固定为 1.0 且不参与计算"""
    source: str
    target: str
    weight: float = 1.0


@dataclass(frozen=True)
class LinearConstraint:
    """
    性质 ψ 中的一条线性约束

    sense 沿用 Assert 关键字的写法:
        "<=" 表示 constant <= Σ coeff·value(id)
        ">=" 表示 constant >= Σ coeff·value(id)
    """
    sense: str
    constant: float
    terms: Tuple[Tuple[float, str], ...]

    def lhs(self, values: Dict[str, float]) -> float:
        return sum(coeff * values[node_id] for coeff, node_id in self.terms)

    def slack(self, values: Dict[str, float]) -> float:
        """
        计算约束的松弛量，非负表示满足

        使用样例:
            if constraint.slack(valuation) >= -1e-4:
                print("满足")
        """
        total = self.lhs(values)
        if self.sense == "<=":
            return total - self.constant
        return self.constant - total


@dataclass(frozen=True)
class Network:
    """
    加权有向无环图，节点按声明顺序(拓扑序)存储

    构造后不可变，可在线程间只读共享。
    """
    nodes: Tuple[NodeDecl, ...]
    edges: Tuple[Edge, ...]
    _by_id: Dict[str, NodeDecl] = field(init=False, repr=False, compare=False)
    _preds: Dict[str, Tuple[Edge, ...]] = field(init=False, repr=False, compare=False)
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)
    input_order: Tuple[str, ...] = field(init=False, compare=False)
    output_order: Tuple[str, ...] = field(init=False, compare=False)

    def __post_init__(self):
        by_id = {node.id: node for node in self.nodes}
        preds: Dict[str, List[Edge]] = {node.id: [] for node in self.nodes}
        has_successor = set()
        for edge in self.edges:
            preds[edge.target].append(edge)
            has_successor.add(edge.source)
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_preds", {k: tuple(v) for k, v in preds.items()})
        object.__setattr__(self, "_index", {node.id: i for i, node in enumerate(self.nodes)})
        object.__setattr__(self, "input_order", tuple(
            node.id for node in self.nodes if node.node_type == NODE_TYPE_INPUT
        ))
        object.__setattr__(self, "output_order", tuple(
            node.id for node in self.nodes if node.id not in has_successor
        ))

    @property
    def n(self) -> int:
        return len(self.input_order)

    @property
    def m(self) -> int:
        return len(self.output_order)

    def node(self, node_id: str) -> NodeDecl:
        return self._by_id[node_id]

    def has_node(self, node_id: str) -> bool:
        return node_id in self._by_id

    def index(self, node_id: str) -> int:
        return self._index[node_id]

    def predecessors(self, node_id: str) -> Tuple[Edge, ...]:
        return self._preds[node_id]

    def nodes_of_type(self, node_type: str) -> List[str]:
        return [node.id for node in self.nodes if node.node_type == node_type]

    def phase_nodes(self) -> List[str]:
        """ReLU 和 MaxPool 节点，按声明顺序"""
        return [
            node.id for node in self.nodes
            if node.node_type in (NODE_TYPE_RELU, NODE_TYPE_MAXPOOL)
        ]


@dataclass(frozen=True)
class VerificationProblem:
    """验证问题: 网络加上性质 ψ (线性约束的合取)"""
    network: Network
    property: Tuple[LinearConstraint, ...]

    def input_box(self) -> Dict[str, Tuple[float, float]]:
        """
        由单变量 Assert 推出每个输入节点的区间

        Returns:
            dict: input id -> (lower, upper)，缺失的一侧为 ±inf
        """
        box = {node_id: (-math.inf, math.inf) for node_id in self.network.input_order}
        for constraint in self.property:
            if len(constraint.terms) != 1:
                continue
            coeff, node_id = constraint.terms[0]
            if node_id not in box or coeff == 0.0:
                continue
            bound = constraint.constant / coeff
            lower, upper = box[node_id]
            # "<=" 即 c <= coeff·x；系数为负时方向翻转
            gives_lower = (constraint.sense == "<=") == (coeff > 0)
            if gives_lower:
                lower = max(lower, bound)
            else:
                upper = min(upper, bound)
            box[node_id] = (lower, upper)
        return box


def _parse_real(token: str, line_no: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ProblemFormatError("E_PARSE", f"第{line_no}行: 无法解析实数 '{token}'")
    if not math.isfinite(value):
        raise ProblemFormatError("E_PARSE", f"第{line_no}行: 实数必须有限 '{token}'")
    return value


def _parse_id(token: str, line_no: int) -> str:
    if not ID_PATTERN.match(token):
        raise ProblemFormatError("E_PARSE", f"第{line_no}行: 非法标识符 '{token}'")
    return token


def _parse_pairs(tokens: Sequence[str], line_no: int) -> List[Tuple[float, str]]:
    if not tokens or len(tokens) % 2 != 0:
        raise ProblemFormatError("E_PARSE", f"第{line_no}行: 系数与标识符必须成对出现")
    pairs = []
    for i in range(0, len(tokens), 2):
        pairs.append((_parse_real(tokens[i], line_no), _parse_id(tokens[i + 1], line_no)))
    return pairs


def parse_problem(text: str, require_bounds: bool = True) -> VerificationProblem:
    """
    解析 .pnet 文本

    Args:
        text: .pnet 文件内容
        require_bounds: 是否要求每个输入都有有限的上下界

    Returns:
        VerificationProblem: 校验过的验证问题

    Raises:
        ProblemFormatError: E_PARSE, E_UNKNOWN_NODE, E_CYCLE,
            E_UNBOUNDED_INPUT, E_DUPLICATE_ID

    使用样例:
        problem = parse_problem(open("net.pnet").read())
    """
    nodes: List[NodeDecl] = []
    edges: List[Edge] = []
    constraints: List[LinearConstraint] = []
    declared = set()

    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        keyword = tokens[0]

        if keyword == "Assert":
            if len(tokens) < 5 or tokens[1] not in ("<=", ">="):
                raise ProblemFormatError("E_PARSE", f"第{line_no}行: Assert 格式错误")
            pairs = _parse_pairs(tokens[3:], line_no)
            ids = [node_id for _, node_id in pairs]
            if len(set(ids)) != len(ids):
                raise ProblemFormatError("E_PARSE", f"第{line_no}行: 约束中出现重复节点")
            constraints.append(LinearConstraint(
                sense=tokens[1],
                constant=_parse_real(tokens[2], line_no),
                terms=tuple(pairs),
            ))
            continue

        if keyword not in PNET_KEYWORDS:
            raise ProblemFormatError("E_PARSE", f"第{line_no}行: 未知关键字 '{keyword}'")
        if len(tokens) < 2:
            raise ProblemFormatError("E_PARSE", f"第{line_no}行: 缺少节点标识符")
        node_type = PNET_KEYWORDS[keyword]
        node_id = _parse_id(tokens[1], line_no)
        if node_id in declared:
            raise ProblemFormatError("E_DUPLICATE_ID", f"第{line_no}行: 重复的节点 '{node_id}'")
        declared.add(node_id)

        if node_type == NODE_TYPE_INPUT:
            if len(tokens) != 2:
                raise ProblemFormatError("E_PARSE", f"第{line_no}行: Input 不接受其他参数")
            nodes.append(NodeDecl(node_id, node_type))
        elif node_type == NODE_TYPE_MAXPOOL:
            # MaxPool 不带权重和偏置，数字会因不是合法标识符而被拒绝
            sources = [_parse_id(token, line_no) for token in tokens[2:]]
            if not sources:
                raise ProblemFormatError("E_PARSE", f"第{line_no}行: MaxPool 至少需要一个前驱")
            if len(set(sources)) != len(sources):
                raise ProblemFormatError("E_PARSE", f"第{line_no}行: 重复的入边")
            nodes.append(NodeDecl(node_id, node_type))
            edges.extend(Edge(source, node_id) for source in sources)
        else:
            if len(tokens) < 5:
                raise ProblemFormatError("E_PARSE", f"第{line_no}行: 缺少偏置或入边")
            bias = _parse_real(tokens[2], line_no)
            pairs = _parse_pairs(tokens[3:], line_no)
            if len({source for _, source in pairs}) != len(pairs):
                raise ProblemFormatError("E_PARSE", f"第{line_no}行: 重复的入边")
            nodes.append(NodeDecl(node_id, node_type, bias))
            edges.extend(Edge(source, node_id, weight) for weight, source in pairs)

    network = _validate_network(nodes, edges)

    for constraint in constraints:
        for _, node_id in constraint.terms:
            if not network.has_node(node_id):
                raise ProblemFormatError("E_UNKNOWN_NODE", f"约束引用了未声明的节点 '{node_id}'")

    problem = VerificationProblem(network=network, property=tuple(constraints))
    if require_bounds:
        for node_id, (lower, upper) in problem.input_box().items():
            if not (math.isfinite(lower) and math.isfinite(upper)):
                raise ProblemFormatError("E_UNBOUNDED_INPUT", f"输入 '{node_id}' 缺少有限的上下界")

    logger.debug(
        f"解析完成: {len(nodes)}个节点, {len(edges)}条边, {len(constraints)}条约束",
        extra={"inputs": network.n, "outputs": network.m}
    )
    return problem


def parse_network(text: str) -> VerificationProblem:
    """解析 .pnet 文本但不要求输入有界，供查询命令自行补充输入区间"""
    return parse_problem(text, require_bounds=False)


def _validate_network(nodes: List[NodeDecl], edges: List[Edge]) -> Network:
    ids = {node.id for node in nodes}
    for edge in edges:
        if edge.source not in ids:
            raise ProblemFormatError("E_UNKNOWN_NODE", f"边引用了未声明的节点 '{edge.source}'")

    sorter = TopologicalSorter({node.id: [] for node in nodes})
    for edge in edges:
        sorter.add(edge.target, edge.source)
    try:
        tuple(sorter.static_order())
    except CycleError as e:
        raise ProblemFormatError("E_CYCLE", f"网络存在环: {e.args[1]}")

    position = {node.id: i for i, node in enumerate(nodes)}
    for edge in edges:
        if position[edge.source] >= position[edge.target]:
            raise ProblemFormatError(
                "E_PARSE", f"声明顺序不是拓扑序: '{edge.source}' 应在 '{edge.target}' 之前声明"
            )
    return Network(nodes=tuple(nodes), edges=tuple(edges))


def _format_real(value: float) -> str:
    return repr(float(value))


def serialize_problem(problem: VerificationProblem) -> str:
    """
    将验证问题输出为 .pnet 文本，解析后得到相同的问题

    使用样例:
        text = serialize_problem(problem)
        assert parse_problem(text) == problem
    """
    net = problem.network
    lines = []
    for node in net.nodes:
        preds = net.predecessors(node.id)
        if node.node_type == NODE_TYPE_INPUT:
            lines.append(f"Input {node.id}")
        elif node.node_type == NODE_TYPE_MAXPOOL:
            lines.append("MaxPool " + node.id + " " + " ".join(e.source for e in preds))
        else:
            keyword = "ReLU" if node.node_type == NODE_TYPE_RELU else "Linear"
            pairs = " ".join(f"{_format_real(e.weight)} {e.source}" for e in preds)
            lines.append(f"{keyword} {node.id} {_format_real(node.bias)} {pairs}")
    for constraint in problem.property:
        pairs = " ".join(f"{_format_real(c)} {node_id}" for c, node_id in constraint.terms)
        lines.append(f"Assert {constraint.sense} {_format_real(constraint.constant)} {pairs}")
    return "\n".join(lines) + "\n"


def _check_arity(net: Network, inputs: Sequence[float]):
    if len(inputs) != net.n:
        raise VerifierError("E_ARITY", f"需要{net.n}个输入，实际为{len(inputs)}个")


def weighted_sum(net: Network, node_id: str, values: Dict[str, float]) -> float:
    """计算 B(v) + Σ W·a(v′)"""
    total = net.node(node_id).bias
    for edge in net.predecessors(node_id):
        total += edge.weight * values[edge.source]
    return total


def evaluate(net: Network, inputs: Sequence[float]) -> Valuation:
    """
    按拓扑序精确计算每个节点的取值

    Args:
        net: 网络
        inputs: 长度为 n 的输入向量

    Returns:
        Valuation: 节点取值

    Raises:
        VerifierError: E_ARITY

    使用样例:
        values = evaluate(net, [0.5, 0.2])
    """
    _check_arity(net, inputs)
    values: Valuation = dict(zip(net.input_order, (float(x) for x in inputs)))
    for node in net.nodes:
        if node.node_type == NODE_TYPE_INPUT:
            continue
        if node.node_type == NODE_TYPE_MAXPOOL:
            values[node.id] = max(values[e.source] for e in net.predecessors(node.id))
        elif node.node_type == NODE_TYPE_RELU:
            values[node.id] = max(weighted_sum(net, node.id, values), 0.0)
        else:
            values[node.id] = weighted_sum(net, node.id, values)
    return values


def preactivations(net: Network, values: Dict[str, float]) -> Dict[str, float]:
    """根据节点取值计算所有 ReLU 节点的预激活值 s(v)"""
    return {
        node_id: weighted_sum(net, node_id, values)
        for node_id in net.nodes_of_type(NODE_TYPE_RELU)
    }


def outputs(net: Network, values: Dict[str, float]) -> List[float]:
    return [values[node_id] for node_id in net.output_order]


def classify(net: Network, inputs: Sequence[float]) -> int:
    """
    返回最大输出的类别编号(从1开始)，并列时取编号最小者

    使用样例:
        label = classify(net, [0.8])
    """
    if net.m < 1:
        raise VerifierError("E_ARITY", "网络没有输出节点")
    ys = outputs(net, evaluate(net, inputs))
    best = 0
    for i, y in enumerate(ys):
        if y > ys[best]:
            best = i
    return best + 1


def check_witness(
    problem: VerificationProblem,
    inputs: Sequence[float],
    tolerance: float = SAFETY_MARGIN
) -> bool:
    """
    检查输入向量经精确前向计算后是否满足 ψ

    Args:
        problem: 验证问题
        inputs: 证据输入
        tolerance: 允许的约束违反量

    Returns:
        bool: 每条约束的松弛量均不小于 -tolerance
    """
    values = evaluate(problem.network, inputs)
    return all(c.slack(values) >= -tolerance for c in problem.property)


def with_property(
    problem: VerificationProblem,
    extra: Iterable[LinearConstraint],
    keep_existing: bool = True
) -> VerificationProblem:
    """在问题上追加约束，返回新的问题"""
    base = problem.property if keep_existing else ()
    return VerificationProblem(network=problem.network, property=tuple(base) + tuple(extra))
