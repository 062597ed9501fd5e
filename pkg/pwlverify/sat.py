"""
SAT 核心
基于相位文字的 CDCL 引擎: 独热相位编码、双观察文字单元传播、第一唯一蕴含点学习、
VSIDS 分支、相位保存、非时序回跳、Luby 重启以及带假设的求解
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from pwlverify.config import (
    ACTIVITY_DECAY, NODE_TYPE_MAXPOOL, NODE_TYPE_RELU, PHASE_ACTIVE, PHASE_INACTIVE
)
from pwlverify.errors import RootConflict, VerifierError
from pwlverify.logger import get_logger
from pwlverify.network import Network

logger = get_logger(__name__)

# 文字为非零整数，正数表示变量为真
Literal = int
Clause = List[Literal]
# 相位组合: 节点 -> 相位标签 (ReLU 为 "<=0"/">=0"，MaxPool 为前驱节点 id)
PhaseFixture = Dict[str, str]


def luby(i: int) -> int:
    """Luby 序列的第 i 项(从1开始): 1 1 2 1 1 2 4 ..."""
    k = 1
    while (1 << k) - 1 < i:
        k += 1
    while True:
        if i == (1 << k) - 1:
            return 1 << (k - 1)
        i -= (1 << (k - 1)) - 1
        k = 1
        while (1 << k) - 1 < i:
            k += 1


@dataclass
class SatStats:
    conflicts: int = 0
    decisions: int = 0
    propagations: int = 0
    learned: int = 0
    restarts: int = 0


class SatSolver:
    """
    CDCL 求解器

    变量从 1 开始编号。每个公开操作返回时单元传播都处于不动点，
    冲突以子句下标的形式返回，由调用方交给 analyze_conflict。
    """

    def __init__(self):
        self.num_vars = 0
        self.clauses: List[Clause] = []
        self.learned_flags: List[bool] = []
        self._clause_keys = set()
        self.watches: Dict[Literal, List[int]] = {}
        self.assign: List[Optional[bool]] = [None]
        self.level: List[int] = [0]
        self.reason: List[Optional[int]] = [None]
        self.activity: List[float] = [0.0]
        self.saved_phase: List[bool] = [True]
        self.trail: List[Literal] = []
        self.trail_lim: List[int] = []
        self.qhead = 0
        self.var_inc = 1.0
        self.unsat = False
        self.stats = SatStats()

    # ---------- 变量与取值 ----------

    def new_var(self) -> int:
        self.num_vars += 1
        self.assign.append(None)
        self.level.append(0)
        self.reason.append(None)
        self.activity.append(0.0)
        self.saved_phase.append(True)
        self.watches[self.num_vars] = []
        self.watches[-self.num_vars] = []
        return self.num_vars

    def value(self, lit: Literal) -> Optional[bool]:
        val = self.assign[abs(lit)]
        if val is None:
            return None
        return val if lit > 0 else not val

    @property
    def decision_level(self) -> int:
        return len(self.trail_lim)

    def is_complete(self) -> bool:
        return len(self.trail) == self.num_vars

    def is_satisfied(self, clause: Iterable[Literal]) -> bool:
        return any(self.value(lit) is True for lit in clause)

    def contains(self, clause: Iterable[Literal]) -> bool:
        return frozenset(clause) in self._clause_keys

    def decisions(self) -> List[Literal]:
        return [self.trail[i] for i in self.trail_lim if i < len(self.trail)]

    def _enqueue(self, lit: Literal, reason: Optional[int]):
        var = abs(lit)
        self.assign[var] = lit > 0
        self.level[var] = self.decision_level
        self.reason[var] = reason
        self.trail.append(lit)

    # ---------- 子句 ----------

    def _sort_key(self, lit: Literal):
        val = self.value(lit)
        if val is True:
            return (0, self.level[abs(lit)])
        if val is None:
            return (1, 0)
        return (2, -self.level[abs(lit)])

    def add_clause(self, literals: Iterable[Literal], learned: bool = False) -> Optional[int]:
        """
        加入子句并保持单元传播处于不动点

        必要时回跳: 子句在当前赋值下为单元子句时回跳到其最高假文字层并蕴含剩余文字；
        子句全假时回跳到最高假文字层，若该层只有一个假文字则转为单元蕴含，否则返回冲突。

        Args:
            literals: 文字序列
            learned: 是否为学习子句

        Returns:
            Optional[int]: 冲突子句下标，无冲突时为 None

        Raises:
            RootConflict: 空子句或第0层冲突
        """
        lits: Clause = []
        for lit in literals:
            if lit not in lits:
                lits.append(lit)
        if any(-lit in lits for lit in lits):
            return None
        key = frozenset(lits)
        if not lits:
            self.unsat = True
            raise RootConflict("加入空子句")

        index = len(self.clauses)
        self.clauses.append(lits)
        self.learned_flags.append(learned)
        self._clause_keys.add(key)
        if learned:
            self.stats.learned += 1

        if len(lits) == 1:
            lit = lits[0]
            if self.value(lit) is True and self.level[abs(lit)] == 0:
                return None
            if self.value(lit) is False and self.level[abs(lit)] == 0:
                self.unsat = True
                raise RootConflict("单元子句与第0层赋值矛盾")
            self.backjump(0)
            self._enqueue(lit, index)
            return self._propagate_or_raise()

        lits.sort(key=self._sort_key)
        self.watches[lits[0]].append(index)
        self.watches[lits[1]].append(index)

        first, second = self.value(lits[0]), self.value(lits[1])
        if first is True:
            if second is False and self.level[abs(lits[0])] > self.level[abs(lits[1])]:
                self.backjump(self.level[abs(lits[1])])
                self._enqueue(lits[0], index)
                return self._propagate_or_raise()
            return None
        if first is None:
            if second is False:
                self.backjump(self.level[abs(lits[1])])
                self._enqueue(lits[0], index)
                return self._propagate_or_raise()
            return None

        # 全部为假
        top = self.level[abs(lits[0])]
        below = self.level[abs(lits[1])]
        if top == 0:
            self.unsat = True
            raise RootConflict("子句在第0层为假")
        if below < top:
            self.backjump(below)
            self._enqueue(lits[0], index)
            return self._propagate_or_raise()
        self.backjump(top)
        return index

    def _propagate_or_raise(self) -> Optional[int]:
        conflict = self.propagate()
        if conflict is not None and self.decision_level == 0:
            self.unsat = True
            raise RootConflict("第0层单元传播冲突")
        return conflict

    def propagate(self) -> Optional[int]:
        """
        双观察文字单元传播

        Returns:
            Optional[int]: 被证伪的子句下标，达到不动点时为 None
        """
        while self.qhead < len(self.trail):
            true_lit = self.trail[self.qhead]
            self.qhead += 1
            false_lit = -true_lit
            watching = self.watches[false_lit]
            self.watches[false_lit] = []
            conflict = None
            i = 0
            while i < len(watching):
                index = watching[i]
                i += 1
                if conflict is not None:
                    self.watches[false_lit].append(index)
                    continue
                lits = self.clauses[index]
                if lits[0] == false_lit:
                    lits[0], lits[1] = lits[1], lits[0]
                if self.value(lits[0]) is True:
                    self.watches[false_lit].append(index)
                    continue
                moved = False
                for k in range(2, len(lits)):
                    if self.value(lits[k]) is not False:
                        lits[1], lits[k] = lits[k], lits[1]
                        self.watches[lits[1]].append(index)
                        moved = True
                        break
                if moved:
                    continue
                self.watches[false_lit].append(index)
                if self.value(lits[0]) is False:
                    conflict = index
                else:
                    self._enqueue(lits[0], index)
                    self.stats.propagations += 1
            if conflict is not None:
                self.qhead = len(self.trail)
                return conflict
        return None

    # ---------- 冲突分析 ----------

    def _bump(self, var: int):
        self.activity[var] += self.var_inc
        if self.activity[var] > 1e100:
            self.activity = [a * 1e-100 for a in self.activity]
            self.var_inc *= 1e-100

    def analyze_conflict(self, conflict: int) -> Tuple[Clause, int]:
        """
        第一唯一蕴含点冲突分析

        Args:
            conflict: 被证伪的子句下标

        Returns:
            tuple: (学习子句, 回跳层)，学习子句的首个文字在回跳层被蕴含

        Raises:
            RootConflict: 冲突发生在第0层

        使用样例:
            learned, back = solver.analyze_conflict(conflict)
            solver.backjump(back)
            solver.add_clause(learned, learned=True)
        """
        self.stats.conflicts += 1
        current = self.decision_level
        if current == 0:
            self.unsat = True
            raise RootConflict("第0层冲突")

        seen = set()
        tail: Clause = []
        pending = 0
        clause = self.clauses[conflict]
        index = len(self.trail) - 1
        uip = 0
        while True:
            for lit in clause:
                var = abs(lit)
                if var in seen or self.level[var] == 0:
                    continue
                seen.add(var)
                self._bump(var)
                if self.level[var] == current:
                    pending += 1
                else:
                    tail.append(lit)
            while abs(self.trail[index]) not in seen:
                index -= 1
            uip = self.trail[index]
            index -= 1
            pending -= 1
            if pending <= 0:
                break
            clause = self.clauses[self.reason[abs(uip)]]

        learned = [-uip] + tail
        back = max((self.level[abs(lit)] for lit in tail), default=0)
        self.var_inc /= ACTIVITY_DECAY
        logger.debug(f"学习子句长度 {len(learned)}, 回跳到第{back}层")
        return learned, back

    def backjump(self, level: int):
        """撤销高于 level 的所有赋值，保存被撤销变量的相位"""
        if self.decision_level <= level:
            return
        start = self.trail_lim[level]
        for lit in self.trail[start:]:
            var = abs(lit)
            self.saved_phase[var] = lit > 0
            self.assign[var] = None
            self.reason[var] = None
        del self.trail[start:]
        del self.trail_lim[level:]
        self.qhead = len(self.trail)

    def resolve_conflict(self, conflict: Optional[int]) -> None:
        """反复分析冲突、回跳并加入学习子句，直到没有冲突"""
        while conflict is not None:
            learned, back = self.analyze_conflict(conflict)
            self.backjump(back)
            conflict = self.add_clause(learned, learned=True)

    # ---------- 分支 ----------

    def decide(self) -> Literal:
        """
        选择活跃度最高的未赋值变量，并列时取编号最小者，极性取保存的相位(默认为真)

        Raises:
            VerifierError: E_ALL_ASSIGNED
        """
        best = 0
        for var in range(1, self.num_vars + 1):
            if self.assign[var] is None and (best == 0 or self.activity[var] > self.activity[best]):
                best = var
        if best == 0:
            raise VerifierError("E_ALL_ASSIGNED", "所有变量均已赋值")
        return best if self.saved_phase[best] else -best

    def assign_decision(self, lit: Literal) -> Optional[int]:
        """开启新的决策层并赋值，返回传播产生的冲突"""
        self.stats.decisions += 1
        self.trail_lim.append(len(self.trail))
        self._enqueue(lit, None)
        return self.propagate()

    def restart(self):
        self.stats.restarts += 1
        self.backjump(0)

    # ---------- 求解 ----------

    def fork(self) -> "SatSolver":
        """复制子句库得到一个空轨迹的新求解器"""
        clone = SatSolver()
        for _ in range(self.num_vars):
            clone.new_var()
        clone.activity = list(self.activity)
        try:
            for lits, learned in zip(self.clauses, self.learned_flags):
                clone.add_clause(list(lits), learned=learned)
        except RootConflict:
            clone.unsat = True
        clone.stats = SatStats()
        return clone

    def solve(self, assumptions: Sequence[Literal] = ()) -> bool:
        """
        在假设下做完整的 CDCL 搜索，假设逐层作为决策

        Returns:
            bool: 子句库在假设下是否可满足
        """
        if self.unsat:
            return False
        try:
            conflict = self._propagate_or_raise()
            while True:
                if conflict is not None:
                    learned, back = self.analyze_conflict(conflict)
                    self.backjump(back)
                    conflict = self.add_clause(learned, learned=True)
                    continue
                if self.decision_level < len(assumptions):
                    lit = assumptions[self.decision_level]
                    val = self.value(lit)
                    if val is False:
                        return False
                    if val is True:
                        self.trail_lim.append(len(self.trail))
                        continue
                    conflict = self.assign_decision(lit)
                    continue
                if self.is_complete():
                    return True
                conflict = self.assign_decision(self.decide())
        except RootConflict:
            return False

    def extendable(self, assignment: Sequence[Literal]) -> bool:
        """
        只看子句，判断部分赋值能否扩展为满足赋值，不改变本求解器的状态

        使用样例:
            if not solver.extendable(solver.trail):
                ...
        """
        return self.fork().solve(list(assignment))


@dataclass
class PhaseEncoding:
    """(节点, 相位标签) 与 SAT 变量之间的双向映射"""
    variable_of: Dict[Tuple[str, str], int] = field(default_factory=dict)
    phase_of: Dict[int, Tuple[str, str]] = field(default_factory=dict)
    node_vars: Dict[str, List[int]] = field(default_factory=dict)

    def literal(self, node_id: str, tag: str) -> Literal:
        return self.variable_of[(node_id, tag)]

    def phase(self, lit: Literal) -> Tuple[str, str]:
        return self.phase_of[abs(lit)]

    def fixture(self, trail: Iterable[Literal]) -> PhaseFixture:
        """从轨迹中的正文字读出相位组合"""
        fixture: PhaseFixture = {}
        for lit in trail:
            if lit > 0 and lit in self.phase_of:
                node_id, tag = self.phase_of[lit]
                fixture[node_id] = tag
        return fixture

    def fixture_literals(self, fixture: PhaseFixture) -> List[Literal]:
        return [self.literal(node_id, tag) for node_id, tag in fixture.items()]

    def is_complete(self, fixture: PhaseFixture) -> bool:
        return len(fixture) == len(self.node_vars)


def init_phase_encoding(net: Network) -> Tuple[SatSolver, PhaseEncoding]:
    """
    为每个 ReLU 与 MaxPool 节点分配相位变量并加入独热约束

    ReLU 的 ≥0 变量先于 ≤0 变量分配，因此默认分支选择 ≥0 相位。

    Returns:
        tuple: (SatSolver, PhaseEncoding)
    """
    solver = SatSolver()
    encoding = PhaseEncoding()

    def allocate(node_id: str, tag: str) -> int:
        var = solver.new_var()
        encoding.variable_of[(node_id, tag)] = var
        encoding.phase_of[var] = (node_id, tag)
        encoding.node_vars.setdefault(node_id, []).append(var)
        return var

    for node in net.nodes:
        if node.node_type == NODE_TYPE_RELU:
            active = allocate(node.id, PHASE_ACTIVE)
            inactive = allocate(node.id, PHASE_INACTIVE)
            solver.add_clause([inactive, active])
            solver.add_clause([-inactive, -active])
        elif node.node_type == NODE_TYPE_MAXPOOL:
            edge_vars = [allocate(node.id, e.source) for e in net.predecessors(node.id)]
            solver.add_clause(edge_vars)
            for i in range(len(edge_vars)):
                for j in range(i + 1, len(edge_vars)):
                    solver.add_clause([-edge_vars[i], -edge_vars[j]])

    logger.debug(
        f"相位编码: {solver.num_vars}个变量, {len(solver.clauses)}个子句",
        extra={"nodes": len(encoding.node_vars)}
    )
    return solver, encoding
