"""
线性规划核心
带上下界变量的线性规划表示、约束批次的压栈/出栈，以及稠密两阶段有界单纯形法
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from pwlverify.config import (
    FEASIBILITY_TOLERANCE, PIVOT_TOLERANCE, OPTIMALITY_TOLERANCE,
    DEGENERATE_PIVOTS_BEFORE_BLAND, REFACTOR_INTERVAL, MAX_SIMPLEX_ITERATIONS
)
from pwlverify.errors import LpNumericError, VerifierError
from pwlverify.logger import get_logger

logger = get_logger(__name__)

STATUS_OPTIMAL = "Optimal"
STATUS_INFEASIBLE = "Infeasible"
STATUS_UNBOUNDED = "Unbounded"

ROW_SENSES = ("<=", ">=", "==")
BASE_BATCH = "base"


@dataclass(frozen=True)
class Row:
    """线性约束 Σ coeff·var (sense) rhs"""
    terms: Tuple[Tuple[float, str], ...]
    sense: str
    rhs: float

    def activity(self, values: Dict[str, float]) -> float:
        return sum(coeff * values[var] for coeff, var in self.terms)

    def violation(self, values: Dict[str, float]) -> float:
        """约束违反量，满足时为 0"""
        lhs = self.activity(values)
        if self.sense == "<=":
            return max(lhs - self.rhs, 0.0)
        if self.sense == ">=":
            return max(self.rhs - lhs, 0.0)
        return abs(lhs - self.rhs)


def make_row(terms: Iterable[Tuple[float, str]], sense: str, rhs: float) -> Row:
    """构造约束行，合并同一变量的系数"""
    merged: Dict[str, float] = {}
    for coeff, var in terms:
        merged[var] = merged.get(var, 0.0) + float(coeff)
    return Row(tuple((c, v) for v, c in merged.items()), sense, float(rhs))


@dataclass
class LpOutcome:
    """求解结果，solution 与 objective_value 仅在 Optimal 时给出"""
    status: str
    solution: Optional[Dict[str, float]] = None
    objective_value: Optional[float] = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == STATUS_OPTIMAL

    @property
    def infeasible(self) -> bool:
        return self.status == STATUS_INFEASIBLE


class LinearProgram:
    """
    带界变量、分批约束和最小化目标的线性规划

    约束按命名批次组织，最底层为 base 批次；push_batch/pop_batch 按后进先出使用。
    实例由单一调用方持有并原地修改。

    使用样例:
        lp = LinearProgram()
        lp.add_variable("x", lower=0.0)
        lp.add_row(make_row([(1.0, "x")], ">=", 3.0))
        lp.set_objective({"x": 1.0})
        outcome = lp.solve()
    """

    def __init__(self):
        self._bounds: Dict[str, List[float]] = {}
        self._batches: List[Tuple[str, List[Row]]] = [(BASE_BATCH, [])]
        self._objective: Dict[str, float] = {}

    # ---------- 变量 ----------

    def add_variable(self, name: str, lower: float = -math.inf, upper: float = math.inf):
        if name in self._bounds:
            raise VerifierError("E_DUPLICATE_ID", f"变量 {name} 已存在")
        if lower > upper + FEASIBILITY_TOLERANCE:
            raise VerifierError("E_BOUND_CROSS", f"变量 {name} 的下界 {lower} 大于上界 {upper}")
        self._bounds[name] = [float(lower), float(max(upper, lower))]

    def has_variable(self, name: str) -> bool:
        return name in self._bounds

    def variables(self) -> List[str]:
        return list(self._bounds)

    def bounds(self, name: str) -> Tuple[float, float]:
        self._require_var(name)
        lower, upper = self._bounds[name]
        return lower, upper

    def tighten_var_bound(self, name: str, side: str, value: float) -> "LinearProgram":
        """
        收紧变量的一侧界，从不放松

        Args:
            name: 变量名
            side: "lower" 或 "upper"
            value: 新的界

        Raises:
            VerifierError: E_UNKNOWN_VAR, E_BOUND_CROSS

        使用样例:
            lp.tighten_var_bound("x", "upper", 2.0)
        """
        self._require_var(name)
        lower, upper = self._bounds[name]
        value = float(value)
        if side == "lower":
            if value <= lower:
                return self
            if value > upper + FEASIBILITY_TOLERANCE:
                raise VerifierError("E_BOUND_CROSS", f"变量 {name} 的新下界 {value} 超过上界 {upper}")
            self._bounds[name][0] = min(value, upper)
        elif side == "upper":
            if value >= upper:
                return self
            if value < lower - FEASIBILITY_TOLERANCE:
                raise VerifierError("E_BOUND_CROSS", f"变量 {name} 的新上界 {value} 低于下界 {lower}")
            self._bounds[name][1] = max(value, lower)
        else:
            raise ValueError(f"未知的界类型: {side}")
        return self

    # ---------- 约束 ----------

    def add_row(self, constraint: Row):
        self._check_row(constraint)
        self._batches[-1][1].append(constraint)

    def add_rows(self, constraints: Iterable[Row]):
        for constraint in constraints:
            self.add_row(constraint)

    def push_batch(self, name: str, constraints: Iterable[Row]) -> "LinearProgram":
        """
        以命名批次压入一组约束

        Raises:
            VerifierError: E_UNKNOWN_VAR
        """
        batch = list(constraints)
        for constraint in batch:
            self._check_row(constraint)
        self._batches.append((name, batch))
        return self

    def pop_batch(self, name: str) -> "LinearProgram":
        """
        弹出最近压入的批次，名称必须与栈顶一致

        Raises:
            VerifierError: E_BATCH_ORDER
        """
        if len(self._batches) == 1 or self._batches[-1][0] != name:
            top = self._batches[-1][0] if len(self._batches) > 1 else None
            raise VerifierError("E_BATCH_ORDER", f"无法弹出批次 {name}，栈顶为 {top}")
        self._batches.pop()
        return self

    def batch_names(self) -> List[str]:
        return [name for name, _ in self._batches[1:]]

    def rows(self) -> Iterator[Row]:
        for _, batch in self._batches:
            yield from batch

    def row_count(self) -> int:
        return sum(len(batch) for _, batch in self._batches)

    # ---------- 目标函数 ----------

    @property
    def objective(self) -> Dict[str, float]:
        return dict(self._objective)

    def set_objective(self, coefficients: Dict[str, float]):
        """设置最小化目标，空字典表示纯可行性问题"""
        for name in coefficients:
            self._require_var(name)
        self._objective = {name: float(c) for name, c in coefficients.items() if c != 0.0}

    # ---------- 其他 ----------

    def copy(self) -> "LinearProgram":
        clone = LinearProgram()
        clone._bounds = {name: list(b) for name, b in self._bounds.items()}
        clone._batches = [(name, list(batch)) for name, batch in self._batches]
        clone._objective = dict(self._objective)
        return clone

    def __eq__(self, other) -> bool:
        if not isinstance(other, LinearProgram):
            return NotImplemented
        return (
            list(self._bounds.items()) == list(other._bounds.items())
            and self._batches == other._batches
            and self._objective == other._objective
        )

    def _require_var(self, name: str):
        if name not in self._bounds:
            raise VerifierError("E_UNKNOWN_VAR", f"未声明的变量 {name}")

    def _check_row(self, constraint: Row):
        if constraint.sense not in ROW_SENSES:
            raise ValueError(f"未知的约束方向: {constraint.sense}")
        for _, var in constraint.terms:
            self._require_var(var)

    def solve(self) -> LpOutcome:
        """
        用有界单纯形法求解

        Returns:
            LpOutcome: Optimal / Infeasible / Unbounded

        Raises:
            LpNumericError: 迭代次数超限、基矩阵奇异或解的校验失败
        """
        return _BoundedSimplex(self).run()


class _BoundedSimplex:
    """
    稠密两阶段有界单纯形

    原变量经平移、镜像或拆分变为 y ∈ [0, U]；每个不等式行引入一个松弛列，
    右端为负的行整体取反，无法用松弛列做初始基的行引入人工列。
    第一阶段最小化人工列之和，第二阶段人工列上界置 0 且不再入基。
    """

    def __init__(self, lp: LinearProgram):
        self.lp = lp
        self.var_names = lp.variables()
        self.rows = list(lp.rows())
        self.iterations = 0

    # 原变量到标准列的映射
    def _build(self) -> bool:
        columns: List[Tuple[int, float]] = []  # (原变量下标, 符号)
        offsets = np.zeros(len(self.var_names))
        upper: List[float] = []
        self.var_columns: List[List[int]] = []

        for j, name in enumerate(self.var_names):
            lower, up = self.lp.bounds(name)
            if lower > up + FEASIBILITY_TOLERANCE:
                return False
            cols = []
            if math.isfinite(lower):
                offsets[j] = lower
                cols.append(len(columns))
                columns.append((j, 1.0))
                upper.append(max(up - lower, 0.0))
            elif math.isfinite(up):
                offsets[j] = up
                cols.append(len(columns))
                columns.append((j, -1.0))
                upper.append(math.inf)
            else:
                cols.append(len(columns))
                columns.append((j, 1.0))
                upper.append(math.inf)
                cols.append(len(columns))
                columns.append((j, -1.0))
                upper.append(math.inf)
            self.var_columns.append(cols)

        index = {name: j for j, name in enumerate(self.var_names)}
        m = len(self.rows)
        n_struct = len(columns)
        n_slack = sum(1 for r in self.rows if r.sense != "==")

        a = np.zeros((m, n_struct + n_slack))
        b = np.zeros(m)
        basis_candidates: List[Optional[int]] = [None] * m
        slack_col = n_struct
        for i, r in enumerate(self.rows):
            rhs = r.rhs
            for coeff, var in r.terms:
                j = index[var]
                rhs -= coeff * offsets[j]
                for col in self.var_columns[j]:
                    a[i, col] += coeff * columns[col][1]
            slack_sign = 0.0
            if r.sense != "==":
                slack_sign = 1.0 if r.sense == "<=" else -1.0
                a[i, slack_col] = slack_sign
                this_slack = slack_col
                slack_col += 1
                upper.append(math.inf)
            if rhs < 0:
                a[i] = -a[i]
                rhs = -rhs
                slack_sign = -slack_sign
            b[i] = rhs
            if slack_sign > 0:
                basis_candidates[i] = this_slack

        artificial_rows = [i for i in range(m) if basis_candidates[i] is None]
        n_art = len(artificial_rows)
        a = np.hstack([a, np.zeros((m, n_art))])
        self.first_artificial = a.shape[1] - n_art
        for k, i in enumerate(artificial_rows):
            col = self.first_artificial + k
            a[i, col] = 1.0
            basis_candidates[i] = col
            upper.append(math.inf)

        self.columns = columns
        self.offsets = offsets
        self.a = a
        self.b = b
        self.upper = np.array(upper, dtype=float)
        self.basis = np.array(basis_candidates, dtype=int)
        self.at_upper = np.zeros(a.shape[1], dtype=bool)
        self.tableau = a.copy()
        self.x_basic = b.copy()
        return True

    def _refactor(self):
        """由原始矩阵重新计算 B⁻¹A 和基变量取值"""
        m = len(self.basis)
        if m == 0:
            return
        basis_matrix = self.a[:, self.basis]
        nonbasic_value = np.where(self.at_upper, self.upper, 0.0)
        nonbasic_value[self.basis] = 0.0
        nonbasic_value[~np.isfinite(nonbasic_value)] = 0.0
        try:
            self.tableau = np.linalg.solve(basis_matrix, self.a)
            self.x_basic = np.linalg.solve(basis_matrix, self.b - self.a @ nonbasic_value)
        except np.linalg.LinAlgError:
            raise LpNumericError("基矩阵奇异")

    def _optimize(self, cost: np.ndarray, allowed: np.ndarray) -> str:
        degenerate_run = 0
        pivots_since_refactor = 0
        m = len(self.basis)
        is_basic = np.zeros(len(cost), dtype=bool)
        is_basic[self.basis] = True

        while True:
            if self.iterations >= MAX_SIMPLEX_ITERATIONS:
                raise LpNumericError(f"单纯形迭代超过 {MAX_SIMPLEX_ITERATIONS} 次")
            reduced = cost - (cost[self.basis] @ self.tableau if m else 0.0)
            improving = allowed & ~is_basic & (self.upper > 0.0) & (
                (~self.at_upper & (reduced < -OPTIMALITY_TOLERANCE))
                | (self.at_upper & (reduced > OPTIMALITY_TOLERANCE))
            )
            candidates = np.flatnonzero(improving)
            if candidates.size == 0:
                return STATUS_OPTIMAL

            use_bland = degenerate_run >= DEGENERATE_PIVOTS_BEFORE_BLAND
            if use_bland:
                entering = int(candidates[0])
            else:
                entering = int(candidates[np.argmax(np.abs(reduced[candidates]))])
            direction = -1.0 if self.at_upper[entering] else 1.0

            # 比值检验: 入基变量自身的界翻转也参与比较
            step = self.upper[entering]
            leaving_row = -1
            if m:
                alpha = self.tableau[:, entering]
                change = direction * alpha
                best_pivot = 0.0
                for i in range(m):
                    g = change[i]
                    if g > PIVOT_TOLERANCE:
                        limit = max(self.x_basic[i], 0.0) / g
                    elif g < -PIVOT_TOLERANCE and math.isfinite(self.upper[self.basis[i]]):
                        limit = max(self.upper[self.basis[i]] - self.x_basic[i], 0.0) / -g
                    else:
                        continue
                    if limit < step - PIVOT_TOLERANCE:
                        step, leaving_row, best_pivot = limit, i, abs(g)
                    elif leaving_row >= 0 and abs(limit - step) <= PIVOT_TOLERANCE:
                        if use_bland:
                            if self.basis[i] < self.basis[leaving_row]:
                                step, leaving_row, best_pivot = min(step, limit), i, abs(g)
                        elif abs(g) > best_pivot:
                            step, leaving_row, best_pivot = min(step, limit), i, abs(g)

            if not math.isfinite(step):
                return STATUS_UNBOUNDED

            self.iterations += 1
            degenerate_run = degenerate_run + 1 if step <= PIVOT_TOLERANCE else 0

            if m:
                self.x_basic -= step * change
            if leaving_row < 0:
                self.at_upper[entering] = not self.at_upper[entering]
                continue

            entering_value = (self.upper[entering] if self.at_upper[entering] else 0.0) + direction * step
            leaving = int(self.basis[leaving_row])
            self.at_upper[leaving] = change[leaving_row] < 0
            self.at_upper[entering] = False
            is_basic[leaving] = False
            is_basic[entering] = True

            pivot_row = self.tableau[leaving_row] / self.tableau[leaving_row, entering]
            self.tableau -= np.outer(self.tableau[:, entering], pivot_row)
            self.tableau[leaving_row] = pivot_row
            self.basis[leaving_row] = entering
            self.x_basic[leaving_row] = entering_value

            pivots_since_refactor += 1
            if pivots_since_refactor >= REFACTOR_INTERVAL:
                self._refactor()
                pivots_since_refactor = 0

    def _drive_out_artificials(self):
        for i in range(len(self.basis)):
            if self.basis[i] < self.first_artificial:
                continue
            row_values = np.abs(self.tableau[i, :self.first_artificial])
            row_values[self.basis[self.basis < self.first_artificial]] = 0.0
            if row_values.size == 0 or row_values.max() <= PIVOT_TOLERANCE:
                # 冗余行，人工列以 [0, 0] 留在基中
                continue
            entering = int(np.argmax(row_values))
            value = self.upper[entering] if self.at_upper[entering] else 0.0
            pivot_row = self.tableau[i] / self.tableau[i, entering]
            self.tableau -= np.outer(self.tableau[:, entering], pivot_row)
            self.tableau[i] = pivot_row
            self.basis[i] = entering
            self.x_basic[i] = value
            self.at_upper[entering] = False

    def _column_values(self) -> np.ndarray:
        values = np.where(self.at_upper, self.upper, 0.0)
        values[self.basis] = 0.0
        values[~np.isfinite(values)] = 0.0
        if len(self.basis):
            values[self.basis] = self.x_basic
        return values

    def run(self) -> LpOutcome:
        if not self._build():
            return LpOutcome(STATUS_INFEASIBLE, iterations=0)
        n_cols = self.a.shape[1]
        n_art = n_cols - self.first_artificial

        if n_art:
            phase_one_cost = np.zeros(n_cols)
            phase_one_cost[self.first_artificial:] = 1.0
            self._optimize(phase_one_cost, np.ones(n_cols, dtype=bool))
            self._refactor()
            residual = float(self._column_values()[self.first_artificial:].sum())
            scale = max(1.0, float(np.abs(self.b).max()))
            if residual > FEASIBILITY_TOLERANCE * scale:
                logger.debug("第一阶段残差非零，线性规划不可行", extra={"residual": residual})
                return LpOutcome(STATUS_INFEASIBLE, iterations=self.iterations)
            self.upper[self.first_artificial:] = 0.0
            self.at_upper[self.first_artificial:] = False
            self._drive_out_artificials()

        cost = np.zeros(n_cols)
        objective = self.lp.objective
        constant = 0.0
        for j, name in enumerate(self.var_names):
            coeff = objective.get(name, 0.0)
            if coeff:
                constant += coeff * self.offsets[j]
                for col in self.var_columns[j]:
                    cost[col] += coeff * self.columns[col][1]
        allowed = np.ones(n_cols, dtype=bool)
        allowed[self.first_artificial:] = False
        status = self._optimize(cost, allowed)
        if status == STATUS_UNBOUNDED:
            return LpOutcome(STATUS_UNBOUNDED, iterations=self.iterations)

        self._refactor()
        solution = self._extract()
        self._verify(solution)
        value = sum(c * solution[name] for name, c in objective.items())
        return LpOutcome(STATUS_OPTIMAL, solution, value, self.iterations)

    def _extract(self) -> Dict[str, float]:
        column_values = self._column_values()
        solution = {}
        for j, name in enumerate(self.var_names):
            value = self.offsets[j]
            for col in self.var_columns[j]:
                value += self.columns[col][1] * column_values[col]
            lower, upper = self.lp.bounds(name)
            solution[name] = float(min(max(value, lower), upper))
        return solution

    def _verify(self, solution: Dict[str, float]):
        for r in self.rows:
            scale = 1.0 + abs(r.rhs) + sum(abs(c * solution[v]) for c, v in r.terms)
            if r.violation(solution) > FEASIBILITY_TOLERANCE * scale:
                logger.error(
                    "单纯形解校验失败",
                    extra={"violation": r.violation(solution), "rows": len(self.rows)}
                )
                raise LpNumericError("最优解违反约束，实例需要重新缩放")
