"""Small conic programs over named variable blocks, solved by HiGHS (polyhedral) or cvxpy (conic).

A program is compiled once per backend and can be re-solved with a new
objective and a new right-hand side for its equality rows, which is how the
regions engine labels thousands of raster cells against one model.
"""
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from scipy.optimize import linprog

from app.config import settings
from app.logging_config import get_logger

logger = get_logger(__name__)

try:
    import cvxpy as cp
except ImportError:  # polyhedral programs still work without it
    cp = None


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    FAILED = "failed"


@dataclass
class SolveResult:
    status: SolveStatus
    value: Optional[float] = None
    witness: Dict[str, np.ndarray] = field(default_factory=dict)
    backend: str = ""
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


@dataclass(frozen=True)
class NormCone:
    """||M z + m0||_order <= c^T z + c0"""

    order: float
    M: np.ndarray
    m0: np.ndarray
    c: np.ndarray
    c0: float = 0.0


class ConicProgram:
    """minimize obj^T z  s.t.  A_eq z = rhs, A_ub z <= b_ub, lower <= z <= upper, norm cones."""

    def __init__(self):
        self.size = 0
        self.blocks: Dict[str, slice] = {}
        self._lower: List[float] = []
        self._upper: List[float] = []
        self.eq_rows: List[np.ndarray] = []
        self.eq_rhs: List[float] = []
        self.ub_rows: List[np.ndarray] = []
        self.ub_rhs: List[float] = []
        self.cones: List[NormCone] = []
        self._compiled: Dict[str, object] = {}
        # compiled forms hold mutable solver state; one solve at a time per program
        self._lock = threading.RLock()

    def add_variable(self, name: str, size: int, lower: Optional[float] = None,
                     upper: Optional[float] = None) -> slice:
        if self.eq_rows or self.ub_rows or self.cones:
            raise RuntimeError("declare every variable before adding rows")
        if name in self.blocks:
            raise ValueError(f"variable block {name!r} already exists")
        block = slice(self.size, self.size + size)
        self.blocks[name] = block
        self.size += size
        self._lower += [-np.inf if lower is None else lower] * size
        self._upper += [np.inf if upper is None else upper] * size
        return block

    def row(self, **coeffs) -> np.ndarray:
        """Dense row from per-block coefficients, e.g. row(z=[1, 2, -1])."""
        out = np.zeros(self.size)
        for name, values in coeffs.items():
            out[self.blocks[name]] = values
        return out

    def add_equality(self, row: np.ndarray, rhs: float = 0.0) -> None:
        self.eq_rows.append(np.asarray(row, dtype=float))
        self.eq_rhs.append(float(rhs))
        self._compiled.clear()

    def add_inequality(self, row: np.ndarray, rhs: float = 0.0) -> None:
        self.ub_rows.append(np.asarray(row, dtype=float))
        self.ub_rhs.append(float(rhs))
        self._compiled.clear()

    def add_norm_cone(self, order: float, M: np.ndarray, c: np.ndarray,
                      m0: Optional[np.ndarray] = None, c0: float = 0.0) -> None:
        M = np.atleast_2d(np.asarray(M, dtype=float))
        m0 = np.zeros(M.shape[0]) if m0 is None else np.asarray(m0, dtype=float)
        self.cones.append(NormCone(order, M, m0, np.asarray(c, dtype=float), float(c0)))
        self._compiled.clear()

    @property
    def polyhedral(self) -> bool:
        return all(cone.order in (1, np.inf) for cone in self.cones)

    @property
    def bounds(self):
        return list(zip(self._lower, self._upper))

    def _matrix(self, rows: List[np.ndarray]) -> np.ndarray:
        return np.array(rows) if rows else np.zeros((0, self.size))

    def split(self, z: np.ndarray) -> Dict[str, np.ndarray]:
        return {name: np.array(z[block]) for name, block in self.blocks.items()}


class _LinearForm:
    """The program with l1/linf cones expanded into linear rows over auxiliary variables."""

    def __init__(self, program: ConicProgram):
        n = program.size
        aux = sum(cone.M.shape[0] for cone in program.cones if cone.order == 1)
        width = n + aux
        ub_rows, ub_rhs = [], []
        for row, rhs in zip(program.ub_rows, program.ub_rhs):
            ub_rows.append(np.concatenate([row, np.zeros(aux)]))
            ub_rhs.append(rhs)
        offset = n
        for cone in program.cones:
            k = cone.M.shape[0]
            if cone.order == 1:
                # -u <= M z + m0 <= u,  sum(u) <= c^T z + c0
                for i in range(k):
                    r = np.zeros(width)
                    r[:n] = cone.M[i]
                    r[offset + i] = -1.0
                    ub_rows.append(r)
                    ub_rhs.append(-cone.m0[i])
                    r = np.zeros(width)
                    r[:n] = -cone.M[i]
                    r[offset + i] = -1.0
                    ub_rows.append(r)
                    ub_rhs.append(cone.m0[i])
                r = np.zeros(width)
                r[:n] = -cone.c
                r[offset:offset + k] = 1.0
                ub_rows.append(r)
                ub_rhs.append(cone.c0)
                offset += k
            else:
                # |(M z + m0)_i| <= c^T z + c0 for every i
                for i in range(k):
                    for sign in (1.0, -1.0):
                        r = np.zeros(width)
                        r[:n] = sign * cone.M[i] - cone.c
                        ub_rows.append(r)
                        ub_rhs.append(cone.c0 - sign * cone.m0[i])
        self.n = n
        self.aux = aux
        self.A_ub = np.array(ub_rows) if ub_rows else None
        self.b_ub = np.array(ub_rhs) if ub_rhs else None
        eq = program._matrix(program.eq_rows)
        self.A_eq = np.hstack([eq, np.zeros((eq.shape[0], aux))]) if eq.shape[0] else None
        self.bounds = program.bounds + [(0, None)] * aux


class _CvxpyForm:
    """Parameterized cvxpy problem; objective and equality rhs are Parameters."""

    def __init__(self, program: ConicProgram):
        if cp is None:
            raise ImportError("cvxpy is required for programs with l2/lp cones")
        n = program.size
        self.z = cp.Variable(n)
        self.objective = cp.Parameter(n)
        constraints = []
        self.rhs = None
        if program.eq_rows:
            self.rhs = cp.Parameter(len(program.eq_rows))
            constraints.append(program._matrix(program.eq_rows) @ self.z == self.rhs)
        if program.ub_rows:
            constraints.append(program._matrix(program.ub_rows) @ self.z <= np.array(program.ub_rhs))
        lower = np.array(program._lower)
        upper = np.array(program._upper)
        finite_lo = np.flatnonzero(np.isfinite(lower))
        finite_hi = np.flatnonzero(np.isfinite(upper))
        if finite_lo.size:
            constraints.append(self.z[finite_lo] >= lower[finite_lo])
        if finite_hi.size:
            constraints.append(self.z[finite_hi] <= upper[finite_hi])
        for cone in program.cones:
            p = "inf" if cone.order == np.inf else cone.order
            constraints.append(
                cp.norm(cone.M @ self.z + cone.m0, p) <= cone.c @ self.z + cone.c0
            )
        self.problem = cp.Problem(cp.Minimize(self.objective @ self.z), constraints)


class FeasibilityEngine:
    """Routes programs to HiGHS when polyhedral and to cvxpy otherwise."""

    def __init__(self, solver: Optional[str] = None):
        self.solver = solver or settings.SOLVER
        self.solve_count = 0
        self.failure_count = 0
        self._counter_lock = threading.Lock()

    def solve(self, program: ConicProgram, objective: np.ndarray,
              eq_rhs: Optional[np.ndarray] = None) -> SolveResult:
        objective = np.asarray(objective, dtype=float)
        rhs = np.asarray(program.eq_rhs if eq_rhs is None else eq_rhs, dtype=float)
        with self._counter_lock:
            self.solve_count += 1
        if program.polyhedral:
            result = self._solve_highs(program, objective, rhs)
        else:
            result = self._solve_cvxpy(program, objective, rhs)
        if result.status is SolveStatus.FAILED:
            with self._counter_lock:
                self.failure_count += 1
            logger.warning(f"Solver failure ({result.backend}): {result.message}")
        return result

    def _solve_highs(self, program: ConicProgram, objective: np.ndarray,
                     rhs: np.ndarray) -> SolveResult:
        with program._lock:
            form = program._compiled.get("highs")
            if form is None:
                form = program._compiled["highs"] = _LinearForm(program)
        c = np.concatenate([objective, np.zeros(form.aux)])
        res = linprog(
            c,
            A_ub=form.A_ub,
            b_ub=form.b_ub,
            A_eq=form.A_eq,
            b_eq=rhs if form.A_eq is not None else None,
            bounds=form.bounds,
            method="highs",
        )
        if res.status == 0:
            return SolveResult(SolveStatus.OPTIMAL, float(res.fun), program.split(res.x[:form.n]), "highs")
        if res.status == 2:
            return SolveResult(SolveStatus.INFEASIBLE, backend="highs", message=res.message)
        return SolveResult(SolveStatus.FAILED, backend="highs", message=res.message)

    def _solve_cvxpy(self, program: ConicProgram, objective: np.ndarray,
                     rhs: np.ndarray) -> SolveResult:
        # parameters and z.value are shared by every caller
        with program._lock:
            form = program._compiled.get("cvxpy")
            if form is None:
                form = program._compiled["cvxpy"] = _CvxpyForm(program)
            form.objective.value = objective
            if form.rhs is not None:
                form.rhs.value = rhs
            try:
                form.problem.solve(solver=self.solver, verbose=False)
            except cp.error.SolverError as exc:
                return SolveResult(SolveStatus.FAILED, backend=self.solver, message=str(exc))
            status = form.problem.status
            value = form.problem.value
            z = None if form.z.value is None else np.array(form.z.value)
        if status in ("optimal", "optimal_inaccurate"):
            return SolveResult(
                SolveStatus.OPTIMAL,
                float(value),
                program.split(z),
                self.solver,
                status,
            )
        if status in ("infeasible", "infeasible_inaccurate"):
            return SolveResult(SolveStatus.INFEASIBLE, backend=self.solver, message=status)
        return SolveResult(SolveStatus.FAILED, backend=self.solver, message=status)

    def health_check(self) -> Dict[str, object]:
        """Which backends can run in this environment"""
        installed = sorted(cp.installed_solvers()) if cp is not None else []
        return {
            "highs": True,
            "cvxpy": cp is not None,
            "conic_solver": self.solver,
            "conic_solver_available": self.solver in installed,
            "installed_solvers": installed,
            "solve_count": self.solve_count,
            "failure_count": self.failure_count,
        }


# Global engine
feasibility_engine = FeasibilityEngine()
