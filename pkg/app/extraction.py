"""Extraction attacks recovering the hidden hyperplane from (robust) counterfactual queries."""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from app.config import Tolerance, settings
from app.errors import (
    DegenerateDirectionError,
    DimensionMismatchError,
    NoConsistentOrientationError,
    NormNotSupportedError,
    RankDeficiencyError,
)
from app.logging_config import get_logger
from app.models import Hyperplane, QueryKind, RobustnessSpec
from app.norms import (
    ArrayLike,
    NormFamily,
    NormKind,
    as_vector,
    basis_containing,
    dual_norm_eval,
    norm_eval,
    norm_gradient,
)
from app.oracle import CounterfactualOracle
from app.schemas import AttackKind, DegeneratePath, ExtractionReport

logger = get_logger(__name__)

EQUIVALENCE_TOL = 1e-7


def _unit(p: int, i: int) -> np.ndarray:
    e = np.zeros(p)
    e[i] = 1.0
    return e


def _normalized(z: np.ndarray) -> np.ndarray:
    return z / np.linalg.norm(z)


def hyperplanes_equivalent(h1: Hyperplane, h2: Hyperplane,
                           tol: float = EQUIVALENCE_TOL) -> Tuple[bool, float]:
    """(equivalent, residual) with residual = min over s = +-1 of ||n1 - s n2||_2."""
    if h1.dimension != h2.dimension:
        raise DimensionMismatchError(h1.dimension, h2.dimension, "hyperplane")
    n1 = _normalized(h1.params)
    n2 = _normalized(h2.params)
    residual = float(min(np.linalg.norm(n1 - n2), np.linalg.norm(n1 + n2)))
    return residual <= tol, residual


def orientation_flipped(h1: Hyperplane, h2: Hyperplane) -> bool:
    """True when h2 describes the same hyperplane as h1 with classes swapped."""
    return float(h1.params @ h2.params) < 0


def classification_agreement(h1: Hyperplane, h2: Hyperplane, samples: int = 10_000,
                             seed: int = 0, band: float = 1e-6) -> float:
    """Fraction of random points off the band |margin| <= band * scale labeled alike."""
    rng = np.random.default_rng(seed)
    a = h1.weights
    anchor = a * h1.b / float(a @ a)
    spread = max(1.0, float(np.linalg.norm(anchor)))
    points = anchor + spread * rng.standard_normal((samples, h1.dimension))
    m1 = (points @ a - h1.b) / np.linalg.norm(a)
    m2 = points @ h2.weights - h2.b
    keep = np.abs(m1) > band * spread
    if not np.any(keep):
        return 1.0
    return float(np.mean((m1[keep] >= 0) == (m2[keep] >= 0)))


def solve_hyperplane_from_boundary_points(points: Sequence[ArrayLike],
                                          fixed_b: Optional[float] = None,
                                          rank_tol: Optional[float] = None) -> Hyperplane:
    """Nonzero solution of a^T x_i - b = 0, normalized to ||a||_2 = 1, first nonzero a_i > 0."""
    rank_tol = settings.RANK_TOL if rank_tol is None else rank_tol
    if len(points) == 0:
        raise RankDeficiencyError(0, 1, "degenerate query set: no points")
    X = np.array([as_vector(x, name="point") for x in points])
    p = X.shape[1]
    if fixed_b is None:
        M = np.hstack([X, -np.ones((len(X), 1))])
    elif fixed_b == 0:
        M = X
    else:
        # a^T x_i = fixed_b fixes the scale, so a is unique when X has rank p
        a, _, rank, _ = np.linalg.lstsq(X, np.full(len(X), float(fixed_b)), rcond=rank_tol)
        if rank < p:
            raise RankDeficiencyError(int(rank), p)
        return _canonical(a, float(fixed_b))
    _, s, vt = np.linalg.svd(M, full_matrices=True)
    rank = int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
    nullity = M.shape[1] - rank
    if nullity != 1:
        raise RankDeficiencyError(rank, M.shape[1] - 1)
    z = vt[-1]
    if fixed_b is None:
        return _canonical(z[:p], z[p])
    return _canonical(z, 0.0)


def _canonical(a: np.ndarray, b: float) -> Hyperplane:
    scale = float(np.linalg.norm(a))
    if scale == 0:
        raise DegenerateDirectionError("solution has a = 0")
    a = a / scale
    b = b / scale
    first = np.flatnonzero(np.abs(a) > settings.tolerance.bound(1.0))[0]
    if a[first] < 0:
        a, b = -a, -b
    return Hyperplane.of(a, b)


def _oriented(h: Hyperplane, x: np.ndarray, label: int) -> Hyperplane:
    """h or -h, whichever assigns `label` to the off-boundary point x."""
    agrees = (h.margin(x) >= 0) == (label > 0)
    return h if agrees else h.scaled(-1.0)


def _positively_normalized(a: np.ndarray, b: float) -> Hyperplane:
    scale = float(np.linalg.norm(a))
    return Hyperplane.of(a / scale, b / scale)


def _report(oracle: CounterfactualOracle, attack: AttackKind, recovered: Hyperplane,
            path: DegeneratePath = DegeneratePath.NONE, notes: Optional[List[str]] = None) -> ExtractionReport:
    hidden = oracle.reveal()
    equivalent, residual = hyperplanes_equivalent(hidden, recovered)
    report = ExtractionReport(
        attack=attack,
        recovered=recovered,
        queries_cf=oracle.ledger.count(QueryKind.CF),
        queries_rcf=oracle.ledger.count(QueryKind.RCF),
        queries_factual=oracle.ledger.count(QueryKind.FACTUAL),
        equivalence_residual=residual,
        equivalent=equivalent,
        orientation_flipped=orientation_flipped(hidden, recovered),
        degenerate_path=path,
        notes=notes or [],
    )
    logger.info(
        "Extraction finished",
        extra={"attack": attack.value, "dimension": oracle.dimension, "norm1": str(oracle.norm1)}
    )
    return report


def _require_differentiable(norm1: NormKind, fallback: str) -> None:
    if not norm1.differentiable:
        raise NormNotSupportedError(f"{norm1} is not differentiable; use {fallback}")


def _require_polyhedral(norm1: NormKind) -> None:
    if not norm1.polyhedral:
        raise NormNotSupportedError(f"{norm1} is differentiable; use the differentiable attack")


def extract_cf_differentiable(oracle: CounterfactualOracle, x_F: ArrayLike) -> ExtractionReport:
    """One counterfactual query: a ~ grad ||x_CF - x_F||, b = a^T x_CF."""
    _require_differentiable(oracle.norm1, "extract_cf_nondifferentiable")
    p = oracle.dimension
    x = as_vector(x_F, dim=p, name="x_F")
    path = DegeneratePath.NONE
    x_cf = oracle.counterfactual(x)
    if np.array_equal(x_cf, x):
        # x_F sits on the boundary: step off it along the axes
        path = DegeneratePath.BOUNDARY_FACTUAL
        for i in range(p):
            shifted = x + _unit(p, i)
            x_cf = oracle.counterfactual(shifted)
            if not np.array_equal(x_cf, shifted):
                x = shifted
                break
    g = norm_gradient(x_cf - x, oracle.norm1)
    label = oracle.factual(x)
    a_hat = -label * g
    b_hat = float(a_hat @ x_cf)
    notes = ["one factual query spent to orient the classes"]
    return _report(oracle, AttackKind.CF_DIFF, _positively_normalized(a_hat, b_hat), path, notes)


def extract_cf_nondifferentiable(oracle: CounterfactualOracle) -> ExtractionReport:
    """Query e^1, e^2, ... for a direction, then query the counterfactuals of a basis containing it."""
    _require_polyhedral(oracle.norm1)
    p = oracle.dimension
    norm1 = oracle.norm1
    on_plane: List[np.ndarray] = []
    start = direction = None
    for i in range(p):
        e = _unit(p, i)
        cf = oracle.counterfactual(e)
        if not np.array_equal(cf, e):
            start, direction = e, cf - e
            on_plane.append(cf)
            break
        on_plane.append(cf)

    path = DegeneratePath.NONE
    notes: List[str] = []
    if direction is None:
        # e^1..e^p all lie on the hyperplane
        path = DegeneratePath.BOUNDARY_FACTUAL
        recovered = solve_hyperplane_from_boundary_points(on_plane)
        start = on_plane[0] + recovered.weights
        notes.append("every query point lies on the hyperplane")
    else:
        degenerate_start = len(on_plane) > 1
        if degenerate_start:
            path = DegeneratePath.BOUNDARY_FACTUAL
            notes.append(f"{len(on_plane) - 1} query point(s) on the hyperplane before a direction was found")
        v_hat = direction / norm_eval(direction, norm1)
        # a degenerate start stops as soon as the system pins the hyperplane
        if not (degenerate_start and _has_unique_solution(on_plane)):
            for u in basis_containing(v_hat):
                on_plane.append(oracle.counterfactual(u))
                if degenerate_start and _has_unique_solution(on_plane):
                    break
        recovered = _solve_collected(on_plane)
        if any(not np.any(x) for x in on_plane):
            path = DegeneratePath.ZERO_CF
            notes.append("a counterfactual equals 0, so b = 0")

    label = oracle.factual(start)
    notes.append("one factual query spent to orient the classes")
    return _report(oracle, AttackKind.CF_NONDIFF, _oriented(recovered, start, label), path, notes)


def _has_unique_solution(points: List[np.ndarray]) -> bool:
    try:
        _solve_collected(points)
    except RankDeficiencyError:
        return False
    return True


def _solve_collected(points: List[np.ndarray]) -> Hyperplane:
    zero = [x for x in points if not np.any(x)]
    if zero:
        others = [x for x in points if np.any(x)]
        return solve_hyperplane_from_boundary_points(others, fixed_b=0.0)
    return solve_hyperplane_from_boundary_points(points)


def extract_rcf_differentiable(oracle: CounterfactualOracle, x_F: ArrayLike) -> ExtractionReport:
    """One factual plus one robust counterfactual query."""
    _require_differentiable(oracle.norm1, "extract_rcf_nondifferentiable")
    spec = _spec(oracle)
    x = as_vector(x_F, dim=oracle.dimension, name="x_F")
    q = oracle.factual(x)
    x_rcf = oracle.robust_counterfactual(x)
    g = norm_gradient(x_rcf - x, oracle.norm1)
    # the step goes against the factual side, so -q orients g like a
    a_hat = -q * g
    b_hat = float(a_hat @ x_rcf) + q * spec.rho * dual_norm_eval(a_hat, spec.norm2)
    path = DegeneratePath.ZERO_CF if not np.any(x_rcf) else DegeneratePath.NONE
    return _report(oracle, AttackKind.RCF_DIFF, _positively_normalized(a_hat, b_hat), path)


def _spec(oracle: CounterfactualOracle) -> RobustnessSpec:
    if oracle.robustness is None:
        raise NormNotSupportedError("robust attacks need the oracle's robustness spec")
    return oracle.robustness


@dataclass
class CandidateCheck:
    params: np.ndarray
    labels_agree: bool
    touching: bool
    aligned: bool

    @property
    def accepted(self) -> bool:
        return self.labels_agree and self.touching and self.aligned

    def reasons(self) -> List[str]:
        out = []
        if not self.labels_agree:
            out.append("factual labels disagree")
        if not self.touching:
            out.append("touching condition violated")
        if not self.aligned:
            out.append("direction is not a subgradient")
        return out


@dataclass
class RcfRecovery:
    hyperplane: Hyperplane
    candidates: List[CandidateCheck] = field(default_factory=list)
    rank: int = 0


def recover_from_rcf_points(rcf_points: Sequence[ArrayLike], labels: Sequence[int],
                            factual_points: Sequence[ArrayLike], norm1: NormKind,
                            spec: RobustnessSpec, tol: Optional[Tolerance] = None) -> RcfRecovery:
    """Solve a^T x_RCF - b + q rho = 0 under ||a||*_{N2} = 1 and keep the consistent candidate."""
    tol = tol or settings.tolerance
    R = np.array([as_vector(x, name="rcf point") for x in rcf_points])
    X = np.array([as_vector(x, dim=R.shape[1], name="factual point") for x in factual_points])
    q = np.array(labels, dtype=float)
    p = R.shape[1]
    M = np.hstack([R, -np.ones((len(R), 1))])
    rhs = -q * spec.rho

    _, s, vt = np.linalg.svd(M, full_matrices=True)
    rank = int(np.sum(s > settings.RANK_TOL * s[0]))
    z0 = np.linalg.lstsq(M, rhs, rcond=None)[0]
    if rank == p + 1:
        raw = [z0]
    elif rank == p:
        raw = _unit_dual_norm_points(z0, vt[-1], p, spec.norm2.dual(), tol)
    else:
        raise RankDeficiencyError(rank, p)

    checks = [_check_candidate(z, R, X, q, norm1, spec, tol) for z in raw]
    accepted = [c for c in checks if c.accepted]
    if not accepted:
        raise NoConsistentOrientationError()
    first = _normalized(accepted[0].params)
    if any(not np.allclose(_normalized(c.params), first, atol=1e-7) for c in accepted[1:]):
        raise NoConsistentOrientationError("no consistent orientation: several candidates survive")
    return RcfRecovery(Hyperplane.from_params(accepted[0].params), checks, rank)


def _unit_dual_norm_points(z0: np.ndarray, n: np.ndarray, p: int, dual: NormKind,
                           tol: Tolerance) -> List[np.ndarray]:
    """Points z0 + t n on the solution line whose a-part has unit `dual` norm."""
    a0, da = z0[:p], n[:p]
    if not np.any(np.abs(da) > tol.bound(1.0)):
        raise RankDeficiencyError(p, p, "degenerate query set: solution line leaves a fixed")
    if dual.family is NormFamily.L2:
        ts = _quadratic_roots(float(da @ da), 2.0 * float(a0 @ da), float(a0 @ a0) - 1.0)
    elif dual.polyhedral:
        ts = _piecewise_linear_roots(a0, da, dual, tol)
    else:
        ts = _convex_roots(lambda t: float(np.linalg.norm(a0 + t * da, ord=dual.order)) - 1.0)
    candidates: List[np.ndarray] = []
    for t in ts:
        z = z0 + t * n
        if not any(np.allclose(z, c, atol=1e-9) for c in candidates):
            candidates.append(z)
    return candidates


def _quadratic_roots(A: float, B: float, C: float) -> List[float]:
    disc = B * B - 4 * A * C
    if disc < 0:
        return []
    root = np.sqrt(disc)
    return [(-B - root) / (2 * A), (-B + root) / (2 * A)]


def _piecewise_linear_roots(a0: np.ndarray, da: np.ndarray, dual: NormKind,
                            tol: Tolerance) -> List[float]:
    """Roots of ||a0 + t da|| = 1 for l1/linf by enumerating the linear pieces."""
    ts: List[float] = []
    if dual.family is NormFamily.LINF:
        # each active coordinate i with sign s gives s (a0_i + t da_i) = 1
        for i in range(a0.size):
            if da[i] == 0:
                continue
            for sign in (1.0, -1.0):
                t = (sign - a0[i]) / da[i]
                if tol.close(float(np.max(np.abs(a0 + t * da))), 1.0, scale=1.0):
                    ts.append(float(t))
        return ts
    # l1: breakpoints where a coordinate changes sign; linear in between
    breaks = sorted({float(-a0[i] / da[i]) for i in range(a0.size) if da[i] != 0})
    edges = [-np.inf] + breaks + [np.inf]
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = _segment_split(lo, hi)
        signs = np.sign(a0 + mid * da)
        slope = float(signs @ da)
        offset = float(signs @ a0)
        if slope == 0:
            continue
        t = (1.0 - offset) / slope
        if lo - 1e-12 <= t <= hi + 1e-12:
            ts.append(float(t))
    return ts


def _segment_split(lo: float, hi: float) -> float:
    if np.isinf(lo) and np.isinf(hi):
        return 0.0
    if np.isinf(lo):
        return hi - 1.0
    if np.isinf(hi):
        return lo + 1.0
    return 0.5 * (lo + hi)


def _convex_roots(phi) -> List[float]:
    """Both roots of a coercive convex function of one variable, if it dips below 0."""
    t_min = float(minimize_scalar(phi).x)
    if phi(t_min) > 0:
        return []
    roots = []
    for direction in (-1.0, 1.0):
        step = 1.0
        while phi(t_min + direction * step) <= 0:
            step *= 2.0
        lo, hi = sorted((t_min, t_min + direction * step))
        roots.append(brentq(phi, lo, hi, xtol=1e-15))
    return roots


def _check_candidate(z: np.ndarray, R: np.ndarray, X: np.ndarray, q: np.ndarray,
                     norm1: NormKind, spec: RobustnessSpec, tol: Tolerance) -> CandidateCheck:
    p = R.shape[1]
    a, b = z[:p], z[p]
    scale = max(1.0, float(np.max(np.abs(z))))
    margins = X @ a - b
    labels_agree = bool(np.all(q * margins >= -tol.bound(scale)))
    dual2 = dual_norm_eval(a, spec.norm2) if np.any(a) else 0.0
    touch = R @ a - b + q * spec.rho * dual2
    touching = bool(np.all(np.abs(touch) <= tol.bound(scale) * 10))
    dual1 = dual_norm_eval(a, norm1) if np.any(a) else 0.0
    aligned = True
    for r, x, label in zip(R, X, q):
        w = r - x
        lhs = -label * float(a @ w)
        rhs = dual1 * norm_eval(w, norm1)
        if lhs < rhs - tol.bound(rhs) * 10:
            aligned = False
            break
    return CandidateCheck(z, labels_agree, touching, aligned)


def extract_rcf_nondifferentiable(oracle: CounterfactualOracle) -> ExtractionReport:
    """Query schedule of the counterfactual attack, each point queried factually then robustly."""
    _require_polyhedral(oracle.norm1)
    spec = _spec(oracle)
    p = oracle.dimension
    factual_points: List[np.ndarray] = []
    labels: List[int] = []
    rcf_points: List[np.ndarray] = []

    def ask(x: np.ndarray) -> np.ndarray:
        labels.append(oracle.factual(x))
        factual_points.append(x)
        r = oracle.robust_counterfactual(x)
        rcf_points.append(r)
        return r

    e1 = _unit(p, 0)
    direction = ask(e1) - e1
    v_hat = direction / norm_eval(direction, oracle.norm1)
    for u in basis_containing(v_hat):
        # a vertex direction can repeat e^1; a repeated point adds no equation
        if np.array_equal(u, e1):
            u = -u
        ask(u)

    recovery = recover_from_rcf_points(rcf_points, labels, factual_points, oracle.norm1, spec)
    path = DegeneratePath.ZERO_CF if any(not np.any(r) for r in rcf_points) else DegeneratePath.NONE
    rejected = sum(1 for c in recovery.candidates if not c.accepted)
    notes = [f"{len(recovery.candidates)} candidate(s), {rejected} rejected"]
    return _report(oracle, AttackKind.RCF_NONDIFF, recovery.hyperplane, path, notes)
