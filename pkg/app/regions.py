"""Forced-classification regions of a query ledger.

A ledger constrains the hidden parameters z = (a, b) to a closed convex cone
(possibly relaxed for robust counterfactuals). A point x is forced 'No' when
every consistent z gives a^T x - b < 0 and forced 'Yes' when every consistent
z gives a^T x - b > 0. Strictness is realized as a margin of epsilon under
the normalization ||z||_inf <= 1.
"""
import csv
import threading
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import null_space

from app.config import settings
from app.errors import (
    ConfigurationError,
    DimensionMismatchError,
    InconsistentLedgerError,
    SamplingError,
    SolverFailureError,
)
from app.feasibility import ConicProgram, FeasibilityEngine, SolveStatus, feasibility_engine
from app.logging_config import get_logger
from app.models import (
    DualNormEquality,
    Hyperplane,
    LinearConstraint,
    ModelKind,
    NormConstraint,
    QueryKind,
    QueryLedger,
    RcfObservation,
    RegionLabel,
    RobustnessSpec,
    Sense,
    SubgradientConstraint,
    UncertaintyModel,
)
from app.norms import (
    ArrayLike,
    NormKind,
    as_vector,
    equivalence_constant,
    norm_eval,
    pinned_dual_norm,
    subgradient_rows,
)

logger = get_logger(__name__)

WITNESS_CACHE = 64


# --- model construction ----------------------------------------------------

def _ledger_dimension(ledger: QueryLedger, dimension: Optional[int]) -> int:
    for record in ledger:
        if dimension is None:
            dimension = len(record.input)
        elif len(record.input) != dimension:
            raise DimensionMismatchError(dimension, len(record.input), f"record {record.seq}")
    if dimension is None:
        raise ConfigurationError("empty ledger needs an explicit dimension")
    return dimension


def _known_labels(ledger: QueryLedger) -> Dict[Tuple[float, ...], int]:
    labels: Dict[Tuple[float, ...], int] = {}
    for record in ledger:
        observed = []
        if record.kind is QueryKind.FACTUAL:
            observed.append(int(record.output))
        if record.label is not None:
            observed.append(record.label)
        for label in observed:
            previous = labels.setdefault(record.input, label)
            if previous != label:
                raise InconsistentLedgerError(f"point {list(record.input)} labeled both ways")
    return labels


def _factual_row(x: np.ndarray, label: int, source: str) -> LinearConstraint:
    return LinearConstraint(
        coeffs=tuple(np.append(x, -1.0).tolist()),
        sense=Sense.LE if label < 0 else Sense.GE,
        source=source,
    )


def model_from_ledger(ledger: QueryLedger, norm1: NormKind,
                      spec: Optional[RobustnessSpec] = None,
                      dimension: Optional[int] = None,
                      augment: bool = False) -> UncertaintyModel:
    """Uncertainty cone over (a, b) for every hyperplane consistent with `ledger`."""
    p = _ledger_dimension(ledger, dimension)
    labels = _known_labels(ledger)
    tol = settings.tolerance

    linear: List[LinearConstraint] = []
    balls: List[NormConstraint] = []
    touching: List[DualNormEquality] = []
    subgradients: List[SubgradientConstraint] = []
    observations: List[RcfObservation] = []
    kind = ModelKind.FACTUAL

    for record in ledger:
        x = record.x
        if record.kind is QueryKind.FACTUAL:
            linear.append(_factual_row(x, int(record.output), f"factual#{record.seq}"))
            continue

        y = record.y
        label = labels.get(record.input)
        if record.kind is QueryKind.CF:
            if kind is ModelKind.FACTUAL:
                kind = ModelKind.CF
            linear.append(LinearConstraint(
                coeffs=tuple(np.append(y, -1.0).tolist()),
                sense=Sense.EQ,
                source=f"cf#{record.seq}",
            ))
            radius = norm_eval(x - y, norm1)
            if radius <= tol.bound(norm_eval(x, norm1)):
                continue
            if label is None:
                logger.warning(
                    f"Counterfactual #{record.seq} has no known factual label; ball row omitted",
                    extra={"query_kind": "cf"},
                )
                continue
            balls.append(NormConstraint(
                point=record.input,
                radius=radius,
                norm=norm1,
                side="<=" if label < 0 else ">=",
                source=f"cf-ball#{record.seq}",
                touch=record.output,
            ))
            continue

        # robust counterfactual
        kind = ModelKind.RCF
        if spec is None:
            raise ConfigurationError("ledger holds robust counterfactuals but no robustness spec was given")
        if label is None:
            raise InconsistentLedgerError(f"robust counterfactual #{record.seq} has no factual label")
        w = y - x
        subgradient = -1
        if norm_eval(w, norm1) > tol.bound(norm_eval(x, norm1)):
            subgradients.append(SubgradientConstraint(
                direction=tuple(w.tolist()),
                norm1=norm1,
                orientation=-label,
                source=f"rcf-subgradient#{record.seq}",
            ))
            subgradient = len(subgradients) - 1
        balls.append(NormConstraint(
            point=record.output,
            radius=spec.rho,
            norm=spec.norm2,
            side="<=" if label > 0 else ">=",
            source=f"rcf-ball#{record.seq}",
        ))
        touching.append(DualNormEquality(
            point=record.output,
            radius=spec.rho,
            norm=spec.norm2,
            sign=label,
            subgradient=subgradient,
            relaxation=len(balls) - 1,
            source=f"rcf-touch#{record.seq}",
        ))
        observations.append(RcfObservation(
            seq=record.seq,
            factual=record.input,
            rcf=record.output,
            label=label,
            norm1=norm1,
            spec=spec,
        ))

    model = UncertaintyModel(
        kind=kind,
        dimension=p,
        linear_constraints=tuple(linear),
        norm_constraints=tuple(balls),
        dualnorm_equalities=tuple(touching),
        subgradient_constraints=tuple(subgradients),
        observations=tuple(observations),
    )
    logger.info(
        f"Built {kind.value} model with {model.row_count} rows from {len(ledger)} records",
        extra={"dimension": p, "norm1": str(norm1)},
    )
    if augment and kind is ModelKind.RCF:
        model = augment_rcf_model(model, enable_perspective=True)
    return model


def augment_rcf_model(model: UncertaintyModel, enable_perspective: bool = True) -> UncertaintyModel:
    """Tighten a robust-counterfactual model with points whose class is implied.

    For each observation, x_bar = x_rcf - rho * C * v shares the factual's
    class, v being the unit norm1 direction from the factual to its robust
    counterfactual and C the norm equivalence constant. With norm1 == norm2
    the touch point x_rcf - rho * v lies on the hyperplane, which makes the
    touching equality linear.
    """
    if model.kind is not ModelKind.RCF:
        raise ConfigurationError(f"augmentation needs a robust counterfactual model, got {model.kind.value}")
    if not enable_perspective or model.augmented:
        return model

    tol = settings.tolerance
    linear = list(model.linear_constraints)
    balls = list(model.norm_constraints)
    touching = list(model.dualnorm_equalities)
    exact_sources = set()
    for obs in model.observations:
        x_f = np.array(obs.factual)
        x_rcf = np.array(obs.rcf)
        w = x_rcf - x_f
        length = norm_eval(w, obs.norm1)
        if length <= tol.bound(norm_eval(x_f, obs.norm1)):
            logger.warning(f"Robust counterfactual #{obs.seq} coincides with its factual; no perspective point")
            continue
        v = w / length
        norm2 = obs.spec.norm2
        rho = obs.spec.rho
        if obs.norm1 == norm2:
            x_s = x_rcf - rho * v
            linear.append(LinearConstraint(
                coeffs=tuple(np.append(x_s, -1.0).tolist()),
                sense=Sense.EQ,
                source=f"touch-point#{obs.seq}",
            ))
            exact_sources.add(f"rcf-touch#{obs.seq}")
            balls = [
                ball.model_copy(update={"touch": tuple(x_s.tolist())})
                if ball.source == f"rcf-ball#{obs.seq}" else ball
                for ball in balls
            ]
            continue
        c = equivalence_constant(obs.norm1, norm2, model.dimension)
        x_bar = x_rcf - rho * c * v
        linear.append(_factual_row(x_bar, obs.label, f"perspective#{obs.seq}"))

    touching = [row for row in touching if row.source not in exact_sources]
    return model.model_copy(update={
        "linear_constraints": tuple(linear),
        "norm_constraints": tuple(balls),
        "dualnorm_equalities": tuple(touching),
        "augmented": True,
    })


# --- compilation -----------------------------------------------------------

@dataclass(frozen=True)
class BallRow:
    """rho * ||a||*_norm <= sigma * (x, -1) . z"""

    point: np.ndarray
    radius: float
    norm: NormKind
    sigma: float
    source: str


@dataclass
class CompiledModel:
    dimension: int
    equalities: np.ndarray
    inequalities: np.ndarray
    balls: List[BallRow] = field(default_factory=list)
    relaxed: bool = False
    linearized: int = 0

    @property
    def polyhedral(self) -> bool:
        return all(ball.norm.polyhedral for ball in self.balls)

    def violation(self, z: np.ndarray) -> float:
        """Largest constraint violation of z, 0 when z is consistent."""
        z = np.asarray(z, dtype=float)
        worst = 0.0
        if self.equalities.size:
            worst = max(worst, float(np.abs(self.equalities @ z).max()))
        if self.inequalities.size:
            worst = max(worst, float((self.inequalities @ z).max()))
        for ball in self.balls:
            dual = np.linalg.norm(z[:-1], ord=ball.norm.dual().order)
            slack = ball.radius * dual - ball.sigma * float(np.append(ball.point, -1.0) @ z)
            worst = max(worst, slack)
        return worst


def _pad(rows: np.ndarray, width: int) -> np.ndarray:
    rows = np.atleast_2d(rows) if len(rows) else np.zeros((0, width - 1))
    return np.hstack([rows, np.zeros((rows.shape[0], 1))])


def compile_model(model: UncertaintyModel, linearize_touch: bool = True) -> CompiledModel:
    """Linear equalities, linear inequalities (g . z <= 0) and ball rows of a model.

    A ball row with a known touch point on the hyperplane is equivalent to the
    normal a lying in the subgradient cone of the ball norm at that point;
    with `linearize_touch` such rows are emitted in that linear form.
    """
    p = model.dimension
    width = p + 1
    eq: List[np.ndarray] = []
    ub: List[np.ndarray] = []

    for row in model.linear_constraints:
        coeffs = np.array(row.coeffs)
        if row.sense is Sense.EQ:
            eq.append(coeffs)
        elif row.sense is Sense.LE:
            ub.append(coeffs)
        else:
            ub.append(-coeffs)

    for row in model.subgradient_constraints:
        E, G = subgradient_rows(np.array(row.direction), row.norm1, row.orientation)
        eq.extend(_pad(E, width))
        ub.extend(_pad(G, width))

    dropped = set()
    relaxed = False
    linearized = 0
    for row in model.dualnorm_equalities:
        c = None
        if row.subgradient >= 0:
            sub = model.subgradient_constraints[row.subgradient]
            c = pinned_dual_norm(np.array(sub.direction), sub.norm1, row.norm, sub.orientation)
        if c is None:
            relaxed = True
            continue
        point = np.array(row.point) + row.sign * row.radius * c
        eq.append(np.append(point, -1.0))
        dropped.add(row.relaxation)
        linearized += 1

    balls: List[BallRow] = []
    for i, row in enumerate(model.norm_constraints):
        if i in dropped:
            continue
        if linearize_touch and row.touch is not None:
            # a supports the ball at the touch point
            w = np.array(row.touch) - np.array(row.point)
            E, G = subgradient_rows(w, row.norm, 1 if row.side == "<=" else -1)
            eq.extend(_pad(E, width))
            ub.extend(_pad(G, width))
            linearized += 1
            continue
        balls.append(BallRow(
            point=np.array(row.point),
            radius=row.radius,
            norm=row.norm,
            sigma=-1.0 if row.side == "<=" else 1.0,
            source=row.source,
        ))
    return CompiledModel(
        dimension=p,
        equalities=np.array(eq) if eq else np.zeros((0, width)),
        inequalities=np.array(ub) if ub else np.zeros((0, width)),
        balls=balls,
        relaxed=relaxed,
        linearized=linearized,
    )


def constraint_violation(model: UncertaintyModel, h: Hyperplane) -> float:
    """Violation of the model's rows by h, scaled by ||(a, b)||_inf.

    Touching equalities are evaluated exactly, relaxed or not.
    """
    z = h.params / np.max(np.abs(h.params))
    worst = compile_model(model).violation(z)
    a = z[:-1]
    for row in model.dualnorm_equalities:
        dual = np.linalg.norm(a, ord=row.norm.dual().order)
        residual = float(np.array(row.point) @ a - z[-1]) + row.sign * row.radius * dual
        worst = max(worst, abs(residual))
    return worst


def model_dump(model: UncertaintyModel) -> dict:
    """JSON-ready listing of every row, for audit"""
    compiled = compile_model(model)
    rows = []
    for row in model.linear_constraints:
        rows.append({"type": "linear", **row.model_dump(mode="json")})
    for row in model.norm_constraints:
        rows.append({"type": "norm", **row.model_dump(mode="json")})
    for row in model.subgradient_constraints:
        rows.append({"type": "subgradient", **row.model_dump(mode="json")})
    for row in model.dualnorm_equalities:
        rows.append({"type": "dualnorm_equality", **row.model_dump(mode="json")})
    return {
        "kind": model.kind.value,
        "dimension": model.dimension,
        "augmented": model.augmented,
        "relaxed": compiled.relaxed,
        "linearized": compiled.linearized,
        "row_count": model.row_count,
        "rows": rows,
    }


# --- membership ------------------------------------------------------------

@dataclass
class DualCertificate:
    side: RegionLabel
    residual: float
    epsilon: float
    t: np.ndarray
    v: np.ndarray
    u: np.ndarray

    @property
    def holds(self) -> bool:
        return self.residual < self.epsilon


def _decide(is_no: bool, is_yes: bool) -> RegionLabel:
    if is_no and is_yes:
        # x lies on every consistent hyperplane
        return RegionLabel.UNKNOWN
    if is_no:
        return RegionLabel.NO
    if is_yes:
        return RegionLabel.YES
    return RegionLabel.UNKNOWN


class RegionCertifier:
    """Labels points against one model, reusing compiled programs and witnesses."""

    def __init__(self, model: UncertaintyModel, engine: Optional[FeasibilityEngine] = None,
                 epsilon: Optional[float] = None):
        self.model = model
        self.engine = engine or feasibility_engine
        self.epsilon = settings.REGION_EPSILON if epsilon is None else epsilon
        self.compiled = compile_model(model)
        self._primal: Optional[ConicProgram] = None
        self._dual: Optional[ConicProgram] = None
        self._perspective: Optional[CompiledModel] = None
        self._above: deque = deque(maxlen=WITNESS_CACHE)
        self._below: deque = deque(maxlen=WITNESS_CACHE)
        # membership may be called from several threads on one certifier
        self._lock = threading.RLock()
        if self.compiled.relaxed:
            logger.info("Touching equalities relaxed to their convex counterparts")

    @property
    def dimension(self) -> int:
        return self.model.dimension

    @property
    def perspective(self) -> CompiledModel:
        """Compilation keeping every ball row in conic form, for the dual system"""
        with self._lock:
            if self._perspective is None:
                self._perspective = compile_model(self.model, linearize_touch=False)
            return self._perspective

    def _target(self, x: ArrayLike) -> np.ndarray:
        return np.append(as_vector(x, dim=self.dimension, name="x"), -1.0)

    # primal

    def _primal_program(self) -> ConicProgram:
        with self._lock:
            if self._primal is None:
                self._primal = self._build_primal()
            return self._primal

    def _build_primal(self) -> ConicProgram:
        cm = self.compiled
        p = cm.dimension
        program = ConicProgram()
        program.add_variable("z", p + 1, lower=-1.0, upper=1.0)
        for row in cm.equalities:
            program.add_equality(program.row(z=row))
        for row in cm.inequalities:
            program.add_inequality(program.row(z=row))
        for ball in cm.balls:
            M = np.zeros((p, program.size))
            M[:, :p] = ball.radius * np.eye(p)
            c = program.row(z=ball.sigma * np.append(ball.point, -1.0))
            program.add_norm_cone(ball.norm.dual().order, M, c)
        return program

    def _extreme(self, c: np.ndarray) -> Tuple[float, np.ndarray]:
        """max c . z over the normalized model, with its maximizer"""
        result = self.engine.solve(self._primal_program(), -c)
        if result.status is not SolveStatus.OPTIMAL:
            raise SolverFailureError(result.backend, result.message or result.status.value)
        return -result.value, result.witness["z"]

    def bounds(self, x: ArrayLike) -> Tuple[float, float]:
        """(min, max) of a^T x - b over consistent (a, b) with ||(a, b)||_inf <= 1"""
        c = self._target(x)
        hi, _ = self._extreme(c)
        lo, _ = self._extreme(-c)
        return -lo, hi

    def _witnessed(self, cache: deque, c: np.ndarray) -> bool:
        with self._lock:
            witnesses = list(cache)
        if not witnesses:
            return False
        return bool(np.any(np.array(witnesses) @ c >= self.epsilon))

    def _remember(self, cache: deque, z: np.ndarray) -> None:
        with self._lock:
            cache.append(z)

    def label(self, x: ArrayLike) -> RegionLabel:
        c = self._target(x)
        reaches_up = self._witnessed(self._above, c)
        if not reaches_up:
            hi, z = self._extreme(c)
            reaches_up = hi >= self.epsilon
            if reaches_up:
                self._remember(self._above, z)
        reaches_down = self._witnessed(self._below, -c)
        if not reaches_down:
            lo, z = self._extreme(-c)
            reaches_down = lo >= self.epsilon
            if reaches_down:
                self._remember(self._below, z)
        return _decide(is_no=not reaches_up, is_yes=not reaches_down)

    # dual

    def _dual_program(self) -> ConicProgram:
        with self._lock:
            if self._dual is None:
                self._dual = self._build_dual()
            return self._dual

    def _build_dual(self) -> ConicProgram:
        if self.model.kind not in (ModelKind.FACTUAL, ModelKind.CF):
            raise ConfigurationError(
                f"dual certificates need a factual or counterfactual model, got {self.model.kind.value}"
            )
        cm = self.perspective
        p = cm.dimension
        width = p + 1
        program = ConicProgram()
        program.add_variable("t", len(cm.inequalities), lower=0.0)
        program.add_variable("v", len(cm.equalities))
        program.add_variable("u", len(cm.balls), lower=0.0)
        for j in range(len(cm.balls)):
            program.add_variable(f"y{j}", width)
        program.add_variable("r_plus", width, lower=0.0)
        program.add_variable("r_minus", width, lower=0.0)

        # sum_g t_g g + sum_e v_e e + sum_j y_j + r+ - r- = target
        for i in range(width):
            coeffs = {
                "t": cm.inequalities[:, i],
                "v": cm.equalities[:, i],
                "r_plus": np.eye(width)[i],
                "r_minus": -np.eye(width)[i],
            }
            for j in range(len(cm.balls)):
                coeffs[f"y{j}"] = np.eye(width)[i]
            program.add_equality(program.row(**coeffs))

        for j, ball in enumerate(cm.balls):
            block = program.blocks[f"y{j}"]
            u_col = program.blocks["u"].start + j
            # y_b = sigma * u
            row = program.row()
            row[block.stop - 1] = 1.0
            row[u_col] = -ball.sigma
            program.add_equality(row)
            # ||y_a + sigma * u * x_j||_norm <= rho_j * u
            M = np.zeros((p, program.size))
            M[:, block.start:block.stop - 1] = np.eye(p)
            M[:, u_col] = ball.sigma * ball.point
            c = program.row()
            c[u_col] = ball.radius
            program.add_norm_cone(ball.norm.order, M, c)
        return program

    def certificate(self, x: ArrayLike, side: RegionLabel) -> DualCertificate:
        """Distance (in l1) from the side's target vector to the cone generated by the rows."""
        if side is RegionLabel.UNKNOWN:
            raise ValueError("certificates exist for the Yes and No sides only")
        program = self._dual_program()
        target = self._target(x)
        if side is RegionLabel.YES:
            target = -target
        width = self.dimension + 1
        objective = program.row(r_plus=np.ones(width), r_minus=np.ones(width))
        rhs = np.concatenate([target, np.zeros(len(self.perspective.balls))])
        result = self.engine.solve(program, objective, eq_rhs=rhs)
        if result.status is not SolveStatus.OPTIMAL:
            raise SolverFailureError(result.backend, result.message or result.status.value)
        return DualCertificate(
            side=side,
            residual=max(0.0, float(result.value)),
            epsilon=self.epsilon,
            t=result.witness["t"],
            v=result.witness["v"],
            u=result.witness["u"],
        )

    def label_dual(self, x: ArrayLike) -> RegionLabel:
        is_no = self.certificate(x, RegionLabel.NO).holds
        is_yes = self.certificate(x, RegionLabel.YES).holds
        return _decide(is_no=is_no, is_yes=is_yes)


@lru_cache(maxsize=16)
def _certifier(model: UncertaintyModel) -> RegionCertifier:
    return RegionCertifier(model)


def membership(model: UncertaintyModel, x: ArrayLike) -> RegionLabel:
    return _certifier(model).label(x)


def membership_dual(model: UncertaintyModel, x: ArrayLike) -> RegionLabel:
    return _certifier(model).label_dual(x)


def dual_certificate(model: UncertaintyModel, x: ArrayLike, side: RegionLabel) -> DualCertificate:
    return _certifier(model).certificate(x, side)


# --- sampling --------------------------------------------------------------

@dataclass
class SampleResult:
    hyperplanes: List[Hyperplane]
    acceptance_rate: float
    proposals: int


def sample_consistent_hyperplanes(model: UncertaintyModel, n: int, seed: int = 0,
                                  max_proposals: Optional[int] = None,
                                  batch: Optional[int] = None) -> SampleResult:
    """Uniform draws of consistent (a, b) on the unit sphere.

    With equality rows the sphere of their nullspace is sampled instead, since
    the consistent set has measure zero in the full space.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    max_proposals = settings.MAX_PROPOSALS if max_proposals is None else max_proposals
    batch = settings.SAMPLER_BATCH if batch is None else batch
    tol = settings.SAMPLER_TOL
    cm = compile_model(model)
    width = cm.dimension + 1
    rng = np.random.default_rng(seed)

    basis = np.eye(width)
    if len(cm.equalities):
        basis = null_space(cm.equalities)
        if basis.shape[1] == 0:
            raise SamplingError(0)

    kept: List[np.ndarray] = []
    proposals = 0
    accepted = 0
    while len(kept) < n and proposals < max_proposals:
        size = min(batch, max_proposals - proposals)
        g = rng.standard_normal((size, basis.shape[1]))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        Z = g @ basis.T
        ok = np.linalg.norm(Z[:, :-1], axis=1) > tol
        if len(cm.inequalities):
            ok &= np.all(Z @ cm.inequalities.T <= tol, axis=1)
        for ball in cm.balls:
            dual = np.linalg.norm(Z[:, :-1], ord=ball.norm.dual().order, axis=1)
            ok &= ball.radius * dual - ball.sigma * (Z @ np.append(ball.point, -1.0)) <= tol
        proposals += size
        accepted += int(ok.sum())
        kept.extend(Z[ok][: n - len(kept)])

    if not kept:
        raise SamplingError(proposals)
    rate = accepted / proposals
    logger.debug(f"Sampler kept {len(kept)} hyperplanes, acceptance {rate:.4g}")
    return SampleResult(
        hyperplanes=[Hyperplane.from_params(z) for z in kept],
        acceptance_rate=rate,
        proposals=proposals,
    )


# --- rasters ---------------------------------------------------------------

@dataclass
class RasterGrid:
    """Labels at cell centers; labels[i][j] sits at (xs[j], ys[i])."""

    labels: List[List[RegionLabel]]
    xs: np.ndarray
    ys: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.ys), len(self.xs)

    def count(self, label: RegionLabel) -> int:
        return sum(row.count(label) for row in self.labels)

    def cells(self) -> Iterator[Tuple[float, float, RegionLabel]]:
        for i, y in enumerate(self.ys):
            for j, x in enumerate(self.xs):
                yield float(x), float(y), self.labels[i][j]

    @property
    def cell_size(self) -> Tuple[float, float]:
        return float(self.xs[1] - self.xs[0]), float(self.ys[1] - self.ys[0])


def _label_chunk(model: UncertaintyModel, points: np.ndarray, method: str) -> List[RegionLabel]:
    certifier = RegionCertifier(model)
    decide = certifier.label_dual if method == "dual" else certifier.label
    return [decide(x) for x in points]


def raster(model: UncertaintyModel, lo: Sequence[float], hi: Sequence[float],
           resolution: int, method: str = "primal",
           workers: Optional[int] = None) -> RasterGrid:
    """Row-major grid of labels at the centers of a resolution x resolution raster."""
    if model.dimension != 2:
        raise DimensionMismatchError(2, model.dimension, "raster model")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    workers = settings.WORKERS if workers is None else workers
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    step = (hi - lo) / resolution
    xs = lo[0] + (np.arange(resolution) + 0.5) * step[0]
    ys = lo[1] + (np.arange(resolution) + 0.5) * step[1]
    X1, X2 = np.meshgrid(xs, ys)
    points = np.column_stack([X1.ravel(), X2.ravel()])

    if workers > 1:
        chunks = np.array_split(points, workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_label_chunk, [model] * len(chunks), chunks, [method] * len(chunks))
            flat = [label for part in parts for label in part]
    else:
        flat = _label_chunk(model, points, method)

    labels = [flat[i * resolution:(i + 1) * resolution] for i in range(resolution)]
    grid = RasterGrid(labels=labels, xs=xs, ys=ys)
    logger.info(
        f"Raster {resolution}x{resolution}: {grid.count(RegionLabel.YES)} Yes, "
        f"{grid.count(RegionLabel.NO)} No, {grid.count(RegionLabel.UNKNOWN)} Unknown",
        extra={"dimension": 2},
    )
    return grid


def write_raster_csv(grid: RasterGrid, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x1", "x2", "label"])
        for x, y, label in grid.cells():
            writer.writerow([repr(x), repr(y), label.code])
    return path
