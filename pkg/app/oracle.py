"""Hidden linear model and its factual / counterfactual / robust counterfactual query surface."""
from typing import Optional

import numpy as np

from app.config import settings
from app.errors import ConfigurationError
from app.logging_config import get_logger
from app.models import (
    Hyperplane,
    QueryKind,
    QueryLedger,
    RobustnessSpec,
    TieBreakPolicy,
)
from app.norms import (
    ArrayLike,
    NormKind,
    OptimalFace,
    as_vector,
    dual_maximizer,
    dual_norm_eval,
)

logger = get_logger(__name__)


def classify(h: Hyperplane, x: ArrayLike) -> int:
    """+1 iff a^T x - b >= 0. Exact sign, no tolerance."""
    return 1 if h.margin(x) >= 0 else -1


def factual_query(h: Hyperplane, x: ArrayLike, ledger: QueryLedger) -> int:
    x = as_vector(x, dim=h.dimension, name="x")
    label = classify(h, x)
    ledger.append(QueryKind.FACTUAL, x, label, label=label)
    return label


def boundary_distance(h: Hyperplane, x: ArrayLike, norm1: NormKind) -> float:
    """Signed d = (b - a^T x) / ||a||*_{norm1}; |d| is the norm1 distance to the hyperplane."""
    return -h.margin(x) / dual_norm_eval(h.weights, norm1)


def optimal_direction(h: Hyperplane, norm1: NormKind, policy: TieBreakPolicy,
                      query_index: int = 0) -> np.ndarray:
    """A maximizer v of a^T v over the norm1 unit ball, chosen by `policy`."""
    if policy.variant == "vertex" or norm1.differentiable:
        return dual_maximizer(h.weights, norm1)
    face = OptimalFace(h.weights, norm1)
    if policy.variant == "face_interior":
        return face.interior(policy.theta)
    rng = np.random.default_rng([policy.seed, query_index])
    return face.sample(rng)


def counterfactual_query(h: Hyperplane, x: ArrayLike, norm1: NormKind,
                         policy: TieBreakPolicy, ledger: QueryLedger) -> np.ndarray:
    x = as_vector(x, dim=h.dimension, name="x")
    d = boundary_distance(h, x, norm1)
    v = optimal_direction(h, norm1, policy, len(ledger))
    x_cf = x + d * v
    ledger.append(QueryKind.CF, x, x_cf)
    return x_cf


def robust_counterfactual_query(h: Hyperplane, x: ArrayLike, norm1: NormKind,
                                spec: RobustnessSpec, policy: TieBreakPolicy,
                                ledger: QueryLedger) -> np.ndarray:
    x = as_vector(x, dim=h.dimension, name="x")
    q = classify(h, x)
    a = h.weights
    d = (-h.margin(x) - q * spec.rho * dual_norm_eval(a, spec.norm2)) / dual_norm_eval(a, norm1)
    v = optimal_direction(h, norm1, policy, len(ledger))
    x_rcf = x + d * v
    ledger.append(QueryKind.RCF, x, x_rcf)
    return x_rcf


def verify_robust_ball(h: Hyperplane, center: ArrayLike, spec: RobustnessSpec, label: int,
                       samples: Optional[int] = None, seed: int = 0) -> float:
    """Largest label * (a^T s - b) over sampled s in the rho-ball around center.

    A value <= 0 (within tolerance) means no sampled point of the ball is
    classified back into the class `label`. The analytic worst point is
    always included.
    """
    samples = settings.BALL_SAMPLES if samples is None else samples
    center = as_vector(center, dim=h.dimension, name="center")
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((samples, h.dimension))
    lengths = np.linalg.norm(directions, ord=spec.norm2.order, axis=1)
    radii = spec.rho * rng.uniform(0.0, 1.0, size=samples) ** (1.0 / h.dimension)
    points = center + directions / lengths[:, None] * radii[:, None]
    worst = center + label * spec.rho * dual_maximizer(h.weights, spec.norm2)
    points = np.vstack([points, worst])
    margins = label * (points @ h.weights - h.b)
    return float(margins.max())


class CounterfactualOracle:
    """The hidden model behind a query surface. Every call is recorded in `ledger`."""

    def __init__(self, hidden: Hyperplane, norm1: NormKind,
                 robustness: Optional[RobustnessSpec] = None,
                 policy: Optional[TieBreakPolicy] = None,
                 ledger: Optional[QueryLedger] = None):
        self._hidden = hidden
        self.norm1 = norm1
        self.robustness = robustness
        self.policy = policy or TieBreakPolicy.vertex()
        self.ledger = ledger if ledger is not None else QueryLedger()

    @property
    def dimension(self) -> int:
        return self._hidden.dimension

    def factual(self, x: ArrayLike) -> int:
        label = factual_query(self._hidden, x, self.ledger)
        logger.debug("Factual query", extra={"query_kind": "factual", "dimension": self.dimension})
        return label

    def counterfactual(self, x: ArrayLike) -> np.ndarray:
        x_cf = counterfactual_query(self._hidden, x, self.norm1, self.policy, self.ledger)
        logger.debug("Counterfactual query", extra={"query_kind": "cf", "norm1": str(self.norm1)})
        return x_cf

    def robust_counterfactual(self, x: ArrayLike) -> np.ndarray:
        if self.robustness is None:
            raise ConfigurationError("oracle has no robustness spec; robust counterfactuals unavailable")
        x_rcf = robust_counterfactual_query(
            self._hidden, x, self.norm1, self.robustness, self.policy, self.ledger
        )
        logger.debug("Robust counterfactual query", extra={"query_kind": "rcf", "norm1": str(self.norm1)})
        return x_rcf

    def reveal(self) -> Hyperplane:
        """Hidden model, for evaluation only. Not a query and not recorded."""
        return self._hidden
