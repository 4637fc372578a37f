"""Hidden-model generators and the fixed two-dimensional figure scenarios."""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from app.errors import ConfigurationError
from app.models import Hyperplane, QueryLedger, RobustnessSpec
from app.norms import NormKind
from app.oracle import CounterfactualOracle
from app.schemas import HiddenFamily

# hidden model of both worked examples: 2 x1 - x2 >= 3 means 'Yes'
WORKED_EXAMPLE = Hyperplane.of([2.0, -1.0], 3.0)
FIGURE_BOX: Tuple[Tuple[float, float], Tuple[float, float]] = ((-4.0, -5.0), (6.0, 5.0))
FIGURE_NORMS = (NormKind.l1(), NormKind.l2(), NormKind.linf())

NO_POINTS = ((-1.0, 1.0), (0.0, 0.0), (1.0, 2.0))
YES_POINTS = ((3.0, 0.0), (4.0, 2.0), (2.0, -2.0))
FACTUAL_POINT = (-1.0, 1.0)


def random_hidden(rng: np.random.Generator, p: int,
                  family: HiddenFamily = HiddenFamily.GENERIC) -> Hyperplane:
    """Random hidden hyperplane; `tied` has a non-unique argmax |a_i|, `sparse` a zero coordinate."""
    a = rng.standard_normal(p)
    b = float(rng.standard_normal())
    if p >= 2 and family is HiddenFamily.TIED:
        i, j = rng.choice(p, size=2, replace=False)
        top = float(np.max(np.abs(a))) + 0.5
        a[i] = top * rng.choice([-1.0, 1.0])
        a[j] = top * rng.choice([-1.0, 1.0])
    elif p >= 2 and family is HiddenFamily.SPARSE:
        a[rng.integers(p)] = 0.0
    return Hyperplane.of(a, b)


@dataclass
class FigurePanel:
    name: str
    ledger: QueryLedger
    norm1: NormKind
    spec: Optional[RobustnessSpec] = None
    hidden: Hyperplane = WORKED_EXAMPLE
    lo: Tuple[float, float] = FIGURE_BOX[0]
    hi: Tuple[float, float] = FIGURE_BOX[1]


def _factual_panel() -> FigurePanel:
    oracle = CounterfactualOracle(WORKED_EXAMPLE, NormKind.linf())
    for x in NO_POINTS + YES_POINTS:
        oracle.factual(x)
    return FigurePanel("fig2", oracle.ledger, oracle.norm1)


def _counterfactual_panels() -> List[FigurePanel]:
    panels = []
    for norm1 in FIGURE_NORMS:
        oracle = CounterfactualOracle(WORKED_EXAMPLE, norm1)
        oracle.factual(FACTUAL_POINT)
        oracle.counterfactual(FACTUAL_POINT)
        panels.append(FigurePanel(f"fig3_{norm1}", oracle.ledger, norm1))
    return panels


def _robust_panels(rho: float = 1.0) -> List[FigurePanel]:
    panels = []
    for norm1 in FIGURE_NORMS:
        for norm2 in FIGURE_NORMS:
            spec = RobustnessSpec(norm2=norm2, rho=rho)
            oracle = CounterfactualOracle(WORKED_EXAMPLE, norm1, robustness=spec)
            oracle.factual(FACTUAL_POINT)
            oracle.robust_counterfactual(FACTUAL_POINT)
            panels.append(FigurePanel(f"fig5_{norm1}_{norm2}", oracle.ledger, norm1, spec))
    return panels


def figure_panels(figure: int) -> List[FigurePanel]:
    if figure == 2:
        return [_factual_panel()]
    if figure == 3:
        return _counterfactual_panels()
    if figure == 5:
        return _robust_panels()
    raise ConfigurationError(f"unknown figure {figure}; choose 2, 3 or 5")
