import numpy as np
import pytest

from app.models import Hyperplane, QueryLedger, RobustnessSpec
from app.norms import NormKind
from app.oracle import CounterfactualOracle
from app.scenarios import WORKED_EXAMPLE


@pytest.fixture
def hidden():
    return WORKED_EXAMPLE


@pytest.fixture
def linf():
    return NormKind.linf()


@pytest.fixture
def l1():
    return NormKind.l1()


@pytest.fixture
def l2():
    return NormKind.l2()


@pytest.fixture
def robust_spec():
    return RobustnessSpec(norm2=NormKind.l1(), rho=1.0)


@pytest.fixture
def cf_oracle(hidden, linf):
    return CounterfactualOracle(hidden, linf)


@pytest.fixture
def rcf_oracle(hidden, linf, robust_spec):
    return CounterfactualOracle(hidden, linf, robustness=robust_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def factual_ledger(hidden):
    """Three 'No' and three 'Yes' factuals around the worked-example hyperplane"""
    oracle = CounterfactualOracle(hidden, NormKind.linf())
    for x in [(-1, 1), (0, 0), (1, 2), (3, 0), (4, 2), (2, -2)]:
        oracle.factual(x)
    return oracle.ledger


def _cf_ledger(hidden: Hyperplane, norm1: NormKind, x=(-1.0, 1.0)) -> QueryLedger:
    oracle = CounterfactualOracle(hidden, norm1)
    oracle.factual(x)
    oracle.counterfactual(x)
    return oracle.ledger


def _rcf_ledger(hidden: Hyperplane, norm1: NormKind, spec: RobustnessSpec, x=(-1.0, 1.0)) -> QueryLedger:
    oracle = CounterfactualOracle(hidden, norm1, robustness=spec)
    oracle.factual(x)
    oracle.robust_counterfactual(x)
    return oracle.ledger


@pytest.fixture
def make_cf_ledger():
    """Factual plus counterfactual at one point"""
    return _cf_ledger


@pytest.fixture
def make_rcf_ledger():
    """Factual plus robust counterfactual at one point"""
    return _rcf_ledger
