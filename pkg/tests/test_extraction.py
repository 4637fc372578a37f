import numpy as np
import pytest

from app.errors import (
    DimensionMismatchError,
    NormNotSupportedError,
    RankDeficiencyError,
)
from app.extraction import (
    classification_agreement,
    extract_cf_differentiable,
    extract_cf_nondifferentiable,
    extract_rcf_differentiable,
    extract_rcf_nondifferentiable,
    hyperplanes_equivalent,
    orientation_flipped,
    recover_from_rcf_points,
    solve_hyperplane_from_boundary_points,
)
from app.models import Hyperplane, RobustnessSpec, TieBreakPolicy
from app.norms import NormKind
from app.oracle import CounterfactualOracle
from app.schemas import AttackKind, DegeneratePath


class TestEquivalence:
    def test_positive_rescaling(self, hidden):
        equivalent, residual = hyperplanes_equivalent(hidden, hidden.scaled(2.5))
        assert equivalent
        assert residual <= 1e-12
        assert not orientation_flipped(hidden, hidden.scaled(2.5))

    def test_negation_is_flagged(self, hidden):
        equivalent, _ = hyperplanes_equivalent(hidden, hidden.scaled(-1.0))
        assert equivalent
        assert orientation_flipped(hidden, hidden.scaled(-1.0))

    def test_different_planes(self, hidden):
        equivalent, residual = hyperplanes_equivalent(hidden, Hyperplane.of([2.0, -1.0], 3.1))
        assert not equivalent
        assert residual > 1e-3

    def test_dimension_mismatch(self, hidden):
        with pytest.raises(DimensionMismatchError):
            hyperplanes_equivalent(hidden, Hyperplane.of([1.0, 1.0, 1.0], 0.0))

    def test_agreement(self, hidden):
        assert classification_agreement(hidden, hidden.scaled(3.0), samples=2000) == 1.0
        assert classification_agreement(hidden, hidden.scaled(-1.0), samples=2000) == 0.0


class TestBoundarySolve:
    def test_worked_example_points(self, hidden):
        recovered = solve_hyperplane_from_boundary_points([[2.0, 1.0], [1.0, -1.0]])
        assert hyperplanes_equivalent(hidden, recovered)[0]
        assert np.linalg.norm(recovered.weights) == pytest.approx(1.0)
        assert recovered.a[0] > 0

    def test_fixed_offset(self, hidden):
        recovered = solve_hyperplane_from_boundary_points([[2.0, 1.0], [1.0, -1.0]], fixed_b=1.0)
        assert hyperplanes_equivalent(hidden, recovered)[0]

    def test_too_few_points(self):
        with pytest.raises(RankDeficiencyError):
            solve_hyperplane_from_boundary_points([[2.0, 1.0]])

    def test_no_points(self):
        with pytest.raises(RankDeficiencyError):
            solve_hyperplane_from_boundary_points([])


class TestCounterfactualAttacks:
    def test_nondifferentiable_worked_example(self, cf_oracle):
        report = extract_cf_nondifferentiable(cf_oracle)
        assert report.attack is AttackKind.CF_NONDIFF
        assert report.equivalent
        assert not report.orientation_flipped
        assert report.queries_cf == 3
        assert report.queries_factual == 1
        assert report.degenerate_path is DegeneratePath.NONE

    @pytest.mark.parametrize("p", [2, 5, 25])
    def test_differentiable_single_query(self, p, rng):
        hidden = Hyperplane.of(rng.standard_normal(p), rng.standard_normal())
        oracle = CounterfactualOracle(hidden, NormKind.l2())
        report = extract_cf_differentiable(oracle, rng.standard_normal(p))
        assert report.equivalent
        assert not report.orientation_flipped
        assert report.queries_cf == 1

    def test_differentiable_lp3(self, rng):
        hidden = Hyperplane.of(rng.standard_normal(6), 0.7)
        oracle = CounterfactualOracle(hidden, NormKind.lp(3))
        report = extract_cf_differentiable(oracle, np.zeros(6))
        assert report.equivalent

    def test_factual_on_boundary_steps_off(self, hidden, l2):
        oracle = CounterfactualOracle(hidden, l2)
        report = extract_cf_differentiable(oracle, [2.0, 1.0])
        assert report.equivalent
        assert report.degenerate_path is DegeneratePath.BOUNDARY_FACTUAL
        assert report.queries_cf == 2

    def test_every_query_point_on_the_hyperplane(self, linf):
        oracle = CounterfactualOracle(Hyperplane.of([1.0, 1.0], 1.0), linf)
        report = extract_cf_nondifferentiable(oracle)
        assert report.equivalent
        assert not report.orientation_flipped
        assert report.degenerate_path is DegeneratePath.BOUNDARY_FACTUAL
        assert report.queries_cf == 2

    @pytest.mark.parametrize("norm1,a", [
        (NormKind.l1(), [1.0, -1.0, 1.0]),
        (NormKind.linf(), [1.0, 0.0, -2.0]),
    ])
    @pytest.mark.parametrize("policy", [
        TieBreakPolicy.vertex(),
        TieBreakPolicy.face_interior(0.37),
        TieBreakPolicy.seeded(4),
    ])
    def test_tied_hidden_models(self, norm1, a, policy):
        oracle = CounterfactualOracle(Hyperplane.of(a, 0.5), norm1, policy=policy)
        report = extract_cf_nondifferentiable(oracle)
        assert report.equivalent
        assert not report.orientation_flipped

    def test_norm_family_guards(self, cf_oracle, hidden, l2):
        with pytest.raises(NormNotSupportedError):
            extract_cf_differentiable(cf_oracle, [0.0, 0.0])
        with pytest.raises(NormNotSupportedError):
            extract_cf_nondifferentiable(CounterfactualOracle(hidden, l2))


class TestRobustAttacks:
    def test_nondifferentiable_worked_example(self, rcf_oracle):
        report = extract_rcf_nondifferentiable(rcf_oracle)
        assert report.attack is AttackKind.RCF_NONDIFF
        assert report.equivalent
        assert not report.orientation_flipped
        assert report.queries_rcf == 3
        assert report.queries_factual == 3

    @pytest.mark.parametrize("norm2", [NormKind.l1(), NormKind.l2(), NormKind.linf(), NormKind.lp(3)])
    def test_differentiable(self, norm2, rng):
        hidden = Hyperplane.of(rng.standard_normal(4), rng.standard_normal())
        spec = RobustnessSpec(norm2=norm2, rho=0.5)
        oracle = CounterfactualOracle(hidden, NormKind.l2(), robustness=spec)
        report = extract_rcf_differentiable(oracle, rng.standard_normal(4))
        assert report.equivalent
        assert not report.orientation_flipped
        assert report.queries_rcf == 1
        assert report.queries_factual == 1

    @pytest.mark.parametrize("norm1,a", [
        (NormKind.l1(), [1.0, -1.0, 1.0]),
        (NormKind.l1(), [-2.0, 0.5, 2.0]),
        (NormKind.linf(), [1.0, 0.0, -2.0]),
    ])
    @pytest.mark.parametrize("policy", [
        TieBreakPolicy.vertex(),
        TieBreakPolicy.face_interior(0.37),
        TieBreakPolicy.seeded(4),
    ])
    def test_tied_hidden_models(self, norm1, a, policy):
        spec = RobustnessSpec(norm2=NormKind.l2(), rho=0.5)
        oracle = CounterfactualOracle(Hyperplane.of(a, 0.5), norm1, robustness=spec, policy=policy)
        report = extract_rcf_nondifferentiable(oracle)
        assert report.equivalent
        assert not report.orientation_flipped
        assert report.queries_rcf == report.queries_factual == 4

    def test_needs_spec(self, cf_oracle):
        with pytest.raises(NormNotSupportedError):
            extract_rcf_nondifferentiable(cf_oracle)


class TestRcfRecovery:
    def test_two_candidates_one_rejected(self, linf, robust_spec):
        recovery = recover_from_rcf_points(
            rcf_points=[[4 / 3, 5 / 3], [5 / 3, -5 / 3]],
            labels=[1, -1],
            factual_points=[[3.0, 0.0], [-1.0, 1.0]],
            norm1=linf,
            spec=robust_spec,
        )
        assert recovery.rank == 2
        assert len(recovery.candidates) == 2
        accepted = [c for c in recovery.candidates if c.accepted]
        rejected = [c for c in recovery.candidates if not c.accepted]
        assert len(accepted) == 1
        assert np.allclose(accepted[0].params, [1.0, -0.5, 1.5])
        assert np.allclose(rejected[0].params, [-1.0, -0.7, -1.5])
        assert "factual labels disagree" in rejected[0].reasons()
        assert np.allclose(recovery.hyperplane.params, [1.0, -0.5, 1.5])


class TestScaledHiddenModels:
    @pytest.mark.parametrize("factor", [0.05, 4.0, 123.0])
    def test_counterfactual_attack(self, factor, rng, linf):
        hidden = Hyperplane.of(rng.standard_normal(5), rng.standard_normal())
        base = CounterfactualOracle(hidden, linf)
        scaled = CounterfactualOracle(hidden.scaled(factor), linf)
        first = extract_cf_nondifferentiable(base)
        second = extract_cf_nondifferentiable(scaled)
        assert hyperplanes_equivalent(first.recovered, second.recovered)[0]
        assert second.equivalent and not second.orientation_flipped
        assert _same_ledger(base.ledger, scaled.ledger)

    @pytest.mark.parametrize("factor", [0.05, 4.0, 123.0])
    def test_robust_attack(self, factor, rng, l1):
        spec = RobustnessSpec(norm2=NormKind.l2(), rho=0.5)
        hidden = Hyperplane.of(rng.standard_normal(4), rng.standard_normal())
        base = CounterfactualOracle(hidden, l1, robustness=spec)
        scaled = CounterfactualOracle(hidden.scaled(factor), l1, robustness=spec)
        first = extract_rcf_nondifferentiable(base)
        second = extract_rcf_nondifferentiable(scaled)
        assert hyperplanes_equivalent(first.recovered, second.recovered)[0]
        assert second.equivalent and not second.orientation_flipped
        assert _same_ledger(base.ledger, scaled.ledger)


def _same_ledger(first, second) -> bool:
    if len(first) != len(second):
        return False
    for r1, r2 in zip(first, second):
        if r1.kind is not r2.kind or r1.label != r2.label:
            return False
        if not np.allclose(r1.input, r2.input, rtol=1e-9, atol=1e-9):
            return False
        if not np.allclose(r1.output, r2.output, rtol=1e-9, atol=1e-9):
            return False
    return True
