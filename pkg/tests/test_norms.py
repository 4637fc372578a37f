import math

import numpy as np
import pytest

from app.errors import DegenerateDirectionError, InvalidVectorError, NormNotSupportedError
from app.norms import (
    NormFamily,
    NormKind,
    OptimalFace,
    as_vector,
    basis_containing,
    dual_maximizer,
    dual_norm_eval,
    equivalence_constant,
    norm_eval,
    norm_gradient,
    optimal_face_vertices,
    pinned_dual_norm,
    subdiff_contains,
    subgradient_rows,
)

ALL_KINDS = [NormKind.l1(), NormKind.l2(), NormKind.linf(), NormKind.lp(3), NormKind.lp(1.5)]


class TestNormKind:
    @pytest.mark.parametrize("text,family", [
        ("L1", NormFamily.L1),
        ("l2", NormFamily.L2),
        ("Linf", NormFamily.LINF),
        ("inf", NormFamily.LINF),
    ])
    def test_parse_named(self, text, family):
        assert NormKind.model_validate(text).family is family

    def test_parse_lp(self):
        kind = NormKind.model_validate("Lp(3)")
        assert kind.family is NormFamily.LP
        assert kind.exponent == 3.0
        assert str(kind) == "Lp(3)"

    def test_rejects_exponent_at_most_one(self):
        with pytest.raises(ValueError):
            NormKind.lp(1.0)

    def test_rejects_unknown_text(self):
        with pytest.raises(ValueError):
            NormKind.model_validate("hamming")

    def test_dual_pairs(self):
        assert NormKind.l1().dual() == NormKind.linf()
        assert NormKind.linf().dual() == NormKind.l1()
        assert NormKind.l2().dual() == NormKind.l2()
        assert NormKind.lp(3).dual() == NormKind.lp(1.5)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_dual_is_involution(self, kind):
        assert kind.dual().dual() == kind

    def test_serializes_as_text(self):
        assert NormKind.linf().model_dump() == "Linf"


class TestEvaluation:
    def test_worked_example_dual_norms(self):
        a = [2.0, -1.0]
        assert dual_norm_eval(a, NormKind.linf()) == pytest.approx(3.0)
        assert dual_norm_eval(a, NormKind.l1()) == pytest.approx(2.0)
        assert dual_norm_eval(a, NormKind.l2()) == pytest.approx(math.sqrt(5.0))

    def test_as_vector_rejects_bad_input(self):
        with pytest.raises(InvalidVectorError):
            as_vector([])
        with pytest.raises(InvalidVectorError):
            as_vector([1.0, float("nan")])
        with pytest.raises(InvalidVectorError):
            as_vector([[1.0, 2.0]])


class TestDualMaximizer:
    def test_linf_sign_vector(self):
        assert np.array_equal(dual_maximizer([2.0, -1.0], NormKind.linf()), [1.0, -1.0])

    def test_linf_zero_coordinate_takes_plus(self):
        assert np.array_equal(dual_maximizer([2.0, 0.0], NormKind.linf()), [1.0, 1.0])

    def test_l1_lowest_index_on_ties(self):
        assert np.array_equal(dual_maximizer([1.0, -1.0], NormKind.l1()), [1.0, 0.0])
        assert np.array_equal(dual_maximizer([2.0, -1.0], NormKind.l1()), [1.0, 0.0])

    def test_l2_direction(self):
        v = dual_maximizer([2.0, -1.0], NormKind.l2())
        assert np.allclose(v, np.array([2.0, -1.0]) / math.sqrt(5.0))

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_attains_dual_norm(self, kind, rng):
        for _ in range(50):
            a = rng.standard_normal(4)
            v = dual_maximizer(a, kind)
            assert norm_eval(v, kind) == pytest.approx(1.0)
            assert float(a @ v) == pytest.approx(dual_norm_eval(a, kind))

    def test_zero_vector_is_degenerate(self):
        with pytest.raises(DegenerateDirectionError):
            dual_maximizer([0.0, 0.0], NormKind.l2())


class TestNormGradient:
    @pytest.mark.parametrize("kind", [NormKind.l2(), NormKind.lp(3), NormKind.lp(1.5)])
    def test_matches_central_differences(self, kind, rng):
        h = 1e-6
        for _ in range(200):
            x = rng.uniform(0.2, 2.0, size=3) * rng.choice([-1.0, 1.0], size=3)
            g = norm_gradient(x, kind)
            for i in range(3):
                e = np.zeros(3)
                e[i] = h
                fd = (norm_eval(x + e, kind) - norm_eval(x - e, kind)) / (2 * h)
                assert abs(g[i] - fd) <= 1e-5

    def test_gradient_is_a_subgradient(self, rng):
        x = rng.standard_normal(5)
        assert subdiff_contains(x, norm_gradient(x, NormKind.lp(3)), NormKind.lp(3))

    def test_rejects_polyhedral_norms(self):
        with pytest.raises(NormNotSupportedError):
            norm_gradient([1.0, 2.0], NormKind.l1())


class TestSubdifferential:
    def test_l1_membership(self):
        assert subdiff_contains([1.0, 0.0], [1.0, 0.5], NormKind.l1())
        assert not subdiff_contains([1.0, 0.0], [1.0, 1.5], NormKind.l1())
        assert not subdiff_contains([1.0, 0.0], [-1.0, 0.0], NormKind.l1())

    def test_l2_rows_pin_a_ray(self):
        w = np.array([3.0, 4.0])
        E, G = subgradient_rows(w, NormKind.l2(), orientation=1)
        good = np.array([0.6, 0.8]) * 2.5
        assert np.allclose(E @ good, 0.0)
        assert np.all(G @ good <= 1e-12)
        assert np.any(G @ -good > 0)

    def test_l1_rows_describe_the_cone(self):
        E, G = subgradient_rows([1.0, 0.0], NormKind.l1(), orientation=1)
        assert E.shape[0] == 0
        assert np.all(G @ np.array([2.0, 1.0]) <= 0)
        assert np.any(G @ np.array([1.0, 2.0]) > 0)

    def test_linf_rows_zero_inactive_coordinates(self):
        E, G = subgradient_rows([1.0, 0.5], NormKind.linf(), orientation=-1)
        assert np.allclose(E, [[0.0, 1.0]])
        assert np.all(G @ np.array([-2.0, 0.0]) <= 0)
        assert np.any(G @ np.array([2.0, 0.0]) > 0)


class TestBasis:
    def test_contains_direction_first(self):
        basis = basis_containing([1.0, -1.0])
        assert np.array_equal(basis[0], [1.0, -1.0])
        assert len(basis) == 2
        assert np.allclose(basis[1], np.array([1.0, 1.0]) / math.sqrt(2.0))

    def test_full_rank(self, rng):
        v = rng.standard_normal(7)
        basis = np.array(basis_containing(v))
        assert basis.shape == (7, 7)
        assert np.linalg.matrix_rank(basis) == 7

    def test_axis_direction(self):
        basis = basis_containing([0.0, 0.0, 2.0])
        assert np.linalg.matrix_rank(np.array(basis)) == 3


class TestEquivalenceConstant:
    def test_named_cases(self):
        assert equivalence_constant(NormKind.l1(), NormKind.l2(), 2) == pytest.approx(math.sqrt(2.0))
        assert equivalence_constant(NormKind.linf(), NormKind.l1(), 2) == pytest.approx(1.0)
        assert equivalence_constant(NormKind.linf(), NormKind.l2(), 9) == pytest.approx(1.0)
        assert equivalence_constant(NormKind.l1(), NormKind.linf(), 5) == pytest.approx(5.0)
        assert equivalence_constant(NormKind.l2(), NormKind.linf(), 4) == pytest.approx(2.0)
        assert equivalence_constant(NormKind.l1(), NormKind.l1(), 5) == 1.0

    @pytest.mark.parametrize("n1", ALL_KINDS)
    @pytest.mark.parametrize("n2", ALL_KINDS)
    def test_bounds_hold(self, n1, n2, rng):
        c = equivalence_constant(n1, n2, 4)
        for _ in range(100):
            a = rng.standard_normal(4)
            assert dual_norm_eval(a, n2) <= c * dual_norm_eval(a, n1) * (1 + 1e-12)


class TestOptimalFace:
    def test_l1_tie(self):
        face = OptimalFace([3.0, -3.0, 1.0], NormKind.l1())
        assert face.dimension == 1
        vertices = face.vertices()
        assert len(vertices) == 2
        assert np.allclose(vertices[0], [1.0, 0.0, 0.0])
        assert np.allclose(vertices[1], [0.0, -1.0, 0.0])
        assert np.allclose(face.interior(0.37), [0.37, -0.63, 0.0])

    def test_linf_zero_coordinate(self):
        face = OptimalFace([2.0, 0.0, -1.0], NormKind.linf())
        assert face.dimension == 1
        assert len(face.vertices()) == 2
        assert np.allclose(face.interior(0.25), [1.0, -0.5, -1.0])

    def test_samples_stay_optimal(self, rng):
        a = np.array([2.0, -2.0, 0.5])
        face = OptimalFace(a, NormKind.l1())
        for _ in range(20):
            v = face.sample(rng)
            assert norm_eval(v, NormKind.l1()) == pytest.approx(1.0)
            assert float(a @ v) == pytest.approx(2.0)

    def test_smooth_norm_has_one_vertex(self):
        assert len(optimal_face_vertices([1.0, 2.0], NormKind.l2())) == 1


class TestPinnedDualNorm:
    def test_linf_active_set_with_l1_dual(self):
        c = pinned_dual_norm([1.0, -1.0], NormKind.linf(), NormKind.linf(), orientation=1)
        assert np.allclose(c, [1.0, -1.0])

    def test_not_linear_returns_none(self):
        assert pinned_dual_norm([1.0, -1.0], NormKind.linf(), NormKind.l1(), orientation=1) is None

    def test_ray_case(self):
        c = pinned_dual_norm([2.0, 1.0], NormKind.l1(), NormKind.l2(), orientation=1)
        a = 3.0 * np.array([1.0, 1.0])
        assert float(c @ a) == pytest.approx(np.linalg.norm(a))
