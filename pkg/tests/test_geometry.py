import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirshift.geometry import (
    CompositionError,
    DimensionError,
    aitchison_distance,
    clr,
    close_with_floor,
    helmert_contrast,
    ilr,
    ilr_inv,
    validate_composition,
)


def random_composition(rng, C):
    return rng.dirichlet(np.full(C, 2.0))


class TestContrast:
    def test_columns_orthonormal(self):
        for C in (2, 3, 5, 10):
            V = helmert_contrast(C)
            assert V.shape == (C, C - 1)
            assert np.allclose(V.T @ V, np.eye(C - 1), atol=1e-12)

    def test_columns_sum_to_zero(self):
        for C in (3, 7):
            assert np.allclose(helmert_contrast(C).sum(axis=0), 0.0, atol=1e-12)

    def test_known_entries_c3(self):
        V = helmert_contrast(3)
        s2, s6 = 1 / np.sqrt(2), 1 / np.sqrt(6)
        expected = np.array([[s2, s6], [-s2, s6], [0.0, -2 * s6]])
        assert np.allclose(V, expected, atol=1e-12)

    def test_too_small(self):
        with pytest.raises(DimensionError):
            helmert_contrast(1)


class TestClrIlr:
    def test_clr_sums_to_zero(self):
        rng = np.random.default_rng(0)
        for C in (3, 5, 10):
            y = random_composition(rng, C)
            assert abs(clr(y).sum()) < 1e-12

    def test_ilr_uniform_is_origin(self):
        z = ilr(np.full(4, 0.25))
        assert np.allclose(z, 0.0, atol=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        for C in (3, 5, 10):
            for _ in range(200):
                y = random_composition(rng, C)
                assert np.allclose(ilr_inv(ilr(y)), y, atol=1e-12)

    def test_round_trip_other_direction(self):
        rng = np.random.default_rng(2)
        for D in (2, 4):
            z = rng.normal(size=D) * 3
            assert np.allclose(ilr(ilr_inv(z)), z, atol=1e-12)

    def test_extreme_coordinates_no_overflow(self):
        y = ilr_inv(np.array([500.0, -500.0]))
        assert np.all(np.isfinite(y)) and y.sum() == pytest.approx(1.0)

    def test_ilr_batch_matches_single(self):
        rng = np.random.default_rng(3)
        Y = np.stack([random_composition(rng, 4) for _ in range(5)])
        Z = ilr(Y)
        for i in range(5):
            assert np.allclose(Z[i], ilr(Y[i]), atol=1e-14)

    def test_clr_rejects_nonpositive(self):
        with pytest.raises(CompositionError):
            clr(np.array([0.5, 0.5, 0.0]))


class TestIsometry:
    def test_distance_equals_ilr_norm(self):
        rng = np.random.default_rng(4)
        for C in (3, 5, 10):
            for _ in range(300):
                x, y = random_composition(rng, C), random_composition(rng, C)
                d = aitchison_distance(x, y)
                assert abs(d - np.linalg.norm(ilr(x) - ilr(y))) < 1e-10

    def test_geodesic_additivity(self):
        # Points on a common log-ratio line: distances add along the segment.
        rng = np.random.default_rng(5)
        for _ in range(100):
            z0 = rng.normal(size=3)
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            a, b = sorted(rng.uniform(-2, 2, size=2))
            c = b + abs(rng.uniform(0, 2))
            p = [ilr_inv(z0 + t * direction) for t in (a, b, c)]
            d_ab = aitchison_distance(p[0], p[1])
            d_bc = aitchison_distance(p[1], p[2])
            d_ac = aitchison_distance(p[0], p[2])
            assert abs(d_ab + d_bc - d_ac) < 1e-8

    def test_basis_invariance(self):
        rng = np.random.default_rng(6)
        for C in (3, 5):
            V = helmert_contrast(C)
            M = rng.normal(size=(C - 1, C - 1))
            R, _ = np.linalg.qr(M)
            V2 = V @ R
            for _ in range(100):
                z = rng.normal(size=C - 1)
                z2 = R.T @ z
                assert np.allclose(ilr_inv(z, V), ilr_inv(z2, V2), atol=1e-10)
                assert np.allclose(V @ z, V2 @ z2, atol=1e-10)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(7)
        x, y = random_composition(rng, 5), random_composition(rng, 5)
        perm = rng.permutation(5)
        assert aitchison_distance(x[perm], y[perm]) == pytest.approx(
            aitchison_distance(x, y), abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            aitchison_distance(np.ones(3) / 3, np.ones(4) / 4)


class TestValidation:
    def test_accepts_valid(self):
        y = validate_composition([0.2, 0.3, 0.5])
        assert isinstance(y, np.ndarray)

    @pytest.mark.parametrize("bad", [
        [0.5, 0.5, 0.0],
        [0.5, 0.6, -0.1],
        [0.2, 0.2, 0.2],
        [1.0],
        [np.nan, 0.5, 0.5],
    ])
    def test_rejects_invalid(self, bad):
        with pytest.raises(CompositionError):
            validate_composition(bad)


class TestCloseWithFloor:
    def test_half_half_zero(self):
        out = close_with_floor(np.array([0.5, 0.5, 0.0]))
        assert out[2] == pytest.approx(1e-8, rel=1e-6)
        assert out[0] == pytest.approx(0.499999995, rel=1e-9)
        assert out.sum() == pytest.approx(1.0, abs=1e-15)

    def test_one_hot(self):
        out = close_with_floor(np.array([1.0, 0.0, 0.0, 0.0]))
        assert np.allclose(out[1:], 1e-8, rtol=1e-6)
        assert out[0] == pytest.approx(1 - 3e-8, rel=1e-9)

    def test_positive_input_unchanged(self):
        y = np.array([0.2, 0.3, 0.5])
        assert np.allclose(close_with_floor(y), y, atol=1e-12)

    def test_unnormalized_input(self):
        out = close_with_floor(np.array([2.0, 3.0, 5.0]))
        assert np.allclose(out, [0.2, 0.3, 0.5], atol=1e-12)

    def test_rejects_negative(self):
        with pytest.raises(CompositionError):
            close_with_floor(np.array([-0.1, 1.1, 0.0]))

    def test_rejects_all_zero(self):
        with pytest.raises(CompositionError):
            close_with_floor(np.zeros(3))


@given(st.lists(st.floats(min_value=1e-6, max_value=1e6), min_size=2, max_size=12))
@settings(max_examples=200, deadline=None)
def test_property_round_trip_after_closure(raw):
    y = close_with_floor(np.asarray(raw))
    assert np.allclose(ilr_inv(ilr(y)), y, atol=1e-9)


@given(st.integers(min_value=2, max_value=10), st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_property_distance_symmetry_and_identity(C, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.dirichlet(np.ones(C)), rng.dirichlet(np.ones(C))
    x, y = close_with_floor(x), close_with_floor(y)
    assert aitchison_distance(x, y) == pytest.approx(aitchison_distance(y, x), abs=1e-12)
    assert aitchison_distance(x, x) == pytest.approx(0.0, abs=1e-12)
