import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings
from hypothesis import strategies as st

from src.services.splines import (
    SplineGrid,
    basis_at,
    basis_derivative_at,
    basis_matrix,
    eval_spline,
    fit_coefficients,
    greville_abscissae,
    interpolate_coefficients,
)
from src.utils.errors import DimensionError, InvalidInputError
from tests.conftest import oracle_basis


class TestSplineGrid:
    """Grid construction and validation"""

    def test_knot_layout(self):
        grid = SplineGrid(0.0, 1.0, 5)
        assert grid.knots.size == 5 + 2 * 2 + 1
        assert grid.n_basis == 7
        np.testing.assert_allclose(np.diff(grid.knots), 0.2, atol=1e-15)
        assert grid.knots[2] == 0.0
        assert grid.knots[7] == 1.0

    @pytest.mark.parametrize("lower,upper,intervals,degree", [
        (1.0, 1.0, 5, 2),
        (2.0, 1.0, 5, 2),
        (0.0, 1.0, 0, 2),
        (0.0, 1.0, 5, 3),
        (0.0, float("inf"), 5, 2),
    ])
    def test_invalid_grid(self, lower, upper, intervals, degree):
        with pytest.raises(InvalidInputError):
            SplineGrid(lower, upper, intervals, degree)

    def test_greville_abscissae_span_domain(self):
        grid = SplineGrid(0.0, 1.0, 5)
        points = greville_abscissae(grid)
        assert points.size == grid.n_basis
        assert points[0] < 0.0 < points[1]
        assert np.all(np.diff(points) > 0)


class TestBasis:
    """Basis values against the recursive oracle"""

    def test_single_interval_closed_form(self):
        grid = SplineGrid(0.0, 1.0, 1)
        np.testing.assert_allclose(basis_at(grid, 0.5), [0.125, 0.75, 0.125], atol=1e-15)

    @pytest.mark.parametrize("x", [0.37, 0.0, 0.5, 0.999, 0.2])
    def test_matches_cox_de_boor(self, x):
        grid = SplineGrid(0.0, 1.0, 5)
        np.testing.assert_allclose(basis_at(grid, x), oracle_basis(grid, x), atol=1e-12)

    def test_matches_oracle_on_shifted_grid(self, rng):
        grid = SplineGrid(-1.7, 2.3, 6)
        for x in rng.uniform(-1.7, 2.3, 50):
            np.testing.assert_allclose(basis_at(grid, x), oracle_basis(grid, x), atol=1e-12)

    def test_partition_of_unity_uniform_points(self):
        grid = SplineGrid(-2.0, 2.0, 5)
        values = basis_matrix(grid, np.linspace(-2.0, 2.0, 1000))
        assert np.max(np.abs(values.sum(axis=1) - 1.0)) < 1e-10

    @hypothesis_settings(max_examples=200, deadline=None)
    @given(
        lower=st.floats(min_value=-5.0, max_value=5.0),
        width=st.floats(min_value=0.1, max_value=10.0),
        intervals=st.integers(min_value=1, max_value=12),
        position=st.floats(min_value=0.0, max_value=1.0),
    )
    def test_partition_of_unity_and_non_negativity(self, lower, width, intervals, position):
        grid = SplineGrid(lower, lower + width, intervals)
        values = basis_at(grid, lower + position * width)
        assert abs(values.sum() - 1.0) < 1e-10
        assert np.all(values >= -1e-12)

    def test_locality(self, rng):
        grid = SplineGrid(0.0, 1.0, 8)
        for x in rng.uniform(0.0, 1.0, 100):
            assert np.count_nonzero(np.abs(basis_at(grid, x)) > 1e-15) <= 3

    def test_outside_domain_extends_boundary_pieces(self):
        grid = SplineGrid(0.0, 1.0, 5)
        inside = basis_matrix(grid, [0.01, 0.05, 0.1])
        outside = basis_at(grid, -0.1)
        # first piece is a polynomial: quadratic extrapolation from three interior samples
        xs = np.array([0.01, 0.05, 0.1])
        for k in range(3):
            poly = np.polyfit(xs, inside[:, k], 2)
            assert np.polyval(poly, -0.1) == pytest.approx(outside[k], abs=1e-10)
        assert abs(outside.sum() - 1.0) < 1e-10

    def test_non_finite_point_rejected(self):
        grid = SplineGrid(0.0, 1.0, 5)
        with pytest.raises(InvalidInputError):
            basis_at(grid, float("nan"))
        with pytest.raises(InvalidInputError):
            basis_derivative_at(grid, float("inf"))

    def test_empty_query(self):
        grid = SplineGrid(0.0, 1.0, 5)
        assert basis_matrix(grid, []).shape == (0, 7)


class TestBasisDerivative:
    """Derivatives of the basis"""

    def test_single_interval_closed_form(self):
        grid = SplineGrid(0.0, 1.0, 1)
        np.testing.assert_allclose(basis_derivative_at(grid, 0.5), [-0.5, 0.0, 0.5], atol=1e-14)

    def test_sums_to_zero(self, rng):
        grid = SplineGrid(-1.0, 3.0, 5)
        for x in rng.uniform(-1.0, 3.0, 20):
            assert abs(basis_derivative_at(grid, x).sum()) < 1e-10

    def test_matches_central_differences(self, rng):
        grid = SplineGrid(0.0, 1.0, 5)
        step = 1e-6
        points = np.concatenate([[0.37], rng.uniform(0.0, 1.0, 100)])
        for x in points:
            # keep the stencil inside one polynomial piece
            if np.min(np.abs(grid.knots - x)) < 10 * step:
                continue
            numeric = (basis_at(grid, x + step) - basis_at(grid, x - step)) / (2 * step)
            np.testing.assert_allclose(basis_derivative_at(grid, x), numeric, atol=1e-5)


class TestEvalSpline:
    """Spline evaluation and coefficient construction"""

    def test_zero_coefficients(self):
        grid = SplineGrid(0.0, 1.0, 5)
        assert eval_spline(grid, np.zeros(7), 0.3) == 0.0
        assert eval_spline(grid, np.zeros(7), 4.0) == 0.0

    def test_constant_coefficients(self):
        grid = SplineGrid(0.0, 1.0, 5)
        for x in np.linspace(0.0, 1.0, 11):
            assert eval_spline(grid, np.full(7, 2.5), x) == pytest.approx(2.5, abs=1e-12)

    def test_random_coefficients_match_oracle(self, rng):
        grid = SplineGrid(0.0, 1.0, 5)
        coefficients = rng.normal(size=7)
        expected = float(coefficients @ oracle_basis(grid, 0.42))
        assert eval_spline(grid, coefficients, 0.42) == pytest.approx(expected, abs=1e-12)

    def test_coefficient_count_mismatch(self):
        grid = SplineGrid(0.0, 1.0, 5)
        with pytest.raises(DimensionError):
            eval_spline(grid, np.zeros(6), 0.5)

    @pytest.mark.parametrize("slope,intercept", [(2.0, 1.0), (-0.3, 4.0), (0.0, -1.5)])
    def test_greville_interpolation_reproduces_linears(self, slope, intercept):
        grid = SplineGrid(-1.0, 2.0, 5)
        coefficients = interpolate_coefficients(grid, lambda x: slope * x + intercept)
        for x in np.linspace(-1.0, 2.0, 31):
            assert eval_spline(grid, coefficients, x) == pytest.approx(slope * x + intercept, abs=1e-10)

    def test_least_squares_fit_reproduces_quadratics(self):
        grid = SplineGrid(0.0, 3.0, 4)
        xs = np.linspace(0.0, 3.0, 60)
        coefficients = fit_coefficients(grid, xs, xs ** 2 - xs + 1.0)
        for x in [0.1, 1.3, 2.9]:
            assert eval_spline(grid, coefficients, x) == pytest.approx(x ** 2 - x + 1.0, abs=1e-9)
