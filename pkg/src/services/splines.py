"""
Quadratic B-spline grids and basis evaluation.

Knots are uniform over [lower, upper] and extended uniformly by `degree`
knots on each side. Queries outside the domain follow the polynomial
extension of the boundary pieces, so every basis function stays
differentiable on the whole real line.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.interpolate import BSpline

from src.utils.errors import DimensionError, InvalidInputError

logger = logging.getLogger(__name__)

SPLINE_DEGREE = 2


@dataclass(frozen=True)
class SplineGrid:
    """Uniform knot grid with G interior intervals over [lower, upper]"""
    lower: float
    upper: float
    intervals: int = 5
    degree: int = SPLINE_DEGREE

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise InvalidInputError("grid bounds must be finite", module="splines")
        if not self.lower < self.upper:
            raise InvalidInputError(
                f"grid lower bound {self.lower} must be below upper bound {self.upper}", module="splines"
            )
        if self.intervals < 1:
            raise InvalidInputError(f"grid needs at least one interval, got {self.intervals}", module="splines")
        if self.degree != SPLINE_DEGREE:
            raise InvalidInputError(f"only degree {SPLINE_DEGREE} splines are supported", module="splines")

    @property
    def step(self) -> float:
        return (self.upper - self.lower) / self.intervals

    @property
    def n_basis(self) -> int:
        return self.intervals + self.degree

    @cached_property
    def knots(self) -> np.ndarray:
        offsets = np.arange(-self.degree, self.intervals + self.degree + 1, dtype=float)
        knots = self.lower + offsets * self.step
        # pin the domain ends exactly
        knots[self.degree] = self.lower
        knots[self.degree + self.intervals] = self.upper
        knots.setflags(write=False)
        return knots

    @cached_property
    def _basis(self) -> BSpline:
        return BSpline(self.knots, np.eye(self.n_basis), self.degree, extrapolate=True)

    @cached_property
    def _basis_derivative(self) -> BSpline:
        return self._basis.derivative()

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper

    def scaled_to(self, lower: float, upper: float) -> "SplineGrid":
        return SplineGrid(lower=lower, upper=upper, intervals=self.intervals, degree=self.degree)


def _check_finite(values: np.ndarray):
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("spline query points must be finite", module="splines")


def basis_matrix(grid: SplineGrid, xs) -> np.ndarray:
    """Basis values for many query points, shape (len(xs), n_basis)"""
    xs = np.asarray(xs, dtype=float).reshape(-1)
    _check_finite(xs)
    if xs.size == 0:
        return np.zeros((0, grid.n_basis))
    return grid._basis(xs)


def derivative_matrix(grid: SplineGrid, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float).reshape(-1)
    _check_finite(xs)
    if xs.size == 0:
        return np.zeros((0, grid.n_basis))
    return grid._basis_derivative(xs)


def basis_at(grid: SplineGrid, x: float) -> np.ndarray:
    """
    Evaluate all basis functions at a single point.

    Args:
        grid: Spline grid
        x: Query point (outside the domain the boundary pieces are extended)

    Returns:
        Array of grid.n_basis basis values
    """
    return basis_matrix(grid, [x])[0]


def basis_derivative_at(grid: SplineGrid, x: float) -> np.ndarray:
    return derivative_matrix(grid, [x])[0]


def eval_spline(grid: SplineGrid, coefficients, x: float) -> float:
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (grid.n_basis,):
        raise DimensionError(
            f"expected {grid.n_basis} spline coefficients, got {coefficients.size}", module="splines"
        )
    values = basis_at(grid, x)
    total = 0.0
    for k in range(grid.n_basis):
        total += coefficients[k] * values[k]
    return float(total)


def greville_abscissae(grid: SplineGrid) -> np.ndarray:
    """Knot averages t[k+1..k+degree], one per basis function"""
    knots = grid.knots
    return np.array([knots[k + 1:k + 1 + grid.degree].mean() for k in range(grid.n_basis)])


def interpolate_coefficients(grid: SplineGrid, function: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Coefficients interpolating `function` at the Greville abscissae"""
    points = greville_abscissae(grid)
    return np.linalg.solve(basis_matrix(grid, points), function(points))


def fit_coefficients(grid: SplineGrid, xs, ys) -> np.ndarray:
    """Least-squares projection of samples (xs, ys) onto the basis"""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape:
        raise DimensionError("sample x and y arrays must have the same shape", module="splines")
    coefficients, *_ = np.linalg.lstsq(basis_matrix(grid, xs), ys, rcond=None)
    return coefficients
