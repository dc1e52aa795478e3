"""Second-order finite-difference stencils and implicit theta time stepping.

Works on non-uniform grids throughout: interior points use the standard
3-point non-uniform formulas, window/domain edges use 3-point one-sided
stencils of the same order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded, LinAlgError

from .exceptions import GridError, SingularSystemError
from .grids import Field1D, SpaceGrid, same_grid


def deriv1(values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """First derivative, 2nd order: central interior, one-sided ends."""
    v = np.asarray(values, dtype=float)
    x = np.asarray(nodes, dtype=float)
    if v.shape[-1] != x.size or x.size < 3:
        raise GridError("deriv1 needs >=3 nodes matching the value count")
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    out = np.empty_like(v)
    out[..., 1:-1] = (
        -hp / (hm * (hm + hp)) * v[..., :-2]
        + (hp - hm) / (hm * hp) * v[..., 1:-1]
        + hm / (hp * (hm + hp)) * v[..., 2:]
    )
    h0, h1 = x[1] - x[0], x[2] - x[1]
    out[..., 0] = (
        -(2 * h0 + h1) / (h0 * (h0 + h1)) * v[..., 0]
        + (h0 + h1) / (h0 * h1) * v[..., 1]
        - h0 / (h1 * (h0 + h1)) * v[..., 2]
    )
    g1, g0 = x[-2] - x[-3], x[-1] - x[-2]
    out[..., -1] = (
        g0 / (g1 * (g0 + g1)) * v[..., -3]
        - (g0 + g1) / (g0 * g1) * v[..., -2]
        + (2 * g0 + g1) / (g0 * (g0 + g1)) * v[..., -1]
    )
    return out


def deriv2(values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Second derivative, 3-point non-uniform interior, one-sided ends.

    The one-sided end stencils are exact for quadratics (first order on a
    general non-uniform grid, second order on uniform grids).
    """
    v = np.asarray(values, dtype=float)
    x = np.asarray(nodes, dtype=float)
    if v.shape[-1] != x.size or x.size < 3:
        raise GridError("deriv2 needs >=3 nodes matching the value count")
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    out = np.empty_like(v)
    out[..., 1:-1] = 2.0 * (
        v[..., :-2] / (hm * (hm + hp))
        - v[..., 1:-1] / (hm * hp)
        + v[..., 2:] / (hp * (hm + hp))
    )
    h0, h1 = x[1] - x[0], x[2] - x[1]
    out[..., 0] = 2.0 * (v[..., 0] * h1 - v[..., 1] * (h0 + h1) + v[..., 2] * h0) / (
        h0 * h1 * (h0 + h1)
    )
    g1, g0 = x[-2] - x[-3], x[-1] - x[-2]
    out[..., -1] = 2.0 * (v[..., -1] * g1 - v[..., -2] * (g0 + g1) + v[..., -3] * g0) / (
        g0 * g1 * (g0 + g1)
    )
    return out


@dataclass(frozen=True, eq=False)
class OperatorCoeffs:
    """Coefficients of the spatial operator L u = c2 u'' + c1 u' + c0 u.

    Parabolicity (c2 > 0 on interior nodes) is required by the PDE solvers
    and checked there via require_parabolic(); plain operator application
    and theta stepping accept any coefficients, including all-zero ones.
    """

    second_order: Field1D
    first_order: Field1D
    zero_order: Field1D

    def __post_init__(self):
        g = self.second_order.grid
        if not (same_grid(g, self.first_order.grid) and same_grid(g, self.zero_order.grid)):
            raise GridError("operator coefficient fields must share one grid")

    @property
    def grid(self) -> SpaceGrid:
        return self.second_order.grid

    @classmethod
    def from_arrays(cls, grid: SpaceGrid, c2, c1, c0) -> "OperatorCoeffs":
        def lift(c):
            arr = np.broadcast_to(np.asarray(c, dtype=float), (grid.n,))
            return Field1D(grid, arr)

        return cls(lift(c2), lift(c1), lift(c0))

    def require_parabolic(self) -> None:
        interior = self.second_order.values[1:-1]
        if np.any(interior <= 0):
            raise GridError("operator is not parabolic: second-order coefficient "
                            "must be strictly positive on interior nodes")


def _interior_bands(coeffs: OperatorCoeffs):
    """Tridiagonal rows of L at interior nodes: (lower, diag, upper).

    lower multiplies u_{i-1}, upper multiplies u_{i+1}.
    """
    x = coeffs.grid.nodes
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    c2 = coeffs.second_order.values[1:-1]
    c1 = coeffs.first_order.values[1:-1]
    c0 = coeffs.zero_order.values[1:-1]
    lower = 2.0 * c2 / (hm * (hm + hp)) - c1 * hp / (hm * (hm + hp))
    diag = -2.0 * c2 / (hm * hp) + c1 * (hp - hm) / (hm * hp) + c0
    upper = 2.0 * c2 / (hp * (hm + hp)) + c1 * hm / (hp * (hm + hp))
    return lower, diag, upper


def apply_operator(coeffs: OperatorCoeffs, field: Field1D) -> Field1D:
    """Evaluate L field at interior nodes by central differences; ends are 0."""
    if not same_grid(coeffs.grid, field.grid):
        raise GridError("apply_operator: coefficient and field grids differ")
    lower, diag, upper = _interior_bands(coeffs)
    v = field.values
    out = np.zeros(field.grid.n)
    out[1:-1] = lower * v[:-2] + diag * v[1:-1] + upper * v[2:]
    return Field1D(field.grid, out)


def step_theta(
    coeffs: OperatorCoeffs,
    state: Field1D,
    dt: float,
    theta: float,
    left_bc: float,
    right_bc: float,
    source: Field1D | None = None,
) -> Field1D:
    """Advance u_t = L u + source by one implicit theta step.

    Dirichlet values are imposed at both ends of the new level. theta=1 is
    fully implicit, theta=0.5 trapezoidal. `source` is the theta-blended
    source for this step (callers combine old/new levels); its end entries
    are ignored because the boundary is Dirichlet.
    """
    if not same_grid(coeffs.grid, state.grid):
        raise GridError("step_theta: coefficient and state grids differ")
    if dt <= 0:
        raise GridError(f"step size must be positive, got {dt}")
    if not 0.0 <= theta <= 1.0:
        raise GridError(f"theta must lie in [0, 1], got {theta}")
    if source is not None and not same_grid(source.grid, state.grid):
        raise GridError("step_theta: source grid differs from state grid")

    lower, diag, upper = _interior_bands(coeffs)
    u = state.values
    n = state.grid.n

    # Explicit part (1 + (1-theta) dt L) u^n on interior nodes.
    rhs = u[1:-1] + (1.0 - theta) * dt * (lower * u[:-2] + diag * u[1:-1] + upper * u[2:])
    if source is not None:
        rhs = rhs + dt * source.values[1:-1]
    # Implicit coupling to the new Dirichlet boundary values.
    rhs[0] += theta * dt * lower[0] * left_bc
    rhs[-1] += theta * dt * upper[-1] * right_bc

    # Banded matrix of (1 - theta dt L) on interior unknowns.
    m = n - 2
    ab = np.zeros((3, m))
    ab[0, 1:] = -theta * dt * upper[:-1]
    ab[1, :] = 1.0 - theta * dt * diag
    ab[2, :-1] = -theta * dt * lower[1:]
    try:
        interior = solve_banded((1, 1), ab, rhs)
    except LinAlgError as exc:
        raise SingularSystemError(f"implicit step system is singular: {exc}") from exc
    if not np.all(np.isfinite(interior)):
        raise SingularSystemError("implicit step produced non-finite values "
                                  "(singular or near-singular system)")

    out = np.empty(n)
    out[0] = left_bc
    out[1:-1] = interior
    out[-1] = right_bc
    return Field1D(state.grid, out)
