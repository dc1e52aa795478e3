"""Discrete Sobolev norms by central differences and trapezoid quadrature."""

from __future__ import annotations

import numpy as np

from .exceptions import GridError
from .fd import deriv1, deriv2
from .grids import Field1D, Interval, SpaceTimeField


def sobolev_norm(field: Field1D, order: int, window: Interval) -> float:
    """(sum_{k<=order} ||D^k f||^2_{L2(window)})^(1/2) on the window subgrid.

    Derivatives are second-order central differences with one-sided stencils
    at the window edges; quadrature is trapezoid over the covered node span.
    """
    if order not in (0, 1, 2):
        raise GridError(f"order must be 0, 1 or 2, got {order}")
    idx = field.grid.window_indices(window)
    min_nodes = {0: 2, 1: 3, 2: 5}[order]
    if idx.size < min_nodes:
        raise GridError(
            f"window contains {idx.size} nodes; order {order} needs at least {min_nodes}"
        )
    x = field.grid.nodes[idx]
    v = field.values[idx]
    total = np.trapezoid(v * v, x)
    if order >= 1:
        d1 = deriv1(v, x)
        total += np.trapezoid(d1 * d1, x)
    if order >= 2:
        d2 = deriv2(v, x)
        total += np.trapezoid(d2 * d2, x)
    return float(np.sqrt(total))


def h12_norm(field: SpaceTimeField) -> float:
    """Anisotropic space-time norm: sum of the four L2(Q) terms
    ||z|| + ||z_t|| + ||z_y|| + ||z_yy|| over Q = span x (0, T).

    The time derivative uses central differences in t (one-sided second-order
    at the first and last levels).
    """
    if field.time.n < 3:
        raise GridError("h12_norm needs at least 3 time levels")
    y = field.space.nodes
    t = field.time.nodes
    z = field.values

    def l2q(g: np.ndarray) -> float:
        inner = np.trapezoid(g * g, y, axis=1)
        return float(np.sqrt(np.trapezoid(inner, t)))

    z_t = deriv1(z.T, t).T
    z_y = deriv1(z, y)
    z_yy = deriv2(z, y)
    return l2q(z) + l2q(z_t) + l2q(z_y) + l2q(z_yy)
