"""Forward and backward call-pricing solvers.

Three discretizations of the same pricing problem:
  * backward solver in spot S for the value v(S, t) of a single call,
  * forward solver in strike K for the slice of call prices u(K, T'),
  * forward solver in log-moneyness y = ln(K/spot) for w = u e^{q tau},
all sharing the implicit theta engine from fd. The payoff kink is always
placed exactly on a grid node and the first few steps are fully implicit to
damp oscillations from the nonsmooth payoff.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr

from .exceptions import TruncationError, ValidationError
from .fd import OperatorCoeffs, step_theta
from .grids import Field1D, Interval, SpaceGrid, SpaceTimeField, TimeGrid, same_grid, time_nodes_through
from .market import (
    AXIS_LOG,
    AXIS_SPOT_TIME,
    AXIS_STRIKE_MATURITY,
    MarketParams,
    PriceSurface,
    QuoteSlice,
    VolCurve,
)


@dataclass(frozen=True)
class GridConfig:
    """Resolution and truncation knobs shared by all solvers.

    n_space is the node count, n_time the step count. space_mult fixes the
    spatial truncation as a multiple of the anchor price (strike or spot);
    y_half_width truncates the log-moneyness line to [-L, L].
    """

    n_space: int = 400
    n_time: int = 400
    y_half_width: float = 6.0
    space_mult: float = 4.0
    min_space_mult: float = 2.0
    rannacher_steps: int = 4
    theta: float = 0.5

    def __post_init__(self):
        if self.n_space < 16 or self.n_time < 8:
            raise ValidationError(
                f"resolution below minimum (16 space nodes, 8 steps): "
                f"got {self.n_space} x {self.n_time}"
            )
        if self.y_half_width <= 0 or self.space_mult <= 1 or self.min_space_mult <= 1:
            raise ValidationError("truncation parameters must exceed 1 (multiples) and 0 (width)")
        if not 0.0 <= self.theta <= 1.0:
            raise ValidationError(f"theta must lie in [0, 1], got {self.theta}")
        if self.rannacher_steps < 0:
            raise ValidationError("rannacher_steps must be nonnegative")

    def scaled(self, factor: float) -> "GridConfig":
        return replace(
            self,
            n_space=max(16, int(round(self.n_space * factor))),
            n_time=max(8, int(round(self.n_time * factor))),
        )


DEFAULT_GRID = GridConfig()


def strike_aligned_grid(anchor: float, target_max: float, n: int,
                        min_mult: float = 2.0) -> SpaceGrid:
    """Uniform grid [0, ~target_max] with `anchor` exactly on a node.

    The spacing is snapped so anchor = j*h for integer j; the payoff kink
    then sits on a node, which stabilizes the convergence order.
    """
    if anchor <= 0:
        raise ValidationError(f"anchor price must be positive, got {anchor}")
    if target_max < min_mult * anchor:
        raise TruncationError(
            f"spatial truncation {target_max} is below {min_mult} x anchor ({anchor})"
        )
    h0 = target_max / (n - 1)
    j = int(round(anchor / h0))
    if j < 2 or j > n - 3:
        raise TruncationError(
            f"anchor {anchor} not resolvable on {n} nodes up to {target_max}"
        )
    h = anchor / j
    return SpaceGrid(h * np.arange(n))


def log_grid(half_width: float, n: int) -> SpaceGrid:
    """Near-uniform grid on [-half_width, half_width] with 0 exactly on a node."""
    h = 2.0 * half_width / (n - 1)
    j = int(round(half_width / h))
    return SpaceGrid((np.arange(n) - j) * h)


def bs_closed_form(params: MarketParams, sigma_const: float, strike,
                   time_to_expiry: float):
    """Lognormal-model call value with continuous dividend yield.

    Vectorized over `strike`; returns a scalar for scalar input.
    """
    k = np.asarray(strike, dtype=float)
    if np.any(k <= 0):
        raise ValidationError("strikes must be positive")
    if sigma_const <= 0 or time_to_expiry <= 0:
        raise ValidationError("volatility and time to expiry must be positive")
    s, r, q = params.spot, params.rate, params.dividend
    st = sigma_const * np.sqrt(time_to_expiry)
    d1 = (np.log(s / k) + (r - q + 0.5 * sigma_const**2) * time_to_expiry) / st
    d2 = d1 - st
    out = s * np.exp(-q * time_to_expiry) * ndtr(d1) - k * np.exp(-r * time_to_expiry) * ndtr(d2)
    return float(out) if np.isscalar(strike) else out


def march_theta(coeffs: OperatorCoeffs, initial: Field1D, tgrid: TimeGrid, cfg: GridConfig,
            left_bc, right_bc, source: SpaceTimeField | None = None) -> np.ndarray:
    """March the theta scheme over tgrid; returns values of shape (nt, nx).

    left_bc/right_bc are callables of time. The first cfg.rannacher_steps
    steps run fully implicit regardless of cfg.theta.
    """
    t = tgrid.nodes
    h_min = float(np.min(coeffs.grid.spacing))
    stiff = float(np.max(coeffs.second_order.values)) * float(np.max(tgrid.steps)) / h_min**2
    if stiff > 1e7:
        warnings.warn(
            f"time step / spatial resolution ratio is extreme (stiffness {stiff:.2e}); "
            "the implicit system may be poorly conditioned",
            stacklevel=3,
        )
    values = np.empty((tgrid.n, coeffs.grid.n))
    values[0] = initial.values
    state = initial
    for i in range(tgrid.n - 1):
        dt = t[i + 1] - t[i]
        th = 1.0 if i < cfg.rannacher_steps else cfg.theta
        src = None
        if source is not None:
            blended = th * source.values[i + 1] + (1.0 - th) * source.values[i]
            src = Field1D(coeffs.grid, blended)
        state = step_theta(coeffs, state, dt, th, left_bc(t[i + 1]), right_bc(t[i + 1]), src)
        values[i + 1] = state.values
    return values


def solve_backward_bs(vol: VolCurve, params: MarketParams, strike: float,
                      grid: GridConfig = DEFAULT_GRID) -> PriceSurface:
    """Backward value solve for a single call of the given strike.

    Returns v(S, t) on [0, S_max] x [0, expiry] with the payoff imposed at
    t = expiry, v(0, t) = 0, and the deep-in-the-money asymptote
    S_max e^{-q(T-t)} - K e^{-r(T-t)} at the truncation boundary.
    """
    if strike <= 0:
        raise ValidationError(f"strike must be positive, got {strike}")
    anchor = strike
    s_max_target = grid.space_mult * max(strike, params.spot)
    sgrid = strike_aligned_grid(anchor, s_max_target, grid.n_space, grid.min_space_mult)
    s = sgrid.nodes
    sig = vol.sigma_at(s)
    # Backward equation rewritten forward in time-to-expiry.
    coeffs = OperatorCoeffs.from_arrays(
        sgrid, 0.5 * s**2 * sig**2, params.rate_gap * s, -params.rate
    )
    coeffs.require_parabolic()
    payoff = Field1D(sgrid, np.maximum(s - strike, 0.0))
    s_max = s[-1]
    tte_grid = time_nodes_through(params.expiry, grid.n_time, params.tau_star)
    vals_tte = march_theta(
        coeffs, payoff, tte_grid, grid,
        left_bc=lambda tte: 0.0,
        right_bc=lambda tte: s_max * np.exp(-params.dividend * tte)
        - strike * np.exp(-params.rate * tte),
    )
    # Reindex from time-to-expiry back to calendar time t in [0, expiry].
    t_nodes = (params.expiry - tte_grid.nodes)[::-1].copy()
    t_nodes[0] = 0.0
    return PriceSurface(
        space=sgrid, time=TimeGrid(t_nodes), values=vals_tte[::-1],
        axis_kind=AXIS_SPOT_TIME, time_origin=0.0,
    )


def value_at(surface: PriceSurface, x: float, calendar_time: float) -> float:
    """Interpolate the surface in space at an exact time node."""
    level = surface.level_at(calendar_time - surface.time_origin)
    return float(level.interp(x))


def dupire_operator(vol: VolCurve, params: MarketParams,
                    grid: GridConfig = DEFAULT_GRID) -> tuple[SpaceGrid, OperatorCoeffs]:
    """Strike grid (spot on a node) and the forward operator coefficients."""
    kgrid = strike_aligned_grid(
        params.spot, grid.space_mult * params.spot, grid.n_space, grid.min_space_mult
    )
    k = kgrid.nodes
    sig = vol.sigma_at(k)
    coeffs = OperatorCoeffs.from_arrays(
        kgrid, 0.5 * k**2 * sig**2, -params.rate_gap * k, -params.dividend
    )
    coeffs.require_parabolic()
    return kgrid, coeffs


def dupire_time_grid(params: MarketParams, grid: GridConfig = DEFAULT_GRID,
                     until: float | None = None) -> TimeGrid:
    """Elapsed-maturity grid [0, until - obs_time] with the expiry on a node."""
    horizon = (params.expiry if until is None else until) - params.obs_time
    if horizon <= 0:
        raise ValidationError("maturity horizon must extend past the observation time")
    mark = params.tau_star if horizon > params.tau_star * (1 + 1e-12) else None
    return time_nodes_through(horizon, grid.n_time, mark)


def solve_dupire_forward(vol: VolCurve, params: MarketParams,
                         grid: GridConfig = DEFAULT_GRID,
                         until: float | None = None) -> PriceSurface:
    """Forward solve in strike for the call-price slice u(K, T').

    Maturities run from obs_time to `until` (default expiry); the expiry
    always lands exactly on a time node. Boundary data are the forward value
    of the spot at K = 0 and zero at the strike truncation.
    """
    kgrid, coeffs = dupire_operator(vol, params, grid)
    payoff = Field1D(kgrid, np.maximum(params.spot - kgrid.nodes, 0.0))
    tgrid = dupire_time_grid(params, grid, until)
    vals = march_theta(
        coeffs, payoff, tgrid, grid,
        left_bc=lambda tau: params.spot * np.exp(-params.dividend * tau),
        right_bc=lambda tau: 0.0,
    )
    return PriceSurface(
        space=kgrid, time=tgrid, values=vals,
        axis_kind=AXIS_STRIKE_MATURITY, time_origin=params.obs_time,
    )


@dataclass(frozen=True, eq=False)
class LogProblem:
    """Data of the log-moneyness formulation: diffusion a(y) = sigma^2/2,
    payoff initial state, and the far-field Dirichlet values."""

    a: Field1D
    initial: Field1D
    left_value: float
    right_value: float


def to_log_problem(vol: VolCurve, params: MarketParams,
                   grid: GridConfig = DEFAULT_GRID) -> LogProblem:
    ygrid = log_grid(grid.y_half_width, grid.n_space)
    a = Field1D(ygrid, vol.diffusion_at_log(ygrid.nodes, params.spot))
    initial = Field1D(ygrid, params.spot * np.maximum(1.0 - np.exp(ygrid.nodes), 0.0))
    return LogProblem(a=a, initial=initial, left_value=params.spot, right_value=0.0)


def log_grids(params: MarketParams, grid: GridConfig = DEFAULT_GRID,
              tau_end: float | None = None) -> tuple[SpaceGrid, TimeGrid]:
    """The exact grids solve_log_forward will use; build sources on these."""
    horizon = params.tau_star if tau_end is None else tau_end
    if horizon <= 0:
        raise ValidationError("tau_end must be positive")
    mark = params.tau_star if horizon > params.tau_star * (1 + 1e-12) else None
    return log_grid(grid.y_half_width, grid.n_space), time_nodes_through(
        horizon, grid.n_time, mark
    )


def solve_log_forward(a: Field1D, params: MarketParams,
                      source: SpaceTimeField | None = None,
                      grid: GridConfig = DEFAULT_GRID,
                      tau_end: float | None = None):
    """Forward solve of the log-moneyness problem (d_tau - L_a) w = source.

    Without a source this is the payoff-driven pricing problem: initial state
    spot*max(1 - e^y, 0) and far-field values (spot, 0); returns a
    PriceSurface in log axes. With a source the initial state and both
    boundary values are zero and a plain SpaceTimeField is returned (the
    solution may change sign). The source must be sampled on the grids from
    log_grids(params, grid, tau_end).
    """
    coeffs = OperatorCoeffs(
        a,
        Field1D(a.grid, -(a.values + params.rate_gap)),
        Field1D(a.grid, np.zeros(a.grid.n)),
    )
    coeffs.require_parabolic()
    ygrid_ref, tgrid = log_grids(params, grid, tau_end)
    if source is not None:
        if not same_grid(source.space, a.grid):
            raise ValidationError("source space grid differs from the diffusion grid")
        if source.time.n != tgrid.n or not np.allclose(
            source.time.nodes, tgrid.nodes, rtol=1e-12, atol=1e-15
        ):
            raise ValidationError(
                "source time grid differs from the solver time grid; "
                "build sources on log_grids(params, grid, tau_end)"
            )
        initial = Field1D(a.grid, np.zeros(a.grid.n))
        vals = march_theta(coeffs, initial, tgrid, grid,
                       left_bc=lambda tau: 0.0, right_bc=lambda tau: 0.0, source=source)
        return SpaceTimeField(space=a.grid, time=tgrid, values=vals)
    if not same_grid(a.grid, ygrid_ref, rtol=1e-12):
        raise ValidationError(
            "diffusion grid differs from log_grids output for this configuration"
        )
    y = a.grid.nodes
    initial = Field1D(a.grid, params.spot * np.maximum(1.0 - np.exp(y), 0.0))
    vals = march_theta(coeffs, initial, tgrid, grid,
                   left_bc=lambda tau: params.spot, right_bc=lambda tau: 0.0)
    return PriceSurface(space=a.grid, time=tgrid, values=vals,
                        axis_kind=AXIS_LOG, time_origin=params.obs_time)


def log_from_dupire(surface: PriceSurface, params: MarketParams) -> PriceSurface:
    """Map a strike-maturity surface to log axes: y = ln(K/spot), w = u e^{q tau}.

    The K = 0 column (y = -inf) is dropped.
    """
    if surface.axis_kind != AXIS_STRIKE_MATURITY:
        raise ValidationError("expected a strike-maturity surface")
    k = surface.space.nodes
    keep = k > 0
    y = np.log(k[keep] / params.spot)
    growth = np.exp(params.dividend * surface.time.nodes)[:, None]
    return PriceSurface(
        space=SpaceGrid(y), time=surface.time, values=surface.values[:, keep] * growth,
        axis_kind=AXIS_LOG, time_origin=surface.time_origin,
    )


def dupire_from_log(surface: PriceSurface, params: MarketParams) -> PriceSurface:
    """Inverse of log_from_dupire on shared nodes: K = spot e^y, u = w e^{-q tau}."""
    if surface.axis_kind != AXIS_LOG:
        raise ValidationError("expected a log-axes surface")
    k = params.spot * np.exp(surface.space.nodes)
    decay = np.exp(-params.dividend * surface.time.nodes)[:, None]
    return PriceSurface(
        space=SpaceGrid(k), time=surface.time, values=surface.values * decay,
        axis_kind=AXIS_STRIKE_MATURITY, time_origin=surface.time_origin,
    )


def extract_quote_slice(surface: PriceSurface, params: MarketParams,
                        interval: Interval) -> QuoteSlice:
    """Sample the observed slice phi(K) = u(K, expiry) at grid nodes inside
    `interval` from a forward surface."""
    if surface.axis_kind == AXIS_LOG:
        surface = dupire_from_log(surface, params)
    if surface.axis_kind != AXIS_STRIKE_MATURITY:
        raise ValidationError("quote slices come from strike-maturity or log surfaces")
    level = surface.level_at(params.expiry - surface.time_origin)
    idx = surface.space.window_indices(interval)
    return QuoteSlice(surface.space.nodes[idx], level.values[idx])
