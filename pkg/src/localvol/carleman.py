"""Weight functions and weighted-inequality probes for the observation window.

Builds the explicit interior weight psi0 (a sine of a reshaped affine map,
with its single critical point placed inside the observation core), the
space-time weights phi/eta that degenerate at both ends of the probe time
horizon, and numerical probes of the weighted energy inequalities that the
weights support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .exceptions import ValidationError
from .fd import deriv1, deriv2
from .grids import Field1D, Interval, SpaceGrid, SpaceTimeField, TimeGrid, same_grid
from .market import MarketParams
from .pricing import DEFAULT_GRID, GridConfig, solve_log_forward


@dataclass(frozen=True)
class DomainNest:
    """Nested intervals of the analysis geometry.

    support   : region where the unknown coefficient may differ (image of the
                unknown strike interval under the log map)
    window    : full analysis window, compactly containing support
    obs_core / obs_mid / obs : strictly nested observation windows inside
                window minus support
    buffer    : level-set envelope of support computed from the weight
                (filled in by build_weights; None until then)
    """

    support: Interval
    window: Interval
    obs_core: Interval
    obs_mid: Interval
    obs: Interval
    buffer: Interval | None = None

    def __post_init__(self):
        if not self.support.strictly_inside(self.window):
            raise ValidationError("support must be compactly contained in the window")
        if not (self.obs_core.strictly_inside(self.obs_mid)
                and self.obs_mid.strictly_inside(self.obs)):
            raise ValidationError("observation windows must nest strictly: core < mid < obs")
        if not self.obs.subset_of(self.window):
            raise ValidationError("observation window must lie inside the analysis window")
        if self.obs.overlaps(self.support):
            raise ValidationError("observation window must be disjoint from the support region")
        if self.buffer is not None:
            if not (self.support.strictly_inside(self.buffer)
                    and self.buffer.strictly_inside(self.window)):
                raise ValidationError("buffer must nest strictly between support and window")

    @classmethod
    def from_intervals(cls, i_star: Interval, i1_star: Interval, spot: float,
                       obs_margin: float = 0.1) -> "DomainNest":
        """Default nest from strike intervals: log images of I*, I1*, with the
        observation windows placed in the wider gap beside the support."""
        if not i_star.strictly_inside(i1_star):
            raise ValidationError("inner strike interval must nest strictly in the outer one")
        if i_star.lo <= 0:
            raise ValidationError("strike intervals must be positive")
        support = Interval(math.log(i_star.lo / spot), math.log(i_star.hi / spot))
        window = Interval(math.log(i1_star.lo / spot), math.log(i1_star.hi / spot))
        left = Interval(window.lo, support.lo)
        right = Interval(support.hi, window.hi)
        gap = left if left.length >= right.length else right
        w = gap.length

        def inset(frac: float) -> Interval:
            return Interval(gap.lo + frac * w, gap.hi - frac * w)

        return cls(support=support, window=window,
                   obs_core=inset(3 * obs_margin), obs_mid=inset(2 * obs_margin),
                   obs=inset(obs_margin))


@dataclass(frozen=True)
class RampPoly:
    """Strictly increasing reshaping map f on (0, 1) with f(0)=0, f(1)=1 and
    f(a)=1/2: a mix of x^n and x, mirrored for a below 1/2."""

    a: float
    n: int
    mu: float
    mirrored: bool

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.mirrored:
            z = 1.0 - x
            return 1.0 - (self.mu * z**self.n + (1.0 - self.mu) * z)
        return self.mu * x**self.n + (1.0 - self.mu) * x

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        z = 1.0 - x if self.mirrored else x
        return self.mu * self.n * z ** (self.n - 1) + (1.0 - self.mu)


def build_fa(a_param: float) -> RampPoly:
    """Reshaping polynomial pinned at f(a_param) = 1/2.

    For a >= 1/2 the exponent n is the smallest integer with a^n < 1/2 and
    the mix weight is mu = (a - 1/2)/(a - a^n); below 1/2 the map is the
    point reflection of the one built for 1 - a.
    """
    if not 0.0 < a_param < 1.0:
        raise ValidationError(f"critical-point parameter must lie in (0, 1), got {a_param}")
    mirrored = a_param < 0.5
    a = 1.0 - a_param if mirrored else a_param
    n = 2
    while a**n >= 0.5:
        n += 1
    mu = 0.0 if a == 0.5 else (a - 0.5) / (a - a**n)
    return RampPoly(a=a_param, n=n, mu=mu, mirrored=mirrored)


def affine_onto(window: Interval, y: float) -> float:
    """Decreasing affine map from (0, 1) onto the window: y=0 -> hi, y=1 -> lo."""
    return y * window.lo + (1.0 - y) * window.hi


def psi0_function(window: Interval, a_param: float):
    """Callable interior weight: sin(pi f(m(x))) where m is the inverse of the
    decreasing affine map onto the window; maximum 1 at affine_onto(window, a)."""
    fa = build_fa(a_param)
    lo, hi, length = window.lo, window.hi, window.length

    def psi0(x):
        m = (hi - np.asarray(x, dtype=float)) / length
        return np.sin(np.pi * fa(m))

    return psi0


def build_psi0(window: Interval, a_param: float, n: int = 1001) -> Field1D:
    """Interior weight sampled on a uniform window grid.

    End values are exactly zero (the analytic value; enforced so boundary
    assertions hold without floating-point residue from sin(pi)).
    """
    grid = SpaceGrid.uniform(window.lo, window.hi, n)
    vals = psi0_function(window, a_param)(grid.nodes)
    vals[0] = 0.0
    vals[-1] = 0.0
    return Field1D(grid, vals)


def select_delta_omega2(psi0: Field1D, support: Interval,
                        fn=None) -> tuple[float, Interval]:
    """Level constant delta and the level-set envelope around the support.

    delta is half the minimum of the weight over the closed support; the
    envelope is the connected component of {psi0 > delta} containing the
    support. By construction psi0 >= 2 delta on the support and <= delta
    outside the envelope. With only the sampled field the crossings come from
    linear interpolation; passing the analytic callable `fn` polishes both
    delta and the crossings to floating-point accuracy, which the separation
    bounds need.
    """
    x = psi0.grid.nodes
    v = psi0.values
    if not support.subset_of(psi0.grid.span):
        raise ValidationError("support must lie inside the sampled window")
    inside = support.contains(x)
    if fn is None:
        ends = [float(psi0.interp(support.lo)), float(psi0.interp(support.hi))]
        m = min(list(v[inside]) + ends)
    else:
        m = min(float(np.min(fn(x[inside]))) if np.any(inside) else np.inf,
                float(fn(support.lo)), float(fn(support.hi)))
    if m <= 0:
        raise ValidationError("weight is nonpositive somewhere on the support region")
    delta = 0.5 * m

    def crossing(direction: int, start: float) -> float:
        # walk from the support edge toward the window boundary until the
        # weight falls to delta, then solve the crossing in the bracket
        idx = np.searchsorted(x, start)
        rng = range(idx - 1, -1, -1) if direction < 0 else range(idx, x.size)
        prev_x, prev_v = start, float(psi0.interp(start))
        for i in rng:
            if v[i] <= delta:
                if fn is not None:
                    lo_x, hi_x = sorted((prev_x, float(x[i])))
                    return float(brentq(lambda xx: float(fn(xx)) - delta, lo_x, hi_x,
                                        xtol=1e-14, rtol=1e-15))
                t = (prev_v - delta) / (prev_v - v[i])
                return prev_x + t * (x[i] - prev_x)
            prev_x, prev_v = x[i], v[i]
        return x[0] if direction < 0 else x[-1]

    lo = crossing(-1, support.lo)
    hi = crossing(+1, support.hi)
    envelope = Interval(lo, hi)
    if not support.strictly_inside(envelope) or not envelope.strictly_inside(psi0.grid.span):
        raise ValidationError("level-set envelope fails to nest between support and window")
    return delta, envelope


@dataclass(frozen=True, eq=False)
class CarlemanWeights:
    """Weight bundle: interior weight psi0, shifted weight psi = psi0 + psi_bar,
    time factor ell(tau) = tau (horizon - tau), and the space-time weights
    phi = e^{lam psi}/ell and eta = (e^{lam psi} - e^{2 lam psi_bar})/ell.

    eta is strictly negative and tends to -inf at both time endpoints, so
    e^{2 s eta} vanishes there.
    """

    nest: DomainNest
    a_param: float
    n_power: int
    lam: float
    s: float
    delta: float
    psi_bar: float
    horizon: float
    psi0: Field1D
    psi0_fn: object = field(repr=False)

    @property
    def tau_star(self) -> float:
        return 0.5 * self.horizon

    @property
    def critical_point(self) -> float:
        return affine_onto(self.nest.window, self.a_param)

    def ell(self, tau):
        return np.asarray(tau, dtype=float) * (self.horizon - np.asarray(tau, dtype=float))

    def psi_at(self, y):
        return self.psi0_fn(y) + self.psi_bar

    def eta_at(self, y, tau):
        return (np.exp(self.lam * self.psi_at(y)) - math.exp(2.0 * self.lam * self.psi_bar)) / self.ell(tau)

    def phi_at(self, y, tau):
        return np.exp(self.lam * self.psi_at(y)) / self.ell(tau)

    @property
    def eta_peak(self) -> float:
        """Maximum of eta over the space-time cylinder: attained at the
        critical point of psi0 at the mid-horizon instant."""
        num = math.exp(self.lam * (1.0 + self.psi_bar)) - math.exp(2.0 * self.lam * self.psi_bar)
        return num / float(self.ell(self.tau_star))

    def with_lambda(self, lam: float) -> "CarlemanWeights":
        return replace(self, lam=lam)


def eval_weights(weights: CarlemanWeights, y: float, tau: float):
    """(phi, eta, ell) at a point; tau must lie strictly inside (0, horizon)."""
    if not 0.0 < tau < weights.horizon:
        raise ValidationError(
            f"tau={tau} outside (0, {weights.horizon}): the time factor vanishes there"
        )
    return (
        float(weights.phi_at(y, tau)),
        float(weights.eta_at(y, tau)),
        float(weights.ell(tau)),
    )


def build_weights(nest: DomainNest, horizon: float, a_param: float | None = None,
                  lam: float = 1.0, s: float = 10.0, n_psi0: int = 1001) -> CarlemanWeights:
    """Construct the weight bundle over the nest's window.

    Requires the critical point affine_onto(window, a_param) to fall inside
    the observation core; by default a_param is chosen to land at its
    midpoint. The returned nest has its buffer interval filled in from the
    level-set construction, and the level inequalities are asserted.
    """
    if horizon <= 0:
        raise ValidationError("probe horizon must be positive")
    window = nest.window
    if a_param is None:
        a_param = (window.hi - nest.obs_core.mid) / window.length
    crit = affine_onto(window, a_param)
    if not nest.obs_core.contains(crit):
        raise ValidationError(
            f"critical point {crit:.6g} (a_param={a_param:.6g}) falls outside the "
            f"observation core ({nest.obs_core.lo:.6g}, {nest.obs_core.hi:.6g})"
        )
    fa = build_fa(a_param)
    fn = psi0_function(window, a_param)
    psi0 = build_psi0(window, a_param, n_psi0)
    delta, envelope = select_delta_omega2(psi0, nest.support, fn=fn)
    nest2 = replace(nest, buffer=envelope)
    # the interior weight attains exactly 1 at the critical point
    psi_bar = 2.0
    w = CarlemanWeights(
        nest=nest2, a_param=a_param, n_power=fa.n, lam=lam, s=s, delta=delta,
        psi_bar=psi_bar, horizon=horizon, psi0=psi0, psi0_fn=fn,
    )
    _assert_level_inequalities(w)
    return w


def _assert_level_inequalities(w: CarlemanWeights) -> None:
    x = w.psi0.grid.nodes
    v = w.psi0.values
    on_support = w.nest.support.contains(x)
    if np.any(v[on_support] < 2.0 * w.delta - 1e-12):
        raise ValidationError("weight drops below 2*delta on the support region")
    outside_buffer = ~w.nest.buffer.contains(x)
    if np.any(v[outside_buffer] > w.delta + 1e-12):
        raise ValidationError("weight exceeds delta outside the buffer envelope")


@dataclass(frozen=True)
class SeparationReport:
    """Bounds separating eta at the observation instant between the support
    region and the complement of the buffer envelope.

    m1 is the value of eta at weight level 2*delta, m2 at level delta; the
    margin m2 - m1 is negative, so e^{2 s eta} is uniformly smaller outside
    the buffer than anywhere on the support.
    """

    m1: float
    m2: float
    margin: float
    eta_min_support: float
    eta_max_outside: float

    @property
    def holds(self) -> bool:
        return (self.margin < 0
                and self.eta_min_support >= self.m1 - 1e-12 * abs(self.m1)
                and self.eta_max_outside <= self.m2 + 1e-12 * abs(self.m2))


def separation_constants(w: CarlemanWeights, n_sample: int = 4001) -> SeparationReport:
    """Evaluate the separation bounds at tau_star on a dense lattice."""
    ell_star = float(w.ell(w.tau_star))
    e_top = math.exp(2.0 * w.lam * w.psi_bar)
    m1 = (math.exp(w.lam * (2.0 * w.delta + w.psi_bar)) - e_top) / ell_star
    m2 = (math.exp(w.lam * (w.delta + w.psi_bar)) - e_top) / ell_star
    sup = w.nest.support
    ys = np.linspace(sup.lo, sup.hi, n_sample)
    eta_min_support = float(np.min(w.eta_at(ys, w.tau_star)))
    win = w.nest.window
    buf = w.nest.buffer
    left = np.linspace(win.lo, buf.lo, n_sample)
    right = np.linspace(buf.hi, win.hi, n_sample)
    eta_max_outside = float(np.max(w.eta_at(np.concatenate([left, right]), w.tau_star)))
    return SeparationReport(m1=m1, m2=m2, margin=m2 - m1,
                            eta_min_support=eta_min_support,
                            eta_max_outside=eta_max_outside)


@dataclass(frozen=True)
class ProbeResult:
    """Weighted integrals of one probe evaluation.

    All three integrals carry the common factor e^{2 s eta_peak} removed
    (log_scale = 2 s eta_peak), which keeps them representable for large s;
    the empirical constant is unaffected.
    """

    lhs: float
    rhs_interior: float
    rhs_observation: float
    s: float
    lam: float
    log_scale: float

    @property
    def c_hat(self) -> float:
        denom = self.rhs_interior + self.rhs_observation
        return self.lhs / denom if denom > 0 else math.inf


def carleman_probe(z: SpaceTimeField, a: Field1D, weights: CarlemanWeights,
                   s: float | None = None, rate_gap: float = 0.0,
                   lhs_ell_power: int = 1) -> ProbeResult:
    """Weighted-inequality probe for a field vanishing on the space boundary.

    Left side: integral of (s/ell)|z_y|^2 + s^3 ell^{-p}|z|^2 + (ell/s)|z_tau|^2
    against e^{2 s eta} over the full cylinder, with p = lhs_ell_power (1 as
    printed in the source estimate; 3 selects the variant matching the
    observation term). Right side: the operator residual term over the
    cylinder plus s^3 ell^{-3}|z|^2 over the observation core.

    Quadrature is midpoint in time (the weights vanish at the endpoints,
    which are never evaluated) and trapezoid in space.
    """
    if s is None:
        s = weights.s
    if lhs_ell_power not in (1, 3):
        raise ValidationError("lhs_ell_power must be 1 (printed form) or 3 (variant)")
    if not same_grid(z.space, a.grid):
        raise ValidationError("probe field and diffusion coefficient grids differ")
    if abs(z.time.total - weights.horizon) > 1e-9 * weights.horizon:
        raise ValidationError("probe field horizon differs from the weight horizon")
    scale = float(np.max(np.abs(z.values)))
    bd = max(float(np.max(np.abs(z.values[:, 0]))), float(np.max(np.abs(z.values[:, -1]))))
    if bd > 1e-12 * max(scale, 1.0):
        raise ValidationError("probe field must vanish on the space boundary at all times")

    y = z.space.nodes
    t = z.time.nodes
    a_vals = a.values
    obs_idx = z.space.window_indices(weights.nest.obs_core)
    eta_ref = weights.eta_peak

    lhs = 0.0
    rhs_int = 0.0
    rhs_obs = 0.0
    for i in range(t.size - 1):
        dtau = t[i + 1] - t[i]
        tau_mid = 0.5 * (t[i] + t[i + 1])
        z_mid = 0.5 * (z.values[i] + z.values[i + 1])
        z_tau = (z.values[i + 1] - z.values[i]) / dtau
        z_y = deriv1(z_mid, y)
        z_yy = deriv2(z_mid, y)
        residual = z_tau - a_vals * z_yy + (a_vals + rate_gap) * z_y
        ell = float(weights.ell(tau_mid))
        wgt = np.exp(2.0 * s * (weights.eta_at(y, tau_mid) - eta_ref))
        lhs_integrand = (
            (s / ell) * z_y**2
            + s**3 * ell ** (-float(lhs_ell_power)) * z_mid**2
            + (ell / s) * z_tau**2
        ) * wgt
        lhs += dtau * float(np.trapezoid(lhs_integrand, y))
        rhs_int += dtau * float(np.trapezoid(residual**2 * wgt, y))
        obs_integrand = s**3 * ell**-3 * z_mid[obs_idx] ** 2 * wgt[obs_idx]
        rhs_obs += dtau * float(np.trapezoid(obs_integrand, y[obs_idx]))
    return ProbeResult(lhs=lhs, rhs_interior=rhs_int, rhs_observation=rhs_obs,
                       s=s, lam=weights.lam, log_scale=2.0 * s * eta_ref)


def probe_test_functions(window: Interval, horizon: float,
                         modes: int = 4, powers: tuple[int, ...] = (1, 2)):
    """Named analytic probe fields: interior sine modes times powers of the
    time factor, vanishing on the space boundary exactly."""
    ell_mid = (0.5 * horizon) ** 2

    out = []
    for p in powers:
        for k in range(1, modes + 1):
            def fn(y, tau, k=k, p=p):
                shape = np.sin(k * np.pi * (y - window.lo) / window.length)
                time_factor = (tau * (horizon - tau) / ell_mid) ** p
                return shape * time_factor

            out.append((f"sine{k}_ellpow{p}", fn))
    return out


def sample_probe_field(window: Interval, horizon: float, fn,
                       n_y: int, n_tau: int) -> SpaceTimeField:
    """Sample a probe function on a uniform window x horizon grid, forcing
    exact zeros on the space boundary."""
    space = SpaceGrid.uniform(window.lo, window.hi, n_y)
    time = TimeGrid(np.linspace(0.0, horizon, n_tau))
    vals = np.asarray(fn(space.nodes[None, :], time.nodes[:, None]), dtype=float)
    vals = np.broadcast_to(vals, (n_tau, n_y)).copy()
    vals[:, 0] = 0.0
    vals[:, -1] = 0.0
    return SpaceTimeField(space=space, time=time, values=vals)


DEFAULT_S_SWEEP = (20.0, 40.0, 80.0, 160.0, 320.0, 640.0, 1280.0)


def carleman_sweep(nest: DomainNest, horizon: float, a_of_y, *,
                   lam_values=(1.0,), s_values=DEFAULT_S_SWEEP,
                   a_param: float | None = None, rate_gap: float = 0.0,
                   n_y: int = 801, n_tau: int = 513, lhs_ell_power: int = 1):
    """Probe table over (test function, lambda, s).

    Returns (rows, weights_by_lambda); each row is
    (test_fn, lam, s, lhs, rhs_interior, rhs_observation, c_hat).
    """
    window = nest.window
    space = SpaceGrid.uniform(window.lo, window.hi, n_y)
    a = Field1D(space, np.broadcast_to(np.asarray(a_of_y(space.nodes), dtype=float),
                                       (space.n,)))
    rows = []
    weights_by_lam = {}
    fns = probe_test_functions(window, horizon)
    fields = [(name, sample_probe_field(window, horizon, fn, n_y, n_tau))
              for name, fn in fns]
    for lam in lam_values:
        w = build_weights(nest, horizon, a_param=a_param, lam=lam)
        weights_by_lam[lam] = w
        for name, zfield in fields:
            for s in s_values:
                res = carleman_probe(zfield, a, w, s=float(s), rate_gap=rate_gap,
                                     lhs_ell_power=lhs_ell_power)
                rows.append((name, lam, float(s), res.lhs, res.rhs_interior,
                             res.rhs_observation, res.c_hat))
    return rows, weights_by_lam


def energy_probe(source: SpaceTimeField, a: Field1D, params: MarketParams,
                 grid: GridConfig = DEFAULT_GRID) -> tuple[float, float]:
    """Both sides of the zero-initial-data energy bound at the observation lag.

    Solves the sourced log-moneyness problem with zero initial state and
    evaluates, at tau_star, the squared solution norm plus the accumulated
    squared gradient norm (left side) against the accumulated squared source
    norm (right side). The source must be sampled on
    log_grids(params, grid, tau_end=source horizon).
    """
    w = solve_log_forward(a, params, source=source, grid=grid,
                          tau_end=source.time.total)
    y = w.space.nodes
    t = w.time.nodes
    i_star = w.time.index_of(params.tau_star)

    sol_sq = float(np.trapezoid(w.values[i_star] ** 2, y))
    grad_sq_levels = np.trapezoid(deriv1(w.values[: i_star + 1], y) ** 2, y, axis=1)
    lhs = sol_sq + float(np.trapezoid(grad_sq_levels, t[: i_star + 1]))
    src_sq_levels = np.trapezoid(source.values[: i_star + 1] ** 2, y, axis=1)
    rhs = float(np.trapezoid(src_sq_levels, t[: i_star + 1]))
    return lhs, rhs
