"""Market-facing domain types: rates, volatility curves, price surfaces, quotes."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ValidationError
from .grids import Field1D, Interval, SpaceGrid, SpaceTimeField, TimeGrid

AXIS_SPOT_TIME = "spot-time"
AXIS_STRIKE_MATURITY = "strike-maturity"
AXIS_LOG = "log-moneyness-timetomaturity"
_AXES = (AXIS_SPOT_TIME, AXIS_STRIKE_MATURITY, AXIS_LOG)


@dataclass(frozen=True)
class MarketParams:
    """Constant market data: rates, spot, observation time, and expiry.

    Times are in years; `obs_time` is the date at which the quote slice is
    observed, `expiry` the common expiry of the quoted calls.
    """

    spot: float = 100.0
    rate: float = 0.05
    dividend: float = 0.02
    obs_time: float = 0.5
    expiry: float = 1.0

    def __post_init__(self):
        if self.rate <= 0:
            raise ValidationError(f"risk-free rate must be positive, got {self.rate}")
        if self.dividend < 0:
            raise ValidationError(f"dividend yield must be nonnegative, got {self.dividend}")
        if not 0 < self.obs_time < self.expiry:
            raise ValidationError(
                f"need 0 < obs_time < expiry, got obs_time={self.obs_time}, expiry={self.expiry}"
            )
        if self.spot <= 0:
            raise ValidationError(f"spot must be positive, got {self.spot}")

    @property
    def tau_star(self) -> float:
        """Time from observation to expiry."""
        return self.expiry - self.obs_time

    @property
    def rate_gap(self) -> float:
        """Cost-of-carry gap r - q."""
        return self.rate - self.dividend

    @property
    def probe_horizon(self) -> float:
        """Time horizon 2*tau_star used by the weighted-inequality probes,
        placing the observation instant at the midpoint."""
        return 2.0 * self.tau_star


@dataclass(frozen=True, eq=False)
class VolCurve:
    """Strike-dependent volatility sigma(K) with hard bounds.

    Equals `background` outside the declared `support` interval; `support`
    None means a globally constant curve.
    """

    strikes: SpaceGrid
    sigma: Field1D
    sigma_min: float = 0.05
    sigma_max: float = 0.8
    background: float = 0.2
    support: Interval | None = None

    def __post_init__(self):
        if self.sigma.grid is not self.strikes and not np.array_equal(
            self.sigma.grid.nodes, self.strikes.nodes
        ):
            raise ValidationError("sigma field grid differs from the strikes grid")
        if not 0 < self.sigma_min <= self.sigma_max:
            raise ValidationError(
                f"need 0 < sigma_min <= sigma_max, got ({self.sigma_min}, {self.sigma_max})"
            )
        if self.strikes.nodes[0] < 0:
            raise ValidationError("strikes must be nonnegative")
        v = self.sigma.values
        if np.any(v < self.sigma_min - 1e-12) or np.any(v > self.sigma_max + 1e-12):
            raise ValidationError(
                f"sigma values leave [{self.sigma_min}, {self.sigma_max}]: "
                f"range [{v.min()}, {v.max()}]"
            )
        if not self.sigma_min <= self.background <= self.sigma_max:
            raise ValidationError("background volatility must respect the sigma bounds")
        if self.support is not None:
            outside = ~self.support.contains(self.strikes.nodes, tol=1e-12)
            if np.any(np.abs(v[outside] - self.background) > 1e-10):
                raise ValidationError(
                    "sigma must equal the background outside the declared support interval"
                )

    @classmethod
    def constant(cls, level: float = 0.2, *, grid: SpaceGrid | None = None,
                 sigma_min: float = 0.05, sigma_max: float = 0.8) -> "VolCurve":
        if grid is None:
            grid = SpaceGrid.uniform(50.0, 200.0, 31)
        return cls(grid, Field1D.constant(grid, level), sigma_min, sigma_max,
                   background=level, support=None)

    @classmethod
    def from_function(cls, fn, *, grid: SpaceGrid, support: Interval,
                      background: float = 0.2, sigma_min: float = 0.05,
                      sigma_max: float = 0.8) -> "VolCurve":
        """Curve background + fn(K) inside `support`, background outside."""
        k = grid.nodes
        vals = np.full(grid.n, float(background))
        inside = support.contains(k)
        vals[inside] = background + np.asarray(fn(k[inside]), dtype=float)
        return cls(grid, Field1D(grid, vals), sigma_min, sigma_max, background, support)

    @classmethod
    def with_bump(cls, *, center: float, half_width: float, amplitude: float,
                  grid: SpaceGrid, support: Interval, background: float = 0.2,
                  sigma_min: float = 0.05, sigma_max: float = 0.8) -> "VolCurve":
        """Background plus a compactly supported C^2 bump (1 - xi^2)^3."""
        bump_iv = Interval(center - half_width, center + half_width)
        if not bump_iv.subset_of(support):
            raise ValidationError("bump support must lie inside the declared support interval")

        def fn(k):
            xi = (k - center) / half_width
            return amplitude * np.where(np.abs(xi) < 1.0, (1.0 - xi**2) ** 3, 0.0)

        return cls.from_function(fn, grid=grid, support=support, background=background,
                                 sigma_min=sigma_min, sigma_max=sigma_max)

    def sigma_at(self, strikes) -> np.ndarray:
        """sigma(K) for arbitrary K: linear interpolation inside the sampled
        span, background outside."""
        k = np.asarray(strikes, dtype=float)
        out = np.interp(k, self.strikes.nodes, self.sigma.values,
                        left=self.background, right=self.background)
        return out

    def diffusion_at_log(self, y, spot: float) -> np.ndarray:
        """a(y) = sigma(spot * e^y)^2 / 2 on log-moneyness coordinates."""
        s = self.sigma_at(spot * np.exp(np.asarray(y, dtype=float)))
        return 0.5 * s * s

    def clipped(self) -> "VolCurve":
        """Curve with sigma projected onto [sigma_min, sigma_max]."""
        vals = np.clip(self.sigma.values, self.sigma_min, self.sigma_max)
        return replace(self, sigma=Field1D(self.strikes, vals))


@dataclass(frozen=True, eq=False)
class QuoteSlice:
    """Observed call prices phi(K) on an ascending set of strikes, single expiry."""

    strikes: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.strikes, dtype=float)
        p = np.asarray(self.prices, dtype=float)
        if k.ndim != 1 or k.shape != p.shape:
            raise ValidationError("strikes and prices must be 1D arrays of equal length")
        if k.size < 3:
            raise ValidationError("a quote slice needs at least 3 strikes")
        if np.any(np.diff(k) <= 0):
            raise ValidationError("quote strikes must be strictly increasing")
        if not (np.all(np.isfinite(k)) and np.all(np.isfinite(p))):
            raise ValidationError("quotes must be finite")
        k, p = k.copy(), p.copy()
        k.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "strikes", k)
        object.__setattr__(self, "prices", p)

    def check_arbitrage(self, tol: float = 1e-8) -> None:
        """No-arbitrage invariants for call quotes: nonnegative, nonincreasing
        and convex in strike, all up to `tol` in price units."""
        p = self.prices
        bad = np.nonzero(p < -tol)[0]
        if bad.size:
            raise ValidationError(
                f"negative call prices at strikes {self.strikes[bad].tolist()}"
            )
        rises = np.nonzero(np.diff(p) > tol)[0]
        if rises.size:
            raise ValidationError(
                f"call prices increase in strike at strikes "
                f"{self.strikes[rises + 1].tolist()}"
            )
        second = p[:-2] - 2.0 * p[1:-1] + p[2:]
        concave = np.nonzero(second < -tol)[0]
        if concave.size:
            raise ValidationError(
                f"call prices violate convexity (butterfly arbitrage) at strikes "
                f"{self.strikes[concave + 1].tolist()}"
            )

    def interp(self, strikes) -> np.ndarray:
        return np.interp(strikes, self.strikes, self.prices)


@dataclass(frozen=True, eq=False)
class PriceSurface(SpaceTimeField):
    """Nonnegative option-price values on a space-time grid.

    `axis_kind` fixes the meaning of the axes; the time grid always starts at
    0 and `time_origin` maps it to calendar time (e.g. maturities are
    time_origin + time.nodes for strike-maturity surfaces).
    """

    axis_kind: str = AXIS_STRIKE_MATURITY
    time_origin: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if self.axis_kind not in _AXES:
            raise ValidationError(f"unknown axis kind {self.axis_kind!r}; expected one of {_AXES}")
        if np.any(self.values < -1e-9):
            raise ValidationError(
                f"price surface has negative values (min {self.values.min()})"
            )

    @property
    def calendar_times(self) -> np.ndarray:
        return self.time_origin + self.time.nodes
