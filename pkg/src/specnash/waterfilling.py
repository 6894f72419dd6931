"""Masked single-user waterfilling: the best-response operator of the game.

Given direct gains g(k), interference-plus-noise factors i(k) >= 1, a gap
Gamma and per-bin caps, the operator returns

    p(k) = clip(mu - Gamma * i(k) / g(k), 0, pmax(k)),

with the level mu chosen so that mean_k p(k) equals the budget whenever the
caps allow it.  If the caps sum to less than the budget the constraint set
pins every bin to its cap and that trivial allocation is returned.  Bins
with g(k) = 0 carry an infinite price and always receive zero power.

The level is found by an exact sort-based solve over the piecewise-linear
supply curve (O(N log N)); a bisection path is kept as a cross-check.
Budget is met to 1e-12 absolute, which leaves headroom for fixed-point
residual targets of 1e-8 downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import NormalizedGame
from .errors import InfeasibleWaterfillError, InvalidInputError

# Mask-sum shortfalls smaller than this are treated as exact ties.
_TRIVIAL_TOL = 1e-15


@dataclass(frozen=True)
class PowerProfile:
    """Stacked per-user, per-bin normalized powers, shape (Q, N)."""

    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=np.float64))
        if self.p.ndim != 2:
            raise InvalidInputError(f"profile must be (Q, N), got shape {self.p.shape}")

    @property
    def Q(self) -> int:
        return self.p.shape[0]

    @property
    def N(self) -> int:
        return self.p.shape[1]

    def budget_used(self) -> np.ndarray:
        """Fraction of each user's budget in use, shape (Q,)."""
        return self.p.mean(axis=1)

    def is_feasible(self, game: NormalizedGame, tol: float = 1e-9) -> bool:
        """Check 0 <= p <= pmax per bin and mean_k p(k) <= 1 per user."""
        p = self.p
        if p.shape != (game.Q, game.N):
            return False
        return bool(
            (p >= -tol).all()
            and (p <= game.pmax + tol).all()
            and (self.budget_used() <= 1.0 + tol).all()
        )


@dataclass(frozen=True)
class WaterfillInput:
    """Operands of one waterfilling solve.

    g: direct squared gains per bin; i: interference-plus-noise factors
    (>= 1); Gamma: SNR gap (>= 1); pmax: per-bin caps (inf = uncapped);
    budget: target mean power (1 in the normalized game).
    """

    g: np.ndarray
    i: np.ndarray
    Gamma: float
    pmax: np.ndarray
    budget: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "g", np.asarray(self.g, dtype=np.float64))
        object.__setattr__(self, "i", np.asarray(self.i, dtype=np.float64))
        object.__setattr__(self, "pmax", np.asarray(self.pmax, dtype=np.float64))
        object.__setattr__(self, "Gamma", float(self.Gamma))
        object.__setattr__(self, "budget", float(self.budget))
        if not (self.g.shape == self.i.shape == self.pmax.shape) or self.g.ndim != 1:
            raise InvalidInputError("g, i, pmax must be 1-D vectors of equal length")
        if not np.isfinite(self.g).all() or (self.g < 0).any():
            raise InvalidInputError("gains must be finite and nonnegative")
        if not np.isfinite(self.i).all() or (self.i < 1.0 - 1e-12).any():
            raise InvalidInputError("interference factors must be finite and >= 1")
        if np.isnan(self.pmax).any() or (self.pmax < 0).any():
            raise InvalidInputError("pmax must be nonnegative")
        if self.Gamma < 1.0:
            raise InvalidInputError("Gamma must be >= 1")
        if self.budget <= 0:
            raise InvalidInputError("budget must be positive")

    @property
    def N(self) -> int:
        return self.g.size

    def mask_total(self) -> float:
        """Mean of the caps (inf if any bin is uncapped)."""
        return float(self.pmax.mean())


_COUNTS_CACHE: dict = {}


def _counts(n: int) -> np.ndarray:
    got = _COUNTS_CACHE.get(n)
    if got is None:
        got = _COUNTS_CACHE[n] = np.arange(1.0, n + 1.0)
    return got


def _level_uncapped(prices: np.ndarray, target: float) -> float:
    """Level for the cap-free case via the classic sorted cumulative solve."""
    c = np.sort(prices)
    candidates = (target + np.cumsum(c)) / _counts(c.size)
    # Largest active set whose level still clears its worst price.
    j = int(np.nonzero(candidates > c)[0][-1])
    return float(candidates[j])


def _level_sorted(prices: np.ndarray, caps: np.ndarray, target: float) -> float:
    """Level mu with sum_k clip(mu - prices_k, 0, caps_k) = target.

    Supply is piecewise linear and nondecreasing in mu with breakpoints at
    each price (bin enters) and price + cap (bin saturates); walk the sorted
    breakpoints and invert the active segment.  Raises if the total finite
    capacity falls short of the target.
    """
    finite = np.isfinite(caps)
    if not finite.any():
        return _level_uncapped(prices, target)
    n_in = prices.size
    n_out = int(finite.sum())
    pts = np.concatenate([prices, (prices + caps)[finite]])
    slopes = np.empty(n_in + n_out)
    slopes[:n_in] = 1.0
    slopes[n_in:] = -1.0
    order = np.argsort(pts)
    pts = pts[order]
    active = np.cumsum(slopes[order])
    supply = np.empty_like(pts)
    supply[0] = 0.0
    np.cumsum(active[:-1] * np.diff(pts), out=supply[1:])
    if target > supply[-1]:
        if active[-1] <= 0:
            raise InfeasibleWaterfillError(
                f"caps admit at most {supply[-1]:.6g} total power, budget needs {target:.6g}"
            )
        return float(pts[-1] + (target - supply[-1]) / active[-1])
    j = int(np.searchsorted(supply, target, side="right")) - 1
    if supply[j] >= target:
        return float(pts[j])
    return float(pts[j] + (target - supply[j]) / active[j])


def _level_bisect(prices: np.ndarray, caps: np.ndarray, target: float, iters: int = 200) -> float:
    """Bisection cross-check for :func:`_level_sorted`."""
    lo = float(prices.min())
    hi = float(prices.max()) + target
    while np.clip(hi - prices, 0.0, caps).sum() < target:
        hi = 2.0 * hi + 1.0
        if not np.isfinite(hi):
            raise InfeasibleWaterfillError("bisection bracket diverged; budget unattainable")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.clip(mid - prices, 0.0, caps).sum() < target:
            lo = mid
        else:
            hi = mid
    return hi


def _solve_arrays(
    g: np.ndarray, i: np.ndarray, Gamma: float, pmax: np.ndarray, budget: float, method: str
):
    """Shared solve on raw arrays: returns (p, mu), mu None off the level branch."""
    if pmax.mean() < budget - _TRIVIAL_TOL:
        return pmax.copy(), None
    target = budget * g.size
    if g.min() > 0.0:
        usable = None
        prices = Gamma * i / g
        caps = pmax
    else:
        usable = g > 0.0
        if not usable.any():
            raise InfeasibleWaterfillError("all gains are zero with caps above budget")
        caps = pmax[usable]
        finite = np.isfinite(caps)
        if finite.all() and caps.sum() < target - _TRIVIAL_TOL * g.size:
            # Budget unattainable on the usable bins alone: saturate them and
            # leave the remainder unused (rate-optimal, level unbounded).
            p = np.zeros(g.size)
            p[usable] = caps
            return p, None
        prices = Gamma * i[usable] / g[usable]
    if method == "sort":
        mu = _level_sorted(prices, caps, target)
    elif method == "bisect":
        mu = _level_bisect(prices, caps, target)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    pu = np.clip(mu - prices, 0.0, caps)
    err = pu.sum() - target
    if abs(err) > 1e-13 * max(1.0, target):
        # Newton polish on the interior bins guards against float drift.
        interior = (pu > 0.0) & (pu < caps)
        if interior.any():
            mu -= err / interior.sum()
            pu = np.clip(mu - prices, 0.0, caps)
    if usable is None:
        return pu, float(mu)
    p = np.zeros(g.size)
    p[usable] = pu
    return p, float(mu)


def _solve(inp: WaterfillInput, method: str):
    return _solve_arrays(inp.g, inp.i, inp.Gamma, inp.pmax, inp.budget, method)


def waterfill(inp: WaterfillInput, method: str = "sort") -> np.ndarray:
    """Optimal single-user allocation for the given prices and caps.

    Returns the cap vector itself when the caps cannot absorb the budget
    (the feasible set collapses onto its upper face), otherwise the
    level-clipped allocation with the budget met to 1e-12.
    """
    p, _ = _solve(inp, method)
    return p


def water_level(inp: WaterfillInput, method: str = "sort") -> float:
    """Level mu at which the clipped allocation meets the budget exactly.

    Defined only when the caps admit the budget; raises otherwise.
    """
    if inp.mask_total() < inp.budget - _TRIVIAL_TOL:
        raise InvalidInputError("caps sum below budget: the level is undefined (trivial branch)")
    p, mu = _solve(inp, method)
    if mu is None:
        raise InfeasibleWaterfillError(
            "caps on usable bins cannot absorb the budget; no finite level exists"
        )
    return mu


def kkt_residual(p: np.ndarray, inp: WaterfillInput, feas_tol: float = 1e-9) -> float:
    """Worst stationarity / complementary-slackness violation of ``p``.

    Measured in water-level units: zero (up to rounding) exactly when ``p``
    solves the same problem as :func:`waterfill`.  Interior bins must sit on
    a common level Gamma*i/g + p = mu; bins at zero must price at or above
    mu, capped bins at or below; the budget must be exhausted whenever the
    caps allow it, and zero-gain bins must carry no power while it binds.

    Raises if ``p`` is infeasible beyond ``feas_tol``.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != inp.g.shape:
        raise InvalidInputError("profile and input shapes disagree")
    if (p < -feas_tol).any() or (p > inp.pmax + feas_tol).any():
        raise InvalidInputError("power vector violates its box constraints")
    if p.mean() > inp.budget + feas_tol:
        raise InvalidInputError("power vector exceeds the budget")

    usable = inp.g > 0
    atol = 1e-12 * max(1.0, inp.budget)
    mask_total = inp.mask_total()
    capacity = inp.pmax[usable].sum() / inp.N if usable.any() else 0.0

    if mask_total < inp.budget - _TRIVIAL_TOL:
        # Trivial branch: the unique optimum is the cap vector.
        return float(np.abs(p - inp.pmax).max())
    if capacity < inp.budget - _TRIVIAL_TOL:
        # Saturation branch: usable bins at cap, dead bins irrelevant.
        return float(np.abs(p[usable] - inp.pmax[usable]).max()) if usable.any() else 0.0

    prices = inp.Gamma * inp.i[usable] / inp.g[usable]
    caps = inp.pmax[usable]
    pu = p[usable]
    level = prices + pu
    at_zero = pu <= atol
    at_cap = np.isfinite(caps) & (pu >= caps - atol)
    interior = ~(at_zero | at_cap)

    if interior.any():
        mu = float(level[interior].mean())
    else:
        lo = float(level[at_cap].max()) if at_cap.any() else -np.inf
        hi = float(prices[at_zero].min()) if at_zero.any() else np.inf
        if lo <= hi:
            mu = lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0.0)
        else:
            mu = 0.5 * (lo + hi)

    res = abs(p.mean() - inp.budget)
    if interior.any():
        res = max(res, float(np.abs(level[interior] - mu).max()))
    if at_zero.any():
        res = max(res, max(0.0, mu - float(prices[at_zero].min())))
    if at_cap.any():
        res = max(res, max(0.0, float(level[at_cap].max()) - mu))
    if (~usable).any():
        # While the budget binds, any power on a dead bin is wasted.
        res = max(res, float(p[~usable].max()))
    return float(res)
