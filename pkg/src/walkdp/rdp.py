"""Renyi-divergence baseline accountant.

Mirrors the trade-off pipeline at the Renyi level: the per-visit mixture is
bounded through joint convexity of the scaled exponentiated divergence,
visits compose additively per order, and the final budget is the minimum
over an order grid of two standard conversions to (eps, delta).  Used as
the comparison baseline; it is expected to dominate the trade-off route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import WalkDpError
from .graphs import HittingWeights

# Dense near 1 where the conversion optimum often sits, wide geometric tail.
DEFAULT_ORDERS = np.unique(
    np.concatenate([1.0 + 2.0 ** np.arange(0, 15) / 16.0, np.arange(2.0, 65.0)])
)


@dataclass(frozen=True)
class RdpProfile:
    orders: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.orders, dtype=float)
        e = np.asarray(self.eps, dtype=float)
        if o.shape != e.shape or o.ndim != 1 or o.size == 0:
            raise WalkDpError("profile needs matching non-empty order/eps arrays")
        if np.any(o <= 1.0):
            raise WalkDpError("all orders must exceed 1")
        object.__setattr__(self, "orders", o)
        object.__setattr__(self, "eps", e)


def rdp_gaussian(mu: float, order: float) -> float:
    """(order, order mu^2 / 2) for the unit Gaussian pair."""
    return mu * mu * order / 2.0


def rdp_mixture(weights, mus, order: float, residual: float | None = None) -> float:
    """Joint-convexity bound for a mixture of Gaussian components.

    exp((a-1) eps) <= sum_t w_t exp((a-1) a mu_t^2 / 2) + w_residual, in the
    log domain.  Weights need not sum to one (the power-of-kernel baseline
    feeds super-stochastic weights); the residual contributes at loss 0.
    """
    if order <= 1.0:
        raise WalkDpError(f"order must exceed 1, got {order}")
    if isinstance(weights, HittingWeights):
        w = weights.weights
        resid = weights.residual
    else:
        w = np.asarray(weights, dtype=float)
        resid = residual if residual is not None else max(0.0, 1.0 - float(w.sum()))
    mus = np.asarray(mus, dtype=float)
    if w.shape != mus.shape:
        raise WalkDpError("weights/mus length mismatch")
    exponents = (order - 1.0) * order * mus**2 / 2.0
    terms = np.concatenate([exponents, [0.0]])
    coefs = np.concatenate([w, [resid]])
    keep = coefs > 0
    if not np.any(keep):
        return 0.0
    val = logsumexp(terms[keep], b=coefs[keep]) / (order - 1.0)
    return float(max(val, 0.0))


def mixture_profile(
    weights, mus, orders: np.ndarray = DEFAULT_ORDERS, residual: float | None = None
) -> RdpProfile:
    eps = np.array([rdp_mixture(weights, mus, a, residual) for a in orders])
    return RdpProfile(orders=orders, eps=eps)


def rdp_compose(profile: RdpProfile, count: int) -> RdpProfile:
    if count < 1:
        raise WalkDpError(f"composition count must be >= 1, got {count}")
    return RdpProfile(orders=profile.orders, eps=profile.eps * count)


def rdp_to_epsdelta(profile: RdpProfile, delta: float) -> float:
    """min over orders of two conversion rules.

    Rule 1: eps + log(1/delta)/(a-1).  Rule 2 sharpens it by
    log((a-1)/a) - (log delta + log a)/(a-1).  The minimum of the two is an
    upper bound on the four-way minimum used by finer toolchains, keeping
    the baseline conservative.
    """
    if not (0.0 < delta <= 1.0):
        raise WalkDpError(f"delta must be in (0, 1], got {delta}")
    a = profile.orders
    e = profile.eps
    first = e + math.log(1.0 / delta) / (a - 1.0)
    second = e + np.log((a - 1.0) / a) - (math.log(delta) + np.log(a)) / (a - 1.0)
    val = min(float(np.min(first)), float(np.min(second)))
    return max(val, 0.0)


def power_of_kernel_weights(w_matrix: np.ndarray, i: int, j: int, horizon: int) -> tuple[np.ndarray, float]:
    """Occupation weights (W^t)_{ij} for t=1..T with residual clamped at 0.

    These dominate first-visit probabilities pointwise, so budgets computed
    from them can only be looser; when they already sum past one the
    residual is zero.
    """
    n = w_matrix.shape[0]
    weights = np.empty(horizon)
    v = np.zeros(n)
    v[i] = 1.0
    for t in range(horizon):
        v = v @ w_matrix
        weights[t] = v[j]
    residual = max(0.0, 1.0 - float(weights.sum()))
    return weights, residual


def rdp_pair_budget(
    w,
    i: int,
    j: int,
    cfg,
    weighting: str = "hitting_time",
    orders: np.ndarray = DEFAULT_ORDERS,
) -> float:
    """Baseline pair budget through the Renyi route.

    Uses the same per-visit parameters and composition count as the
    trade-off pipeline; only the per-visit bound (joint-convexity mixture
    at each order) and the final conversion differ.  ``weighting`` selects
    first-visit probabilities ("hitting_time") or kernel-power occupation
    weights ("power_of_kernel", the coarser classical choice).
    """
    from . import accountant as acct
    from .graphs import hitting_weights as _hw

    if weighting not in ("hitting_time", "power_of_kernel"):
        raise WalkDpError(f"unknown weighting {weighting!r}")
    if i == j:
        raise WalkDpError("pair budgets are defined for distinct nodes")
    spectral = acct.validate_walk(w)
    dp, _zeta, count = acct._visit_plan(spectral.lambda2, cfg, w.n)
    delta_conv = cfg.delta - dp
    if cfg.level != "user":
        raise WalkDpError("the Renyi baseline covers user-level budgets only")
    mus = acct.user_level_factors(cfg) * cfg.params.delta_grad / cfg.params.sigma
    if weighting == "hitting_time":
        hw = _hw(w, i, j, cfg.horizon)
        weights, residual = hw.weights, hw.residual
    else:
        weights, residual = power_of_kernel_weights(w.matrix, i, j, cfg.horizon)
    profile = mixture_profile(weights, mus, orders=orders, residual=residual)
    composed = rdp_compose(profile, count)
    return rdp_to_epsdelta(composed, delta_conv)


def calibrate_sigma_rdp(
    w,
    i: int,
    j: int,
    target_epsilon: float,
    cfg,
    weighting: str = "hitting_time",
    bracket: tuple[float, float] = (1e-3, 1e3),
    rtol: float = 1e-4,
) -> float:
    """Noise calibration through the Renyi route (baseline counterpart)."""
    import math

    from . import accountant as acct
    from .errors import CalibrationError

    def eps_at(sigma: float) -> float:
        local = type(cfg)(
            horizon=cfg.horizon,
            params=acct._with_sigma(cfg.params, sigma),
            delta=cfg.delta,
            delta_split=cfg.delta_split,
            level=cfg.level,
            cap_contributions=cfg.cap_contributions,
            gamma_policy=cfg.gamma_policy,
            grid=cfg.grid,
        )
        return rdp_pair_budget(w, i, j, local, weighting=weighting)

    lo, hi = bracket
    if eps_at(lo) <= target_epsilon:
        return lo
    if eps_at(hi) > target_epsilon:
        raise CalibrationError(
            f"target eps {target_epsilon} unreachable in sigma bracket [{lo}, {hi}]"
        )
    llo, lhi = math.log(lo), math.log(hi)
    while lhi - llo > rtol:
        mid = (llo + lhi) / 2.0
        if eps_at(math.exp(mid)) <= target_epsilon:
            lhi = mid
        else:
            llo = mid
    return math.exp(lhi)
