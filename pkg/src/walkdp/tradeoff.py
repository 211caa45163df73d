"""Trade-off functions: Gaussian, piecewise-linear, and their transforms.

A trade-off function maps a type-I error level to the least achievable
type-II error for distinguishing two mechanism outputs; larger is more
private.  The module keeps two representations: a parametric Gaussian
family (exact formulas) and discretized piecewise-linear curves on a
Chebyshev-spaced grid.  All discrete approximations are nudged downward so
derived budgets err on the conservative side.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from .errors import FormatError, UnsupportedOrderError, WalkDpError
from .graphs import HittingWeights

DEFAULT_KNOTS = 2049
# Multiplicative downward nudge applied when sampling a smooth curve onto
# knots; keeps ties resolving toward the conservative side without flooring
# the small-value tail (which would distort Renyi integrals).
LOWER_BOUND_NUDGE = 1e-9


@dataclass(frozen=True)
class TradeoffCurve:
    """Either gdp(mu), the identity curve 1 - alpha, or a discrete curve."""

    kind: str  # "gdp" | "identity" | "discrete"
    mu: float | None = None
    knots: np.ndarray | None = None  # shape (m, 2), columns (alpha, f)

    def __post_init__(self):
        if self.kind == "gdp":
            if self.mu is None or self.mu < 0:
                raise FormatError(f"gdp curve needs mu >= 0, got {self.mu}")
            if self.mu == 0:
                object.__setattr__(self, "kind", "identity")
                object.__setattr__(self, "mu", None)
        elif self.kind == "discrete":
            k = np.asarray(self.knots, dtype=float)
            if k.ndim != 2 or k.shape[1] != 2 or k.shape[0] < 2:
                raise FormatError("discrete curve needs >= 2 (alpha, f) knots")
            if np.any(np.diff(k[:, 0]) < 0):
                raise FormatError("knot alphas must be sorted")
            object.__setattr__(self, "knots", k)
        elif self.kind != "identity":
            raise FormatError(f"unknown curve kind {self.kind!r}")

    def __call__(self, alpha):
        return evaluate(self, alpha)


def gdp_curve(mu: float) -> TradeoffCurve:
    return TradeoffCurve(kind="gdp", mu=float(mu))


def identity_curve() -> TradeoffCurve:
    return TradeoffCurve(kind="identity")


def discrete_curve(knots: np.ndarray) -> TradeoffCurve:
    return TradeoffCurve(kind="discrete", knots=knots)


def evaluate(curve: TradeoffCurve, alpha) -> np.ndarray | float:
    a = np.asarray(alpha, dtype=float)
    if np.any((a < -1e-12) | (a > 1 + 1e-12)):
        raise WalkDpError(f"alpha must lie in [0, 1]")
    a = np.clip(a, 0.0, 1.0)
    if curve.kind == "identity":
        out = 1.0 - a
    elif curve.kind == "gdp":
        out = _gdp_eval(curve.mu, a)
    else:
        out = np.interp(a, curve.knots[:, 0], curve.knots[:, 1])
    if np.ndim(alpha) == 0:
        return float(out)
    return out


def _gdp_eval(mu: float, a: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        q = ndtri(1.0 - a)
    return ndtr(q - mu)


def chebyshev_alphas(n_knots: int = DEFAULT_KNOTS) -> np.ndarray:
    """Knot grid on [0, 1], quadratically denser near both endpoints."""
    k = np.arange(n_knots)
    return (1.0 - np.cos(np.pi * k / (n_knots - 1))) / 2.0


def to_discrete(curve: TradeoffCurve, n_knots: int = DEFAULT_KNOTS) -> TradeoffCurve:
    if curve.kind == "discrete":
        return curve
    if curve.kind == "gdp":
        # natural parametrization (alpha, f) = (Phi(-u), Phi(u - mu)) keeps
        # the chord error uniformly small for any mu
        mu = curve.mu
        u = np.linspace(-(9.0 + mu), 9.0 + mu, n_knots - 2)
        alphas = ndtr(-u)[::-1]
        vals = ndtr(u - mu)[::-1]
        alphas = np.concatenate([[0.0], alphas, [1.0]])
        vals = np.concatenate([[1.0], vals, [0.0]])
        vals = vals * (1.0 - LOWER_BOUND_NUDGE)
        vals[0] = 1.0
        return discrete_curve(_clean_knots(alphas, vals))
    alphas = chebyshev_alphas(n_knots)
    vals = np.asarray(evaluate(curve, alphas), dtype=float)
    vals = vals * (1.0 - LOWER_BOUND_NUDGE)
    vals[0] = min(1.0, evaluate(curve, 0.0))
    return discrete_curve(_clean_knots(alphas, vals))


def _clean_knots(alphas: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Sanitize sampled knots into a convex non-increasing polygon.

    The lower convex hull discards float-saturation noise near the corners;
    a clipped run of zeros then collapses to the endpoint knot (1, 0) so
    the Renyi integral does not see an artificial plateau.
    """
    hull = _lower_convex_hull(np.column_stack([alphas, vals]))
    a, v = hull[:, 0], hull[:, 1]
    zero = v <= 0.0
    if zero.any():
        first = int(np.argmax(zero))
        if first > 0 and zero[first:].all():
            a = np.concatenate([a[:first], [1.0]])
            v = np.concatenate([v[:first], [0.0]])
    return np.column_stack([a, v])


def _lower_convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain lower hull of (x, y) points sorted by x."""
    pts = points[np.lexsort((points[:, 1], points[:, 0]))]
    hull: list[np.ndarray] = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # keep if p is above the line (x1,y1)-(x2,y2) extended
            if (x2 - x1) * (p[1] - y1) - (p[0] - x1) * (y2 - y1) < 0:
                hull.pop()
            else:
                break
        if hull and abs(hull[-1][0] - p[0]) < 1e-15:
            hull[-1] = p if p[1] < hull[-1][1] else hull[-1]
            continue
        hull.append(p)
    return np.array(hull)


def _left_inverse_knots(knots: np.ndarray) -> np.ndarray:
    """Knots of f^{-1} for a non-increasing piecewise-linear f."""
    inv = knots[:, ::-1].copy()
    order = np.argsort(inv[:, 0], kind="stable")
    return inv[order]


def _eval_pl(knots: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.interp(x, knots[:, 0], knots[:, 1])


def symmetrize(curve: TradeoffCurve) -> TradeoffCurve:
    """Hull of min(f, f^{-1}); Gaussian and identity curves are fixpoints."""
    if curve.kind in ("gdp", "identity"):
        return curve
    knots = curve.knots
    inv = _left_inverse_knots(knots)
    xs = np.unique(np.concatenate([knots[:, 0], inv[:, 0], [0.0, 1.0]]))
    xs = xs[(xs >= 0) & (xs <= 1)]
    vals = np.minimum(_eval_pl(knots, xs), _eval_pl(inv, xs))
    hull = _lower_convex_hull(np.column_stack([xs, vals]))
    return discrete_curve(hull)


def subsample_cp(curve: TradeoffCurve, p: float, n_knots: int = DEFAULT_KNOTS) -> TradeoffCurve:
    """Subsampling operator: hull of min(f_p, f_p^{-1}) with f_p = p f + (1-p) Id.

    The input curve is assumed symmetric (symmetrize first otherwise).
    """
    if not (0.0 <= p <= 1.0):
        raise WalkDpError(f"sampling probability must be in [0, 1], got {p}")
    if p == 0.0 or curve.kind == "identity":
        alphas = chebyshev_alphas(n_knots)
        return discrete_curve(np.column_stack([alphas, 1.0 - alphas]))
    base = to_discrete(curve, n_knots)
    alphas = base.knots[:, 0]
    f_p = p * base.knots[:, 1] + (1.0 - p) * (1.0 - alphas)
    fp_knots = np.column_stack([alphas, f_p])
    inv = _left_inverse_knots(fp_knots)
    xs = np.unique(np.concatenate([alphas, inv[:, 0]]))
    xs = xs[(xs >= 0) & (xs <= 1)]
    vals = np.minimum(_eval_pl(fp_knots, xs), _eval_pl(inv, xs))
    hull = _lower_convex_hull(np.column_stack([xs, vals]))
    return discrete_curve(hull)


def fdp_to_delta(curve: TradeoffCurve, epsilon: float) -> float:
    """delta(eps) = 1 + f*(-e^eps) through the convex conjugate.

    For gdp(mu) the closed form
    Phi(-eps/mu + mu/2) - e^eps Phi(-eps/mu - mu/2) is used directly.
    """
    if epsilon < 0:
        raise WalkDpError(f"epsilon must be >= 0, got {epsilon}")
    if curve.kind == "identity":
        return 0.0
    if curve.kind == "gdp":
        return gdp_delta(curve.mu, epsilon)
    knots = curve.knots
    if not _is_convex(knots):
        raise WalkDpError("discrete curve is not convex; hull it first")
    # sup_x (-e^eps x - f(x)) is attained at a knot of the convex PL curve
    ee = np.exp(epsilon)
    val = 1.0 - np.min(ee * knots[:, 0] + knots[:, 1])
    return float(min(max(val, 0.0), 1.0))


def gdp_delta(mu: float, epsilon) -> np.ndarray | float:
    eps = np.asarray(epsilon, dtype=float)
    if mu == 0:
        out = np.zeros_like(eps)
    else:
        # second term in log space: e^eps Phi(...) overflows for large eps
        out = ndtr(-eps / mu + mu / 2.0) - np.exp(
            eps + log_ndtr(-eps / mu - mu / 2.0)
        )
        out = np.clip(out, 0.0, 1.0)
    if np.ndim(epsilon) == 0:
        return float(out)
    return out


def gdp_epsilon(mu: float, delta: float) -> float:
    """Inverse of the gdp closed form by bisection."""
    if not (0.0 < delta < 1.0):
        raise WalkDpError(f"delta must be in (0,1), got {delta}")
    if mu == 0 or gdp_delta(mu, 0.0) <= delta:
        return 0.0
    # eps = mu^2/2 + mu z_delta makes the first term alone equal delta
    lo = 0.0
    hi = mu * mu / 2.0 - mu * ndtri(delta) + 1.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if gdp_delta(mu, mid) <= delta:
            hi = mid
        else:
            lo = mid
    return hi


def _is_convex(knots: np.ndarray, tol: float = 1e-8) -> bool:
    x, y = knots[:, 0], knots[:, 1]
    dx = np.diff(x)
    if np.any(dx <= 0):
        keep = np.concatenate([[True], dx > 0])
        x, y = x[keep], y[keep]
        dx = np.diff(x)
    slopes = np.diff(y) / dx
    if slopes.size < 2:
        return True
    # tolerance scales with the local slope so float quantization of the
    # near-vertical region does not read as concavity
    scale = 1.0 + np.maximum(np.abs(slopes[:-1]), np.abs(slopes[1:]))
    return bool(np.all(np.diff(slopes) >= -tol * scale))


def epsdelta_to_curve(epsilon: float, delta: float) -> TradeoffCurve:
    """Supporting-line curve max{0, 1-delta-e^eps a, e^{-eps}(1-delta-a)}."""
    if epsilon < 0 or not (0.0 <= delta <= 1.0):
        raise WalkDpError("need epsilon >= 0 and delta in [0, 1]")
    if epsilon == 0.0 and delta == 0.0:
        return identity_curve()
    ee = np.exp(epsilon)
    a_star = (1.0 - delta) / (ee + 1.0)
    knots = [(0.0, 1.0 - delta)]
    if a_star > 0:
        knots.append((a_star, 1.0 - delta - ee * a_star))
    if 1.0 - delta > a_star:
        knots.append((1.0 - delta, 0.0))
    if knots[-1][0] < 1.0:
        knots.append((1.0, 0.0))
    return discrete_curve(np.array(knots))


def fdp_to_rdp(curve: TradeoffCurve, order: float) -> float:
    """Renyi bound eps(order) = log(int |f'|^{1-order}) / (order - 1).

    Closed form order * mu^2 / 2 for Gaussian curves; segment-wise sums on
    discrete curves.  Flat segments make the integral diverge, which is
    reported as an unsupported order.
    """
    if order <= 1.0:
        raise WalkDpError(f"RDP order must exceed 1, got {order}")
    if curve.kind == "identity":
        return 0.0
    if curve.kind == "gdp":
        return curve.mu**2 * order / 2.0
    x = curve.knots[:, 0]
    y = curve.knots[:, 1]
    dx = np.diff(x)
    dy = np.diff(y)
    xr = x[1:]
    keep = dx > 0
    dx, dy, xr = dx[keep], dy[keep], xr[keep]
    slopes = np.abs(dy / dx)
    flat = slopes < 1e-300
    if np.any(flat):
        # float saturation flattens the (true, steep) curve near alpha = 0,
        # where the integrand vanishes anyway; genuine plateaus diverge
        artifact = flat & (xr < 1e-9)
        if np.any(flat & ~artifact):
            raise UnsupportedOrderError(
                f"RDP order {order} unsupported: curve has flat segments"
            )
        keep2 = ~flat
        dx, dy, slopes = dx[keep2], dy[keep2], slopes[keep2]
    # sum dx * |slope|^{1-order} in log space to dodge overflow
    log_terms = np.log(dx) + (1.0 - order) * np.log(slopes)
    m = np.max(log_terms)
    total = m + np.log(np.sum(np.exp(log_terms - m)))
    val = total / (order - 1.0)
    return float(max(val, 0.0))


def evaluate_mixture_curve(
    weights: HittingWeights | np.ndarray,
    mus,
    residual: float | None = None,
    n_points: int = 4097,
) -> TradeoffCurve:
    """Joint-concavity lower bound for a mixture of Gaussian trade-offs.

    Sweeps the likelihood-ratio threshold s and traces
    (sum_t w_t alpha_t(s), sum_t w_t f_t(alpha_t(s)) + w_res 1[s >= 1]),
    where alpha_t(s) = Phi(mu_t/2 - ln(s)/mu_t).  Diagnostic surface; the
    accounting pipeline composes privacy-loss variables instead.
    """
    if isinstance(weights, HittingWeights):
        w = weights.weights
        resid = weights.residual
    else:
        w = np.asarray(weights, dtype=float)
        resid = residual if residual is not None else max(0.0, 1.0 - w.sum())
    mus = np.asarray(mus, dtype=float)
    if w.shape != mus.shape:
        raise WalkDpError(f"weights/mus length mismatch: {w.shape} vs {mus.shape}")
    if np.any(mus < 0):
        raise WalkDpError("component mus must be nonnegative")

    active = (w > 0) & (mus > 0)
    resid = resid + float(w[(w > 0) & (mus == 0)].sum())
    w_a, mu_a = w[active], mus[active]
    if w_a.size == 0:
        alphas = chebyshev_alphas()
        return discrete_curve(np.column_stack([alphas, 1.0 - alphas]))

    span = float(np.max(mu_a * (mu_a / 2.0 + 9.0)))
    lns = np.concatenate(
        [
            np.linspace(-span, -1e-12, n_points // 2),
            np.linspace(1e-12, span, n_points // 2),
        ]
    )
    # likelihood-ratio threshold s: component type-I level Phi(z) with
    # z = mu/2 - ln(s)/mu, and the curve value there is G_mu(Phi(z))
    z = mu_a[None, :] / 2.0 - lns[:, None] / mu_a[None, :]
    alpha_t = ndtr(z)
    beta_t = ndtr(-z - mu_a[None, :])
    alphas = alpha_t @ w_a + resid * (lns < 0)
    betas = beta_t @ w_a + resid * (lns >= 0)
    pts = np.column_stack([alphas, betas])
    pts = np.vstack([[0.0, 1.0], pts, [1.0, 0.0]])
    hull = _lower_convex_hull(pts)
    return discrete_curve(hull)


def curve_to_csv(curve: TradeoffCurve, path: str | Path, n_knots: int = 513) -> None:
    disc = to_discrete(curve, n_knots)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "f"])
        for a, v in disc.knots:
            writer.writerow([repr(float(a)), repr(float(v))])
