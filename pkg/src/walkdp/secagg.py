"""Gaussian accounting for correlated-noise gossip under partial collusion.

Pairs of neighbors share seeds and inject cancelling noise; an adversary
pooling everything except q honest users faces a Gaussian channel whose
effective parameter depends on the independent and correlated noise levels
and the algebraic connectivity of the graph:

    mu = Delta * sqrt( 1/((n-q) s_dp^2) + (1 - 1/(n-q)) / (s_dp^2 + lam * s_cor^2) )

with lam the smallest nonzero Laplacian eigenvalue.  Rounds compose in
quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

from .errors import CalibrationError, WalkDpError
from .prv import discretize, epsilon_at, prv_gaussian
from .tradeoff import gdp_delta, gdp_epsilon


@dataclass(frozen=True)
class SecParams:
    n: int
    q: int
    delta_grad: float
    sigma_dp: float
    sigma_cor: float
    lambda_laplacian: float

    def __post_init__(self):
        if self.n < 1 or not (0 <= self.q < self.n):
            raise WalkDpError(f"need 0 <= q < n, got q={self.q}, n={self.n}")
        if self.sigma_dp <= 0:
            raise WalkDpError("sigma_dp must be positive")
        if self.sigma_cor < 0:
            raise WalkDpError("sigma_cor must be nonnegative")
        if self.delta_grad < 0:
            raise WalkDpError("clipping norm must be nonnegative")
        if self.lambda_laplacian < 0:
            raise WalkDpError("Laplacian eigenvalue must be nonnegative")


def sec_gdp_mu(p: SecParams) -> float:
    honest = p.n - p.q
    first = 1.0 / (honest * p.sigma_dp**2)
    second = (1.0 - 1.0 / honest) / (
        p.sigma_dp**2 + p.lambda_laplacian * p.sigma_cor**2
    )
    return p.delta_grad * math.sqrt(first + second)


def sec_to_epsdelta(p: SecParams, rounds: int, delta: float) -> dict:
    """(eps, delta) after the given number of rounds.

    Per-round guarantees are Gaussian, so rounds compose in quadrature:
    mu_total = mu * sqrt(rounds).  The budget is evaluated through the
    privacy-loss machinery with the closed form reported alongside as a
    cross-check.
    """
    if rounds < 1:
        raise WalkDpError(f"rounds must be >= 1, got {rounds}")
    if not (0.0 < delta < 1.0):
        raise WalkDpError(f"delta must be in (0, 1), got {delta}")
    mu = sec_gdp_mu(p)
    mu_total = mu * math.sqrt(rounds)
    closed = gdp_epsilon(mu_total, delta)
    if mu_total == 0.0:
        eps = 0.0
    else:
        # keep the lattice at a manageable size for very large parameters
        span = mu_total**2 / 2.0 + 9.0 * mu_total
        h = min(1e-4, max(span / 2e6, 1e-7))
        dprv = discretize(prv_gaussian(mu_total), h=h)
        eps = epsilon_at(dprv, delta)
    return {
        "mu_round": mu,
        "mu_total": mu_total,
        "epsilon": eps,
        "epsilon_closed_form": closed,
        "delta": delta,
        "rounds": rounds,
        "params": asdict(p),
    }


def sec_calibrate(
    n: int,
    q: int,
    delta_grad: float,
    lambda_laplacian: float,
    rounds: int,
    target_epsilon: float,
    delta: float,
    cor_ratio: float,
    bracket: tuple[float, float] = (1e-4, 1e4),
    rtol: float = 1e-6,
) -> tuple[float, float]:
    """Noise levels (sigma_dp, sigma_cor) meeting a target budget.

    The correlated level is tied to the independent one by ``cor_ratio``;
    bisection runs over the common scale, on which mu is monotone.
    """
    if cor_ratio < 0:
        raise WalkDpError("cor_ratio must be nonnegative")
    if target_epsilon <= 0:
        raise WalkDpError("target epsilon must be positive")

    def eps_at(scale: float) -> float:
        p = SecParams(
            n=n,
            q=q,
            delta_grad=delta_grad,
            sigma_dp=scale,
            sigma_cor=cor_ratio * scale,
            lambda_laplacian=lambda_laplacian,
        )
        mu_total = sec_gdp_mu(p) * math.sqrt(rounds)
        return gdp_epsilon(mu_total, delta)

    lo, hi = bracket
    if eps_at(lo) <= target_epsilon:
        return lo, cor_ratio * lo
    if eps_at(hi) > target_epsilon:
        raise CalibrationError(
            f"target eps {target_epsilon} unreachable in scale bracket "
            f"[{lo}, {hi}]: eps({lo})={eps_at(lo):.4g}, eps({hi})={eps_at(hi):.4g}"
        )
    llo, lhi = math.log(lo), math.log(hi)
    while lhi - llo > rtol:
        mid = (llo + lhi) / 2.0
        if eps_at(math.exp(mid)) <= target_epsilon:
            lhi = mid
        else:
            llo = mid
    scale = math.exp(lhi)
    return scale, cor_ratio * scale
