"""Visit-count concentration for the random walk.

A Hoeffding-type inequality for Markov chains bounds how often the walk can
land on a given node during T rounds: with probability 1 - delta', the count
is at most ceil((1+zeta) T / n), where the failure probability decays with
the spectral gap of the kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import WalkDpError


@dataclass(frozen=True)
class VisitBound:
    zeta: float
    delta_prime: float
    count: int


def delta_prime(lambda2: float, horizon: int, n: int, zeta: float) -> float:
    """exp(-(1-lambda2)/(1+lambda2) * 2 zeta^2 T / n^2)."""
    _check_chain(lambda2, horizon, n)
    if zeta < 0:
        raise WalkDpError(f"zeta must be nonnegative, got {zeta}")
    rate = (1.0 - lambda2) / (1.0 + lambda2)
    return math.exp(-rate * 2.0 * zeta * zeta * horizon / (n * n))


def zeta_for(lambda2: float, horizon: int, n: int, delta_prime_target: float) -> float:
    """Smallest zeta whose failure probability is the given target."""
    _check_chain(lambda2, horizon, n)
    if not (0.0 < delta_prime_target <= 1.0):
        raise WalkDpError(f"target must be in (0, 1], got {delta_prime_target}")
    if delta_prime_target == 1.0:
        return 0.0
    ratio = (1.0 + lambda2) / (1.0 - lambda2)
    return math.sqrt(ratio * n * n * math.log(1.0 / delta_prime_target) / (2.0 * horizon))


def contribution_count(horizon: int, n: int, zeta: float) -> int:
    """ceil((1+zeta) T / n) compositions of the per-visit guarantee."""
    if horizon < 1 or n < 1:
        raise WalkDpError("horizon and n must be positive")
    if zeta < 0:
        raise WalkDpError(f"zeta must be nonnegative, got {zeta}")
    return math.ceil((1.0 + zeta) * horizon / n)


def visit_bound(lambda2: float, horizon: int, n: int, delta_prime_target: float) -> VisitBound:
    z = zeta_for(lambda2, horizon, n, delta_prime_target)
    return VisitBound(
        zeta=z,
        delta_prime=delta_prime(lambda2, horizon, n, z) if z > 0 else 1.0,
        count=contribution_count(horizon, n, z),
    )


def _check_chain(lambda2: float, horizon: int, n: int) -> None:
    if not (-1.0 <= lambda2 < 1.0):
        raise WalkDpError(
            f"lambda2 must lie in [-1, 1) (zero spectral gap at 1), got {lambda2}"
        )
    if horizon < 1:
        raise WalkDpError(f"horizon must be >= 1, got {horizon}")
    if n < 2:
        raise WalkDpError(f"need at least two nodes, got {n}")
