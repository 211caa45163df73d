"""Per-visit Gaussian trade-off parameters for noisy local updates.

A model handed over after t walk rounds has absorbed tK noisy gradient
steps, only the first K of which touched the observed user's data.  For
strongly convex losses the iteration contracts and the per-visit parameter
mu_t shrinks geometrically in t; otherwise the noise of later rounds still
dilutes the signal at a 1/sqrt(tK+1) rate.  Record-level guarantees add
minibatch subsampling on the first K steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lstsq

from .errors import WalkDpError


@dataclass(frozen=True)
class AmplificationParams:
    """Algorithm constants shared by every per-visit bound.

    ``convexity`` is "nonconvex" or "strongly_convex"; the latter requires
    the strong-convexity and smoothness constants (m_strong, m_smooth) with
    a stepsize in (0, 2/m_smooth].  ``batch`` and ``local_size`` are only
    needed for record-level plans.
    """

    steps_per_round: int  # K
    eta: float
    delta_grad: float  # gradient sensitivity
    sigma: float
    convexity: str = "nonconvex"
    m_strong: float | None = None
    m_smooth: float | None = None
    batch: int | None = None
    local_size: int | None = None

    def __post_init__(self):
        if self.steps_per_round < 1:
            raise WalkDpError(f"K must be >= 1, got {self.steps_per_round}")
        if self.sigma <= 0:
            raise WalkDpError(f"sigma must be positive, got {self.sigma}")
        if self.delta_grad < 0:
            raise WalkDpError(f"sensitivity must be nonnegative, got {self.delta_grad}")
        if self.eta <= 0:
            raise WalkDpError(f"stepsize must be positive, got {self.eta}")
        if self.convexity == "strongly_convex":
            m, big_m = self.m_strong, self.m_smooth
            if m is None or big_m is None or not (0 < m <= big_m):
                raise WalkDpError("strongly_convex needs 0 < m_strong <= m_smooth")
            if self.eta > 2.0 / big_m:
                raise WalkDpError(
                    f"stepsize {self.eta} outside (0, 2/M]; contraction exceeds 1"
                )
        elif self.convexity != "nonconvex":
            raise WalkDpError(f"unknown convexity {self.convexity!r}")
        if self.batch is not None:
            if self.local_size is None or not (1 <= self.batch <= self.local_size):
                raise WalkDpError("need 1 <= batch <= local_size")

    @property
    def contraction(self) -> float:
        if self.convexity != "strongly_convex":
            return 1.0
        c = max(
            abs(1.0 - self.eta * self.m_strong),
            abs(1.0 - self.eta * self.m_smooth),
        )
        if c > 1.0:
            raise WalkDpError(f"contraction {c} exceeds 1")
        return c


def strongly_convex_params(
    c: float,
    steps_per_round: int = 1,
    eta: float = 1.0,
    delta_grad: float = 1.0,
    sigma: float = 1.0,
    **extra,
) -> AmplificationParams:
    """Construct parameters realizing a given contraction factor c."""
    if not (0.0 <= c <= 1.0):
        raise WalkDpError(f"contraction must be in [0, 1], got {c}")
    if c == 1.0:
        m_strong = m_smooth = 2.0 / eta  # boundary stepsize, |1 - eta M| = 1
    else:
        m_strong = (1.0 - c) / eta
        m_smooth = (1.0 + c) / eta
    return AmplificationParams(
        steps_per_round=steps_per_round,
        eta=eta,
        delta_grad=delta_grad,
        sigma=sigma,
        convexity="strongly_convex",
        m_strong=m_strong,
        m_smooth=m_smooth,
        **extra,
    )


def _log_optimal_factor(c: float, steps: int, t: int) -> float:
    """log of c^{2K(t-1)} (1+c)/(1-c) (1-c^K)^2 / (1-c^{2Kt})."""
    lc = math.log(c)
    return (
        2.0 * steps * (t - 1) * lc
        + math.log1p(c)
        - math.log1p(-c)
        + 2.0 * math.log(-math.expm1(steps * lc))
        - math.log(-math.expm1(2.0 * steps * t * lc))
    )


def mu_user_level(t: int, params: AmplificationParams) -> float:
    """Per-visit Gaussian parameter mu_t for user-level adjacency.

    Strongly convex losses with contraction c < 1 use the closed-form
    optimum of the shifted-iteration sum; at exactly c = 1 its continuous
    limit sqrt(K/t) Delta/sigma applies.  Non-convex losses compose the K
    noisy steps and dilute through the remaining rounds, giving
    sqrt(K) Delta / (sigma sqrt(tK + 1)).
    """
    if t < 1:
        raise WalkDpError(f"first-visit round must be >= 1, got {t}")
    ratio = params.delta_grad / params.sigma
    k = params.steps_per_round
    if params.convexity == "strongly_convex":
        c = params.contraction
        if c == 0.0:
            return ratio if t == 1 else 0.0
        if c >= 1.0:
            return math.sqrt(k / t) * ratio
        if k == 1 and t == 1:
            return ratio  # the optimal factor reduces to 1 algebraically
        return math.exp(0.5 * _log_optimal_factor(c, k, t)) * ratio
    return math.sqrt(k) * ratio / math.sqrt(t * k + 1.0)


def optimal_sum_squares_oracle(
    params: AmplificationParams, t: int
) -> dict[str, float]:
    """Numerically minimize the shifted-iteration sum of squares.

    Solves min sum_k a_k^2 subject to a_k = c b_{k-1} - b_k + s_k with
    b_0 = b_{tK} = 0, s_k = eta Delta for k <= K and 0 after, as an
    unconstrained linear least-squares problem in the b's, and returns the
    optimum next to the closed form for cross-validation.  Independent of
    the closed-form path by construction.
    """
    if params.convexity != "strongly_convex":
        raise WalkDpError("oracle applies to the strongly convex recursion")
    c = params.contraction
    if not (0.0 < c < 1.0):
        raise WalkDpError(f"oracle requires 0 < c < 1, got {c}")
    if t < 1:
        raise WalkDpError(f"t must be >= 1, got {t}")
    k = params.steps_per_round
    s = params.eta * params.delta_grad
    total = t * k
    s_vec = np.zeros(total)
    s_vec[:k] = s

    if total == 1:
        numeric = s * s
    else:
        # residual r_k = c b_{k-1} - b_k + s_k over unknowns b_1..b_{total-1}
        a_mat = np.zeros((total, total - 1))
        for row in range(total):
            if row >= 1:
                a_mat[row, row - 1] += c  # c * b_row, unknown index row-1
            if row <= total - 2:
                a_mat[row, row] -= 1.0  # -b_{row+1}
        b_opt, *_ = lstsq(a_mat, -s_vec)
        residual = a_mat @ b_opt + s_vec
        if residual.min() < -1e-8 or b_opt.min() < -1e-8:
            from scipy.optimize import nnls

            b_opt, _ = nnls(a_mat, -s_vec)
            residual = a_mat @ b_opt + s_vec
        numeric = float(residual @ residual)

    closed = math.exp(_log_optimal_factor(c, k, t)) * s * s
    gap = abs(numeric - closed) / max(closed, 1e-300)
    return {"numeric": numeric, "closed_form": closed, "relative_gap": gap}


@dataclass(frozen=True)
class PlanComponent:
    kind: str  # "gdp" | "subsampled"
    mu: float
    p: float = 1.0
    note: str = ""

    def __post_init__(self):
        if self.mu < 0 or not (0.0 <= self.p <= 1.0):
            raise WalkDpError("plan component needs mu >= 0 and p in [0, 1]")


@dataclass(frozen=True)
class CompositionPlan:
    components: tuple[PlanComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise WalkDpError("composition plan cannot be empty")


GAMMA_GRID = tuple(g / 10.0 for g in range(1, 11))


def record_level_plan(
    t: int,
    params: AmplificationParams,
    gamma_policy: str = "all_ones",
    delta: float = 1e-5,
    literal_eta: bool = False,
) -> CompositionPlan:
    """Per-visit composition plan for record-level adjacency.

    Each of the K minibatch steps contributes a subsampled Gaussian factor
    at rate batch/local_size; under a constant shift profile the carried
    displacement b_K adds one leading Gaussian factor that decays with
    c^{(t-1)K}.  The default all-ones profile zeroes the carry and yields K
    identical subsampled factors.  ``grid_search`` scans constant profiles
    and keeps the one with the smallest single-visit budget at ``delta``.

    The non-convex branch uses Delta/sigma scaling; ``literal_eta`` divides
    by the stepsize as printed in the source bound (the shifted-process
    scaling makes the stepsize cancel, so the default omits it).
    """
    if t < 1:
        raise WalkDpError(f"t must be >= 1, got {t}")
    if params.batch is None or params.local_size is None:
        raise WalkDpError("record-level plans need batch and local_size")
    p = params.batch / params.local_size
    k = params.steps_per_round
    ratio = params.delta_grad / params.sigma
    if literal_eta:
        ratio = ratio / params.eta

    if params.convexity != "strongly_convex":
        comp = PlanComponent("subsampled", mu=ratio, p=p, note="nonconvex step")
        return CompositionPlan(tuple(comp for _ in range(k)))

    c = params.contraction
    if gamma_policy == "all_ones":
        return _plan_for_gamma(1.0, t, params, p)
    if gamma_policy != "grid_search":
        raise WalkDpError(f"unknown gamma policy {gamma_policy!r}")

    from . import prv as prv_mod

    best_plan = None
    best_eps = math.inf
    for gamma in GAMMA_GRID:
        plan = _plan_for_gamma(gamma, t, params, p)
        eps = _single_visit_epsilon(plan, delta, prv_mod)
        if eps < best_eps:
            best_eps = eps
            best_plan = plan
    return best_plan


def _plan_for_gamma(
    gamma: float, t: int, params: AmplificationParams, p: float
) -> CompositionPlan:
    c = params.contraction
    k = params.steps_per_round
    s = params.eta * params.delta_grad
    scale = params.eta * params.sigma
    b_cur = 0.0
    comps: list[PlanComponent] = []
    for step in range(k):
        a_next = gamma * (c * b_cur + s)
        b_cur = max(c * b_cur, (1.0 - gamma) * (c * b_cur + s))
        comps.append(
            PlanComponent(
                "subsampled",
                mu=2.0 * a_next / scale,
                p=p,
                note=f"step {step + 1}, gamma={gamma}",
            )
        )
    lead_mu = 2.0 * math.sqrt(2.0) * (c ** ((t - 1) * k)) * b_cur / scale
    if lead_mu > 0:
        comps.insert(0, PlanComponent("gdp", mu=lead_mu, note="carried shift"))
    return CompositionPlan(tuple(comps))


def _single_visit_epsilon(plan: CompositionPlan, delta: float, prv_mod) -> float:
    dp = None
    for comp in plan.components:
        if comp.kind == "gdp":
            dist = prv_mod.prv_gaussian(comp.mu)
        else:
            dist = prv_mod.prv_subsampled_gaussian(comp.mu, comp.p)
        piece = prv_mod.discretize(dist)
        dp = piece if dp is None else prv_mod.compose(dp, piece)
    return prv_mod.epsilon_at(dp, delta)
