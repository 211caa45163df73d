"""End-to-end pairwise budgets: walk -> mixture -> composition -> query.

For an ordered pair (i, j) the pipeline is: first-visit weights of the walk
from i to j, a per-visit Gaussian (or subsampled) parameter for each
possible first-visit round, the weighted privacy-loss mixture with the
never-arrives mass as a zero-loss atom, composition over a high-probability
bound on how often j is visited, and finally an epsilon query at the
remaining delta budget.  The visit-count slack delta' and the grid
truncation slack are carried explicitly so the reported pair budget is a
valid decomposition of the requested delta.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import ndtr, ndtri

from . import counts
from .amplification import AmplificationParams, mu_user_level, record_level_plan
from .errors import CalibrationError, GraphValidationError, WalkDpError
from .graphs import HittingWeights, TransitionMatrix, analyze, hitting_profile
from .prv import (
    DiscretePrv,
    compose,
    delta_at,
    discretize,
    epsilon_at,
    prv_mixture,
    prv_subsampled_gaussian,
    self_compose,
    suggest_spacing,
)

_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class GridConfig:
    spacing: float = 1e-4
    tail_budget: float = 1e-12
    tau_pess: float = 1e-9
    tau_wrap: float = 1e-12
    weight_tail_cut: float = 1e-10
    # shrink the spacing when the composition count is large enough that the
    # rounding drift could move epsilon by more than this
    epsilon_slack: float = 5e-3


@dataclass(frozen=True)
class AccountingConfig:
    horizon: int
    params: AmplificationParams
    delta: float = 1e-5
    delta_split: float = 0.5
    level: str = "user"
    cap_contributions: bool = False
    gamma_policy: str = "all_ones"
    grid: GridConfig = field(default_factory=GridConfig)

    def __post_init__(self):
        if self.horizon < 1:
            raise WalkDpError(f"horizon must be >= 1, got {self.horizon}")
        if not (0.0 < self.delta < 1.0):
            raise WalkDpError(f"delta must be in (0, 1), got {self.delta}")
        if not (0.0 <= self.delta_split < 1.0):
            raise WalkDpError("delta_split must lie in [0, 1)")
        if self.level not in ("user", "record"):
            raise WalkDpError(f"level must be user or record, got {self.level!r}")
        if self.level == "record" and self.params.batch is None:
            raise WalkDpError("record level needs batch/local_size in params")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["params"] = asdict(self.params)
        out["grid"] = asdict(self.grid)
        return out


@dataclass(frozen=True)
class BudgetReport:
    source: int
    target: int
    epsilon: float
    delta: float
    delta_prime: float
    delta_conv_budget: float
    delta_trunc: float
    zeta: float
    count: int
    lambda2: float
    level: str
    sigma: float
    spacing: float
    config: dict
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        out = asdict(self)
        out["notes"] = list(self.notes)
        return out


@dataclass(frozen=True)
class MatrixReport:
    epsilon: np.ndarray  # (n, n), nan on the diagonal
    count: int
    zeta: float
    delta_prime: float
    lambda2: float
    config: dict

    def to_dict(self) -> dict:
        eps = [
            [None if math.isnan(x) else float(x) for x in row]
            for row in self.epsilon
        ]
        return {
            "epsilon": eps,
            "count": self.count,
            "zeta": self.zeta,
            "delta_prime": self.delta_prime,
            "lambda2": self.lambda2,
            "config": self.config,
        }


def validate_walk(w: TransitionMatrix):
    """Check the composition theorem's hypotheses; raise listing failures."""
    failures = []
    if not w.is_symmetric():
        failures.append("W is not symmetric")
        report = analyze(w, allow_asymmetric=True)
    else:
        report = analyze(w)
    if not report.is_irreducible:
        failures.append("W is not irreducible")
    if not report.is_aperiodic:
        failures.append("W is not aperiodic")
    if report.lambda2 >= 1.0 - 1e-15:
        failures.append("spectral gap is zero")
    if failures:
        raise GraphValidationError(
            "walk kernel violates accounting hypotheses: " + "; ".join(failures)
        )
    return report


def _visit_plan(lambda2: float, cfg: AccountingConfig, n: int) -> tuple[float, float, int]:
    """(delta_prime, zeta, count) under the configured slack policy."""
    if cfg.cap_contributions:
        return 0.0, 0.0, math.ceil(cfg.horizon / n)
    dp = cfg.delta_split * cfg.delta
    zeta = counts.zeta_for(lambda2, cfg.horizon, n, dp)
    return dp, zeta, counts.contribution_count(cfg.horizon, n, zeta)


def user_level_factors(cfg: AccountingConfig) -> np.ndarray:
    """mu_t * sigma / Delta for t = 1..T (scale-free part of the bound)."""
    base = AmplificationParams(
        steps_per_round=cfg.params.steps_per_round,
        eta=cfg.params.eta,
        delta_grad=1.0,
        sigma=1.0,
        convexity=cfg.params.convexity,
        m_strong=cfg.params.m_strong,
        m_smooth=cfg.params.m_smooth,
    )
    return np.array([mu_user_level(t, base) for t in range(1, cfg.horizon + 1)])


def _fold_weight_tail(weights: np.ndarray, cut: float) -> np.ndarray:
    """Zero trailing weights whose total is below ``cut``, folding their mass
    into the last kept entry.  Per-visit parameters are non-increasing in t,
    so the fold is conservative."""
    w = np.asarray(weights, dtype=float)
    tail = np.cumsum(w[::-1])[::-1]
    keep = tail > cut
    if keep.all() or not keep.any():
        return w
    last = int(np.max(np.where(keep)[0]))
    out = w.copy()
    folded = float(out[last + 1 :].sum())
    out[last + 1 :] = 0.0
    out[last] += folded
    return out


def _gaussian_bank(mus: np.ndarray, k_lo: int, k_hi: int, h: float):
    """Upper-rounded cell masses for gaussian PRVs on a shared lattice.

    Returns (pmf rows, mean offsets, dropped tail masses); rows are
    computed in chunks to bound peak memory.  Mass escaping the grid on
    either side is charged as slack.
    """
    bounds = np.arange(k_lo - 1, k_hi + 1, dtype=float) * h
    values = bounds[1:]
    rows = np.empty((len(mus), len(values)))
    moffs = np.empty(len(mus))
    truncs = np.empty(len(mus))
    chunk = max(1, int(4e6 // max(len(values), 1)))
    for start in range(0, len(mus), chunk):
        sl = slice(start, min(start + chunk, len(mus)))
        m = mus[sl][:, None]
        mean = m * m / 2.0
        cdf = ndtr((bounds[None, :] - mean) / m)
        pmf = np.diff(cdf, axis=1)
        rows[sl] = pmf
        truncs[sl] = (1.0 - cdf[:, -1]) + cdf[:, 0]
        a = (bounds[0] - mean[:, 0]) / mus[sl]
        b = (bounds[-1] - mean[:, 0]) / mus[sl]
        restricted = mean[:, 0] * (ndtr(b) - ndtr(a)) + mus[sl] * (
            np.exp(-a * a / 2.0) - np.exp(-b * b / 2.0)
        ) / _SQRT2PI
        moffs[sl] = pmf @ values - restricted
    return rows, moffs, truncs


def _mixture_grid(mus_active: np.ndarray, h: float, tail_budget: float) -> tuple[int, int]:
    """Lattice extent covering every active gaussian component's tails."""
    z_hi = -ndtri(tail_budget)
    z_lo = -ndtri(1e-16)
    hi = float(np.max(mus_active**2 / 2.0 + z_hi * mus_active))
    lo = float(np.min(mus_active**2 / 2.0 - z_lo * mus_active))
    k_hi = math.ceil(hi / h) + 1
    k_lo = min(math.floor(lo / h) - 1, -1)
    return k_lo, k_hi


def _mixture_dprv(
    weights: np.ndarray,
    residual: float,
    mus: np.ndarray,
    h: float,
    tail_budget: float,
    bank=None,
) -> DiscretePrv:
    """Discretized PRV of a gaussian mixture with a zero-loss atom."""
    active = weights > 0
    if not np.any(active) or float(np.max(mus[active], initial=0.0)) == 0.0:
        return discretize(prv_mixture(np.zeros(0), np.zeros(0), residual=1.0), h=h)

    if bank is not None:
        rows, moffs, truncs, k_lo, k_hi = bank
        pmf = weights @ rows
        moff = float(weights @ moffs)
        trunc = float(weights @ truncs)
    else:
        k_lo, k_hi = _mixture_grid(mus[active], h, tail_budget)
        idx = np.where(active)[0]
        pmf = np.zeros(k_hi - k_lo + 1)
        moff = 0.0
        trunc = 0.0
        chunk = max(1, int(4e6 // (k_hi - k_lo + 1)))
        for start in range(0, len(idx), chunk):
            sel = idx[start : start + chunk]
            sub_rows, sub_moffs, sub_truncs = _gaussian_bank(mus[sel], k_lo, k_hi, h)
            w_sel = weights[sel]
            pmf += w_sel @ sub_rows
            moff += float(w_sel @ sub_moffs)
            trunc += float(w_sel @ sub_truncs)
    if residual > 0:
        pmf[-k_lo] += residual
    return DiscretePrv(
        k_lo=k_lo,
        h=h,
        pmf=pmf,
        delta_trunc=trunc,
        mean_offset=moff,
        offset_span=h,
    )


def make_bank(mus: np.ndarray, h: float, tail_budget: float):
    """Shared component bank for repeated mixture assembly on one grid."""
    active = mus > 0
    if not np.any(active):
        return None
    k_lo, k_hi = _mixture_grid(mus[active], h, tail_budget)
    safe_mus = np.where(active, mus, 1.0)
    rows, moffs, truncs = _gaussian_bank(safe_mus, k_lo, k_hi, h)
    rows[~active] = 0.0
    if np.any(~active):
        rows[~active, -k_lo] = 1.0  # zero-parameter components are zero-loss atoms
        moffs[~active] = 0.0
        truncs[~active] = 0.0
    return rows, moffs, truncs, k_lo, k_hi


def _record_base(cfg: AccountingConfig, h: float) -> tuple[DiscretePrv | None, np.ndarray]:
    """(composed K-step subsampled base, per-t leading gaussian parameters)."""
    plan = record_level_plan(1, cfg.params, cfg.gamma_policy, delta=cfg.delta)
    sub = [c for c in plan.components if c.kind == "subsampled"]
    lead = [c for c in plan.components if c.kind == "gdp"]
    base = None
    for comp in sub:
        piece = discretize(
            prv_subsampled_gaussian(comp.mu, comp.p),
            h=h,
            tail_budget=cfg.grid.tail_budget,
        )
        base = piece if base is None else compose(base, piece)
    if lead and cfg.params.convexity == "strongly_convex":
        c = cfg.params.contraction
        k = cfg.params.steps_per_round
        mu1 = lead[0].mu
        lead_mus = mu1 * c ** ((np.arange(1, cfg.horizon + 1) - 1) * k)
    else:
        lead_mus = np.zeros(cfg.horizon)
    return base, lead_mus


def _user_mixture_inputs(
    weights: np.ndarray, residual: float, cfg: AccountingConfig, context: dict
) -> tuple[np.ndarray, np.ndarray, float]:
    mus = context["factors"] * cfg.params.delta_grad / cfg.params.sigma
    w = _fold_weight_tail(weights, cfg.grid.weight_tail_cut)
    w2, mus2, zero_mass = _bucket_components(w, mus)
    return w2, mus2, residual + zero_mass


def _single_visit_dprv(
    weights: np.ndarray,
    residual: float,
    cfg: AccountingConfig,
    h: float,
    context: dict,
) -> DiscretePrv:
    if cfg.level == "user":
        if context.get("bank") is not None:
            w = _fold_weight_tail(weights, cfg.grid.weight_tail_cut)
            mus = context["factors"] * cfg.params.delta_grad / cfg.params.sigma
            return _mixture_dprv(
                w, residual, mus, h, cfg.grid.tail_budget, bank=context["bank"]
            )
        w2, mus2, resid = _user_mixture_inputs(weights, residual, cfg, context)
        return _mixture_dprv(w2, resid, mus2, h, cfg.grid.tail_budget)

    base, lead_mus = context["record_base"]
    visited = float(weights.sum())
    if visited <= 0:
        return discretize(prv_mixture(np.zeros(0), np.zeros(0), residual=1.0), h=h)
    w = _fold_weight_tail(weights, cfg.grid.weight_tail_cut)
    cond = w / visited
    cw, cmus, czero = _bucket_components(cond, lead_mus)
    lead = _mixture_dprv(cw, czero, cmus, h, cfg.grid.tail_budget)
    combined = compose(base, lead) if base is not None else lead
    pmf = combined.pmf * visited
    k_lo = combined.k_lo
    if k_lo > 0:  # make room for the zero-loss atom
        pmf = np.concatenate([np.zeros(k_lo + 1), pmf])
        k_lo = 0
    idx0 = -k_lo
    if idx0 >= len(pmf):
        pmf = np.concatenate([pmf, np.zeros(idx0 - len(pmf) + 1)])
    pmf[idx0] += residual
    return DiscretePrv(
        k_lo=k_lo,
        h=h,
        pmf=pmf,
        delta_trunc=combined.delta_trunc,
        mean_offset=combined.mean_offset * visited,
        offset_span=combined.offset_span,
    )


def _pipeline_context(cfg: AccountingConfig) -> dict:
    ctx: dict = {}
    if cfg.level == "user":
        ctx["factors"] = user_level_factors(cfg)
    return ctx


MAX_GRID_CELLS = 8e6
MAX_MIXTURE_WORK = 4e8  # bound on (components x grid cells) per assembly
BUCKET_THRESHOLD = 512
BUCKET_RATIO = 1.005


def _spacing_for(
    cfg: AccountingConfig, count: int, mu_max: float = 0.0, n_components: int = 1
) -> float:
    """Lattice spacing: fine enough for the composed drift target, coarse
    enough that the composed support fits in a bounded number of cells and
    the mixture assembly in a bounded amount of work."""
    h = suggest_spacing(
        count, err_target=cfg.grid.epsilon_slack * 0.30, tau_pess=cfg.grid.tau_pess,
        h_max=cfg.grid.spacing,
    )
    if mu_max > 0:
        span = (
            count * mu_max**2 / 2.0
            + 12.0 * math.sqrt(count) * mu_max
            + mu_max**2 / 2.0
            + 18.0 * mu_max
            + 1.0
        )
        h = max(h, span / MAX_GRID_CELLS, span * max(n_components, 1) / MAX_MIXTURE_WORK)
    return h


def _bucket_components(
    weights: np.ndarray, mus: np.ndarray, ratio: float = BUCKET_RATIO
) -> tuple[np.ndarray, np.ndarray, float]:
    """Merge mixture components into geometric parameter bins.

    Each component's parameter is rounded up to its bin's upper edge, so
    the merged mixture dominates the original one (delta queries can only
    grow, by at most the bin ratio in epsilon).  Keeps large-horizon
    mixtures tractable without giving up conservativeness.  Returns
    (weights, mus, zero_loss_mass); the last carries any weight sitting on
    zero-parameter components.
    """
    active = (weights > 0) & (mus > 0)
    zero_mass = float(weights[(weights > 0) & (mus <= 0)].sum())
    if active.sum() <= BUCKET_THRESHOLD:
        return weights[active], mus[active], zero_mass
    w, mu = weights[active], mus[active]
    mu_max = float(np.max(mu))
    idx = np.floor(np.log(mu_max / mu) / math.log(ratio) + 1e-12).astype(np.int64)
    n_bins = int(idx.max()) + 1
    bucket_w = np.bincount(idx, weights=w, minlength=n_bins)
    bucket_mu = mu_max / ratio ** np.arange(n_bins)
    keep = bucket_w > 0
    return bucket_w[keep], bucket_mu[keep], zero_mass


def _mu_scale(cfg: AccountingConfig, ctx: dict) -> float:
    """Largest per-visit loss parameter entering the mixture."""
    if cfg.level == "user":
        factors = ctx["factors"]
        peak = float(np.max(factors, initial=0.0))
        return peak * cfg.params.delta_grad / cfg.params.sigma
    plan = record_level_plan(1, cfg.params, cfg.gamma_policy, delta=cfg.delta)
    return max(c.mu for c in plan.components)


def _budget_from_weights(
    hw: HittingWeights,
    spectral_lambda2: float,
    n: int,
    cfg: AccountingConfig,
    context: dict | None = None,
) -> BudgetReport:
    dp, zeta, count = _visit_plan(spectral_lambda2, cfg, n)
    delta_conv = cfg.delta - dp
    ctx = context if context is not None else _pipeline_context(cfg)
    if cfg.level == "user" and ctx.get("bank") is None:
        w2, mus2, resid = _user_mixture_inputs(hw.weights, hw.residual, cfg, ctx)
        mu_max = float(np.max(mus2, initial=0.0))
        h = _spacing_for(cfg, count, mu_max, len(mus2))
        single = _mixture_dprv(w2, resid, mus2, h, cfg.grid.tail_budget)
    else:
        h = ctx.get("bank_h")
        if h is None:
            n_comp = BUCKET_THRESHOLD + cfg.params.steps_per_round
            h = _spacing_for(cfg, count, _mu_scale(cfg, ctx), n_comp)
        if cfg.level == "record" and "record_base" not in ctx:
            ctx["record_base"] = _record_base(cfg, h)
        single = _single_visit_dprv(hw.weights, hw.residual, cfg, h, ctx)
    composed = self_compose(
        single, count, tau_pess=cfg.grid.tau_pess, tau_wrap=cfg.grid.tau_wrap
    )
    if delta_at(composed, 0.0) <= delta_conv:
        eps = 0.0
    else:
        eps = epsilon_at(composed, delta_conv)
    return BudgetReport(
        source=hw.source,
        target=hw.target,
        epsilon=eps,
        delta=cfg.delta,
        delta_prime=dp,
        delta_conv_budget=delta_conv,
        delta_trunc=composed.delta_trunc,
        zeta=zeta,
        count=count,
        lambda2=spectral_lambda2,
        level=cfg.level,
        sigma=cfg.params.sigma,
        spacing=h,
        config=cfg.to_dict(),
    )


def pair_budget(w: TransitionMatrix, i: int, j: int, cfg: AccountingConfig) -> BudgetReport:
    """Privacy budget for what user j's view reveals about user i."""
    if i == j:
        raise WalkDpError("pair budgets are defined for distinct nodes")
    report = validate_walk(w)
    from .graphs import hitting_weights as _hw

    hw = _hw(w, i, j, cfg.horizon)
    return _budget_from_weights(hw, report.lambda2, w.n, cfg)


def pairwise_matrix(w: TransitionMatrix, cfg: AccountingConfig) -> MatrixReport:
    """Budgets for all ordered pairs; diagonal entries are not applicable."""
    spectral = validate_walk(w)
    n = w.n
    dp, zeta, count = _visit_plan(spectral.lambda2, cfg, n)
    base_ctx = _pipeline_context(cfg)
    if cfg.level == "user" and cfg.horizon <= BUCKET_THRESHOLD:
        # shared component bank: every pair mixes the same per-round pmfs
        h = _spacing_for(cfg, count, _mu_scale(cfg, base_ctx), cfg.horizon)
        mus = base_ctx["factors"] * cfg.params.delta_grad / cfg.params.sigma
        base_ctx["bank"] = make_bank(mus, h, cfg.grid.tail_budget)
        base_ctx["bank_h"] = h
    elif cfg.level == "record":
        h = _spacing_for(
            cfg, count, _mu_scale(cfg, base_ctx),
            BUCKET_THRESHOLD + cfg.params.steps_per_round,
        )
        base_ctx["record_base"] = _record_base(cfg, h)
        base_ctx["bank_h"] = h
    eps = np.full((n, n), np.nan)

    def fill_target(j: int) -> None:
        profile = hitting_profile(w, j, cfg.horizon)
        for i in range(n):
            if i == j:
                continue
            hw = HittingWeights(
                source=i, target=j, horizon=cfg.horizon, weights=profile[:, i]
            )
            rep = _budget_from_weights(hw, spectral.lambda2, n, cfg, context=base_ctx)
            eps[i, j] = rep.epsilon

    workers = int(os.environ.get("ACCT_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill_target, range(n)))
    else:
        for j in range(n):
            fill_target(j)
    return MatrixReport(
        epsilon=eps,
        count=count,
        zeta=zeta,
        delta_prime=dp,
        lambda2=spectral.lambda2,
        config=cfg.to_dict(),
    )


def calibrate_sigma(
    w: TransitionMatrix,
    i: int,
    j: int,
    target_epsilon: float,
    cfg: AccountingConfig,
    bracket: tuple[float, float] = (1e-3, 1e3),
    rtol: float = 1e-4,
) -> tuple[float, BudgetReport]:
    """Smallest noise level meeting the target budget, by bisection.

    The pair budget is monotone non-increasing in sigma, so bisection over
    log-sigma converges; an unreachable target raises with the budgets at
    both bracket endpoints.
    """
    if target_epsilon <= 0:
        raise WalkDpError(f"target epsilon must be positive, got {target_epsilon}")
    spectral = validate_walk(w)
    from .graphs import hitting_weights as _hw

    hw = _hw(w, i, j, cfg.horizon)

    def budget_at(sigma: float) -> BudgetReport:
        params = _with_sigma(cfg.params, sigma)
        local = AccountingConfig(
            horizon=cfg.horizon,
            params=params,
            delta=cfg.delta,
            delta_split=cfg.delta_split,
            level=cfg.level,
            cap_contributions=cfg.cap_contributions,
            gamma_policy=cfg.gamma_policy,
            grid=cfg.grid,
        )
        return _budget_from_weights(hw, spectral.lambda2, w.n, local)

    lo, hi = bracket
    rep_lo = budget_at(lo)
    if rep_lo.epsilon <= target_epsilon:
        return lo, rep_lo
    rep_hi = budget_at(hi)
    if rep_hi.epsilon > target_epsilon:
        raise CalibrationError(
            f"target eps {target_epsilon} unreachable in sigma bracket "
            f"[{lo}, {hi}]: eps({lo})={rep_lo.epsilon:.4g}, "
            f"eps({hi})={rep_hi.epsilon:.4g}"
        )
    llo, lhi = math.log(lo), math.log(hi)
    while lhi - llo > rtol:
        mid = (llo + lhi) / 2.0
        if budget_at(math.exp(mid)).epsilon <= target_epsilon:
            lhi = mid
        else:
            llo = mid
    sigma = math.exp(lhi)
    return sigma, budget_at(sigma)


def _with_sigma(params: AmplificationParams, sigma: float) -> AmplificationParams:
    return AmplificationParams(
        steps_per_round=params.steps_per_round,
        eta=params.eta,
        delta_grad=params.delta_grad,
        sigma=sigma,
        convexity=params.convexity,
        m_strong=params.m_strong,
        m_smooth=params.m_smooth,
        batch=params.batch,
        local_size=params.local_size,
    )
