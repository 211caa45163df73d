"""FastAPI service exposing the accounting engine.

Every response embeds the fully resolved configuration so batch outputs can
be audited and reproduced.  Domain errors surface as 422 with a machine-
readable body.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import rdp as rdp_mod
from ..accountant import (
    AccountingConfig,
    GridConfig,
    calibrate_sigma,
    pair_budget,
    pairwise_matrix,
)
from ..amplification import AmplificationParams
from ..errors import WalkDpError
from ..graphs import (
    GraphSpec,
    analyze,
    build_transition,
    graph_spec_to_dict,
    hitting_weights,
    laplacian_fiedler,
    mc_hitting_oracle,
    named_graph,
)
from ..secagg import SecParams, sec_calibrate, sec_gdp_mu, sec_to_epsdelta
from ..simulate import SimConfig, run_decor, run_walk_dpsgd, synth_logreg_data
from . import models as m


def _resolve_graph(gm: m.GraphModel):
    if gm.name is not None:
        spec = named_graph(gm.name, seed=gm.seed)
        scheme = gm.scheme
    else:
        matrix = np.asarray(gm.matrix, dtype=float) if gm.matrix is not None else None
        spec = GraphSpec(n=gm.n, edges=tuple(gm.edges or ()), matrix=matrix)
        scheme = gm.scheme
    w = build_transition(spec, scheme)
    return spec, scheme, w


def _resolve_accounting(am: m.AccountingModel) -> AccountingConfig:
    p = am.params
    params = AmplificationParams(
        steps_per_round=p.K,
        eta=p.eta,
        delta_grad=p.delta_grad,
        sigma=p.sigma,
        convexity=p.convexity,
        m_strong=p.m_strong,
        m_smooth=p.m_smooth,
        batch=p.batch,
        local_size=p.local_size,
    )
    grid = GridConfig(
        spacing=am.grid.spacing,
        tail_budget=am.grid.tail_budget,
        tau_pess=am.grid.tau_pess,
        tau_wrap=am.grid.tau_wrap,
        weight_tail_cut=am.grid.weight_tail_cut,
        epsilon_slack=am.grid.epsilon_slack,
    )
    return AccountingConfig(
        horizon=am.T,
        params=params,
        delta=am.delta,
        delta_split=am.delta_split,
        level=am.level,
        cap_contributions=am.cap_contributions,
        gamma_policy=am.gamma_policy,
        grid=grid,
    )


def _audit(gm: m.GraphModel, spec, scheme, extra: dict | None = None) -> dict:
    out = {"graph": graph_spec_to_dict(spec, scheme)}
    if gm.name is not None:
        out["graph"]["name"] = gm.name
        out["graph"].pop("edges", None)  # regenerable from the name
    if extra:
        out.update(extra)
    return out


def create_app() -> FastAPI:
    app = FastAPI(title="walkdp", version="0.1.0")

    @app.exception_handler(WalkDpError)
    async def _domain_error(_req: Request, exc: WalkDpError):
        return JSONResponse(
            status_code=422,
            content={"error": str(exc), "kind": type(exc).__name__},
        )

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/graph/check", response_model=m.GraphCheckResponse)
    def graph_check(req: m.GraphCheckRequest):
        spec, scheme, w = _resolve_graph(req.graph)
        report = analyze(w, allow_asymmetric=True)
        fiedler = laplacian_fiedler(spec) if spec.edges else None
        return m.GraphCheckResponse(
            n=w.n,
            scheme=scheme,
            fiedler_value=fiedler,
            config=_audit(req.graph, spec, scheme),
            **report.to_dict(),
        )

    @app.post("/graph/weights", response_model=m.WeightsResponse)
    def graph_weights(req: m.WeightsRequest):
        spec, scheme, w = _resolve_graph(req.graph)
        hw = hitting_weights(w, req.i, req.j, req.T)
        mc_w = mc_r = None
        if req.mc_samples:
            mc = mc_hitting_oracle(w, req.i, req.j, req.T, req.mc_samples, req.seed)
            mc_w = [float(x) for x in mc.weights]
            mc_r = mc.residual
        return m.WeightsResponse(
            i=req.i,
            j=req.j,
            T=req.T,
            weights=[float(x) for x in hw.weights],
            residual=hw.residual,
            mc_weights=mc_w,
            mc_residual=mc_r,
            config=_audit(req.graph, spec, scheme, {"seed": req.seed}),
        )

    @app.post("/budget/pair", response_model=m.PairBudgetResponse)
    def budget_pair(req: m.PairBudgetRequest):
        spec, scheme, w = _resolve_graph(req.graph)
        cfg = _resolve_accounting(req.accounting)
        rep = pair_budget(w, req.i, req.j, cfg)
        return m.PairBudgetResponse(
            i=req.i,
            j=req.j,
            epsilon=rep.epsilon,
            delta=rep.delta,
            delta_prime=rep.delta_prime,
            delta_conv_budget=rep.delta_conv_budget,
            delta_trunc=rep.delta_trunc,
            zeta=rep.zeta,
            count=rep.count,
            lambda2=rep.lambda2,
            level=rep.level,
            sigma=rep.sigma,
            spacing=rep.spacing,
            config=_audit(req.graph, spec, scheme, {"accounting": rep.config}),
        )

    @app.post("/budget/matrix", response_model=m.MatrixResponse)
    def budget_matrix(req: m.MatrixRequest):
        spec, scheme, w = _resolve_graph(req.graph)
        cfg = _resolve_accounting(req.accounting)
        rep = pairwise_matrix(w, cfg)
        d = rep.to_dict()
        return m.MatrixResponse(
            epsilon=d["epsilon"],
            count=rep.count,
            zeta=rep.zeta,
            delta_prime=rep.delta_prime,
            lambda2=rep.lambda2,
            config=_audit(req.graph, spec, scheme, {"accounting": rep.config}),
        )

    @app.post("/budget/calibrate", response_model=m.CalibrateResponse)
    def budget_calibrate(req: m.CalibrateRequest):
        spec, scheme, w = _resolve_graph(req.graph)
        cfg = _resolve_accounting(req.accounting)
        sigma, rep = calibrate_sigma(
            w, req.i, req.j, req.target_epsilon, cfg, bracket=req.bracket
        )
        return m.CalibrateResponse(
            sigma=sigma,
            achieved_epsilon=rep.epsilon,
            target_epsilon=req.target_epsilon,
            config=_audit(req.graph, spec, scheme, {"accounting": rep.config}),
        )

    @app.post("/budget/rdp", response_model=m.RdpBudgetResponse)
    def budget_rdp(req: m.RdpBudgetRequest):
        spec, scheme, w = _resolve_graph(req.graph)
        cfg = _resolve_accounting(req.accounting)
        eps = rdp_mod.rdp_pair_budget(w, req.i, req.j, cfg, weighting=req.weighting)
        return m.RdpBudgetResponse(
            i=req.i,
            j=req.j,
            epsilon=eps,
            weighting=req.weighting,
            config=_audit(req.graph, spec, scheme, {"accounting": cfg.to_dict()}),
        )

    @app.post("/secldp/account", response_model=m.SecLdpResponse)
    def secldp_account(req: m.SecLdpRequest):
        spec, scheme, _w = _resolve_graph(req.graph)
        lam = laplacian_fiedler(spec)
        if req.sigma_dp is not None and req.sigma_cor is not None:
            sigma_dp, sigma_cor = req.sigma_dp, req.sigma_cor
        else:
            sigma_dp, sigma_cor = sec_calibrate(
                n=spec.n,
                q=req.q,
                delta_grad=req.delta_grad,
                lambda_laplacian=lam,
                rounds=req.rounds,
                target_epsilon=req.target_epsilon,
                delta=req.delta,
                cor_ratio=req.cor_ratio,
            )
        params = SecParams(
            n=spec.n,
            q=req.q,
            delta_grad=req.delta_grad,
            sigma_dp=sigma_dp,
            sigma_cor=sigma_cor,
            lambda_laplacian=lam,
        )
        out = sec_to_epsdelta(params, req.rounds, req.delta)
        return m.SecLdpResponse(
            mu_round=out["mu_round"],
            mu_total=out["mu_total"],
            epsilon=out["epsilon"],
            epsilon_closed_form=out["epsilon_closed_form"],
            delta=req.delta,
            rounds=req.rounds,
            sigma_dp=sigma_dp,
            sigma_cor=sigma_cor,
            fiedler_value=lam,
            config=_audit(req.graph, spec, scheme, {"request": req.model_dump()}),
        )

    @app.post("/simulate", response_model=m.SimulateResponse)
    def simulate(req: m.SimulateRequest):
        spec, scheme, w = _resolve_graph(req.graph)
        data = synth_logreg_data(spec.n, req.per_user, req.dim, seed=req.seed)
        cfg = SimConfig(
            horizon=req.T,
            eta=req.eta,
            clip=req.clip,
            seed=req.seed,
            steps_per_round=req.K,
            sigma=req.sigma,
            sigma_dp=req.sigma_dp,
            sigma_cor=req.sigma_cor,
            batch=req.batch,
            start_node=req.start_node,
            dim=req.dim,
            eval_every=req.eval_every,
            cap_contributions=req.cap_contributions,
        )
        if req.algorithm == "walk":
            metrics = run_walk_dpsgd(w, cfg, data)
        else:
            metrics = run_decor(w, spec, cfg, data)
        return m.SimulateResponse(
            config=_audit(req.graph, spec, scheme, {"request": req.model_dump()}),
            **metrics.to_dict(),
        )

    @app.post("/compare", response_model=m.CompareResponse)
    def compare(req: m.CompareRequest):
        spec, scheme, w = _resolve_graph(req.graph)
        cfg = _resolve_accounting(req.accounting)
        audit = _audit(req.graph, spec, scheme, {"accounting": cfg.to_dict()})
        if req.mode == "sigma":
            sigma_fdp, _ = calibrate_sigma(w, req.i, req.j, req.target_epsilon, cfg)
            sigma_rh = rdp_mod.calibrate_sigma_rdp(
                w, req.i, req.j, req.target_epsilon, cfg, weighting="hitting_time"
            )
            sigma_rp = rdp_mod.calibrate_sigma_rdp(
                w, req.i, req.j, req.target_epsilon, cfg, weighting="power_of_kernel"
            )
            return m.CompareResponse(
                mode="sigma",
                sigma_fdp=sigma_fdp,
                sigma_rdp_hitting=sigma_rh,
                sigma_rdp_power=sigma_rp,
                ordering_holds=sigma_fdp <= sigma_rh <= sigma_rp,
                config=audit,
            )
        pairs = (
            [(req.i, req.j)]
            if req.i is not None and req.j is not None
            else [(i, j) for i in range(w.n) for j in range(w.n) if i != j]
        )
        mat = pairwise_matrix(w, cfg)
        rows = []
        ordering = True
        for (i, j) in pairs:
            e_f = float(mat.epsilon[i, j])
            e_rh = rdp_mod.rdp_pair_budget(w, i, j, cfg, weighting="hitting_time")
            e_rp = rdp_mod.rdp_pair_budget(w, i, j, cfg, weighting="power_of_kernel")
            ordering = ordering and (e_f <= e_rh + 1e-12 <= e_rp + 2e-12)
            rows.append(
                m.ComparePairRow(
                    i=i, j=j, eps_fdp=e_f, eps_rdp_hitting=e_rh, eps_rdp_power=e_rp
                )
            )
        return m.CompareResponse(
            mode="budgets", rows=rows, ordering_holds=ordering, config=audit
        )

    return app


app = create_app()
