"""Command-line client for the accounting service.

The CLI is a thin shell: it parses flags into the service's request models,
posts them to an in-process application instance (or a remote server given
``--server``), and writes the JSON/CSV artifacts.  All numeric work happens
behind the service endpoints.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import httpx


def _graph_payload(args) -> dict:
    src = args.graph
    if os.path.exists(src):
        with open(src) as fh:
            data = json.load(fh)
        payload = {
            "n": data["n"],
            "edges": data.get("edges"),
            "matrix": data.get("matrix"),
            "scheme": data.get("scheme", "metropolis_hastings"),
        }
    else:
        payload = {"name": src, "scheme": "metropolis_hastings"}
    if getattr(args, "scheme", None):
        payload["scheme"] = args.scheme
    if getattr(args, "seed", None) is not None:
        payload["seed"] = args.seed
    return payload


def _accounting_payload(args) -> dict:
    params = {
        "K": args.K,
        "eta": args.eta,
        "delta_grad": args.clip,
        "sigma": args.sigma,
    }
    if args.strongly_convex:
        m_strong, m_smooth = args.strongly_convex
        params.update(
            convexity="strongly_convex", m_strong=m_strong, m_smooth=m_smooth
        )
    if args.batch is not None:
        params["batch"] = args.batch
    if args.local_size is not None:
        params["local_size"] = args.local_size
    out = {
        "T": args.T,
        "delta": args.delta,
        "delta_split": args.delta_split,
        "level": args.level,
        "cap_contributions": args.cap_contributions,
        "gamma_policy": args.gamma_policy,
        "params": params,
    }
    if args.grid_spacing is not None:
        out["grid"] = {"spacing": args.grid_spacing}
    return out


def _add_graph_flags(p: argparse.ArgumentParser):
    p.add_argument("--graph", required=True, help="graph JSON path or name (e.g. hypercube:32)")
    p.add_argument("--scheme", choices=["metropolis_hastings", "lazy_simple_walk", "explicit"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="artifact output directory")
    p.add_argument("--server", default=None, help="remote service URL (default: in-process)")


def _add_accounting_flags(p: argparse.ArgumentParser):
    p.add_argument("--T", type=int, required=True, help="communication rounds")
    p.add_argument("--K", type=int, default=1, help="local steps per round")
    p.add_argument("--eta", type=float, default=0.1, help="stepsize")
    p.add_argument("--sigma", type=float, default=1.0, help="per-step noise std")
    p.add_argument("--clip", type=float, default=1.0, help="gradient sensitivity")
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--delta-split", dest="delta_split", type=float, default=0.5)
    p.add_argument("--level", choices=["user", "record"], default="user")
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--local-size", dest="local_size", type=int, default=None)
    p.add_argument(
        "--strongly-convex",
        dest="strongly_convex",
        nargs=2,
        type=float,
        metavar=("M_STRONG", "M_SMOOTH"),
        default=None,
    )
    p.add_argument("--cap-contributions", dest="cap_contributions", action="store_true")
    p.add_argument("--gamma-policy", dest="gamma_policy", choices=["all_ones", "grid_search"], default="all_ones")
    p.add_argument("--grid-spacing", dest="grid_spacing", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="walkdp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graph-check", help="spectral and structural report")
    _add_graph_flags(p)

    p = sub.add_parser("weights", help="first-visit weight distribution")
    _add_graph_flags(p)
    p.add_argument("--i", type=int, required=True)
    p.add_argument("--j", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--mc-samples", dest="mc_samples", type=int, default=None)

    p = sub.add_parser("budget", help="pairwise privacy budget")
    _add_graph_flags(p)
    _add_accounting_flags(p)
    p.add_argument("--i", type=int, required=True)
    p.add_argument("--j", type=int, required=True)

    p = sub.add_parser("matrix", help="all-pairs budget matrix")
    _add_graph_flags(p)
    _add_accounting_flags(p)

    p = sub.add_parser("calibrate", help="noise level for a target budget")
    _add_graph_flags(p)
    _add_accounting_flags(p)
    p.add_argument("--i", type=int, required=True)
    p.add_argument("--j", type=int, required=True)
    p.add_argument("--target-eps", dest="target_eps", type=float, required=True)

    p = sub.add_parser("rdp-budget", help="Renyi-baseline pair budget")
    _add_graph_flags(p)
    _add_accounting_flags(p)
    p.add_argument("--i", type=int, required=True)
    p.add_argument("--j", type=int, required=True)
    p.add_argument("--weighting", choices=["hitting_time", "power_of_kernel"], default="hitting_time")

    p = sub.add_parser("secldp", help="correlated-noise accounting/calibration")
    _add_graph_flags(p)
    p.add_argument("--q", type=int, required=True, help="collusion level")
    p.add_argument("--clip", type=float, required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--sigma-dp", dest="sigma_dp", type=float, default=None)
    p.add_argument("--sigma-cor", dest="sigma_cor", type=float, default=None)
    p.add_argument("--target-eps", dest="target_eps", type=float, default=None)
    p.add_argument("--cor-ratio", dest="cor_ratio", type=float, default=None)

    p = sub.add_parser("simulate", help="run a training protocol on synthetic data")
    _add_graph_flags(p)
    p.add_argument("--algorithm", choices=["walk", "decor"], default="walk")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--clip", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--sigma-dp", dest="sigma_dp", type=float, default=0.0)
    p.add_argument("--sigma-cor", dest="sigma_cor", type=float, default=0.0)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--start-node", dest="start_node", type=int, default=0)
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--per-user", dest="per_user", type=int, default=64)
    p.add_argument("--eval-every", dest="eval_every", type=int, default=100)
    p.add_argument("--cap-contributions", dest="cap_contributions", type=int, default=None)

    p = sub.add_parser("compare", help="side-by-side accounting routes")
    _add_graph_flags(p)
    _add_accounting_flags(p)
    p.add_argument("--i", type=int, default=None)
    p.add_argument("--j", type=int, default=None)
    p.add_argument("--mode", choices=["budgets", "sigma"], default="budgets")
    p.add_argument("--target-eps", dest="target_eps", type=float, default=None)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _make_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=3600.0)
    from starlette.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def _post(args, endpoint: str, payload: dict) -> dict:
    with _make_client(args.server) as client:
        resp = client.post(endpoint, json=payload)
    body = resp.json()
    if resp.status_code != 200:
        if "detail" in body and "error" not in body:
            body = {"error": body["detail"], "kind": "RequestValidationError"}
        print(json.dumps(body), file=sys.stderr)
        raise SystemExit(1)
    return body


def _write_json(args, name: str, body: dict) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2)
    return path


def _write_csv(args, name: str, header: list, rows: list) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service.app import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0

    if args.command == "graph-check":
        body = _post(args, "/graph/check", {"graph": _graph_payload(args)})
        _write_json(args, "graph_check.json", body)

    elif args.command == "weights":
        body = _post(
            args,
            "/graph/weights",
            {
                "graph": _graph_payload(args),
                "i": args.i,
                "j": args.j,
                "T": args.T,
                "mc_samples": args.mc_samples,
                "seed": args.seed,
            },
        )
        _write_json(args, "weights.json", body)
        rows = [[t + 1, repr(wt)] for t, wt in enumerate(body["weights"])]
        rows.append(["residual", repr(body["residual"])])
        _write_csv(args, "weights.csv", ["t", "weight"], rows)

    elif args.command == "budget":
        body = _post(
            args,
            "/budget/pair",
            {
                "graph": _graph_payload(args),
                "accounting": _accounting_payload(args),
                "i": args.i,
                "j": args.j,
            },
        )
        _write_json(args, "budget.json", body)
        fields = ["i", "j", "epsilon", "delta", "delta_prime", "delta_trunc",
                  "zeta", "count", "sigma"]
        _write_csv(args, "budget.csv", fields, [[repr(body[f]) if isinstance(body[f], float) else body[f] for f in fields]])

    elif args.command == "matrix":
        body = _post(
            args,
            "/budget/matrix",
            {"graph": _graph_payload(args), "accounting": _accounting_payload(args)},
        )
        _write_json(args, "matrix.json", body)
        rows = [
            ["" if x is None else repr(x) for x in row] for row in body["epsilon"]
        ]
        n = len(rows)
        _write_csv(args, "matrix.csv", [f"eps_to_{j}" for j in range(n)], rows)

    elif args.command == "calibrate":
        body = _post(
            args,
            "/budget/calibrate",
            {
                "graph": _graph_payload(args),
                "accounting": _accounting_payload(args),
                "i": args.i,
                "j": args.j,
                "target_epsilon": args.target_eps,
            },
        )
        _write_json(args, "calibrate.json", body)
        fields = ["sigma", "achieved_epsilon", "target_epsilon"]
        _write_csv(args, "calibrate.csv", fields, [[repr(body[f]) for f in fields]])

    elif args.command == "rdp-budget":
        body = _post(
            args,
            "/budget/rdp",
            {
                "graph": _graph_payload(args),
                "accounting": _accounting_payload(args),
                "i": args.i,
                "j": args.j,
                "weighting": args.weighting,
            },
        )
        _write_json(args, "rdp_budget.json", body)

    elif args.command == "secldp":
        body = _post(
            args,
            "/secldp/account",
            {
                "graph": _graph_payload(args),
                "q": args.q,
                "delta_grad": args.clip,
                "rounds": args.rounds,
                "delta": args.delta,
                "sigma_dp": args.sigma_dp,
                "sigma_cor": args.sigma_cor,
                "target_epsilon": args.target_eps,
                "cor_ratio": args.cor_ratio,
            },
        )
        _write_json(args, "secldp.json", body)
        fields = ["mu_round", "mu_total", "epsilon", "delta", "sigma_dp",
                  "sigma_cor", "fiedler_value"]
        _write_csv(args, "secldp.csv", fields, [[repr(float(body[f])) for f in fields]])

    elif args.command == "simulate":
        body = _post(
            args,
            "/simulate",
            {
                "graph": _graph_payload(args),
                "algorithm": args.algorithm,
                "T": args.T,
                "K": args.K,
                "eta": args.eta,
                "clip": args.clip,
                "sigma": args.sigma,
                "sigma_dp": args.sigma_dp,
                "sigma_cor": args.sigma_cor,
                "batch": args.batch,
                "start_node": args.start_node,
                "seed": args.seed,
                "dim": args.dim,
                "per_user": args.per_user,
                "eval_every": args.eval_every,
                "cap_contributions": args.cap_contributions,
            },
        )
        _write_json(args, "simulate.json", body)
        rows = list(zip(body["steps"], map(repr, body["objective"]), map(repr, body["accuracy"])))
        _write_csv(args, "metrics.csv", ["step", "objective", "accuracy"], rows)

    elif args.command == "compare":
        body = _post(
            args,
            "/compare",
            {
                "graph": _graph_payload(args),
                "accounting": _accounting_payload(args),
                "mode": args.mode,
                "i": args.i,
                "j": args.j,
                "target_epsilon": args.target_eps,
            },
        )
        _write_json(args, "compare.json", body)
        if body["mode"] == "budgets":
            rows = [
                [r["i"], r["j"], repr(r["eps_fdp"]), repr(r["eps_rdp_hitting"]), repr(r["eps_rdp_power"])]
                for r in body["rows"]
            ]
            _write_csv(
                args,
                "compare.csv",
                ["i", "j", "eps_fdp", "eps_rdp_hitting", "eps_rdp_power"],
                rows,
            )

    print(json.dumps(body, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
