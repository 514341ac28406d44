"""Command-line front end.

Verbs:

    framersynth decompose  --model cfg.yaml
    framersynth synthesize --model cfg.yaml --out dir
    framersynth simulate   --model cfg.yaml --mode closed --runs 20 --out dir
    framersynth verify     --model cfg.yaml --gains gains.yaml

Exit codes: 0 success, 2 unusable input (parse/validation), 3 synthesis
infeasible or solver failure, 4 certificate check failed, 5 containment
violated during simulation.

Simulation output is one CSV per run plus a summary.yaml. CSV columns, in
order: step, x_1..x_n, xhi_1..xhi_n, xlo_1..xlo_n, u_1..u_m, y_1..y_l.
State rows run from step 0 to the last recorded step; the final row leaves
u/y blank because no input is issued at the terminal state. Floats are
written with full precision (repr), so re-reading a CSV reproduces every
metric exactly.

The SDP backend can be forced with the FRAMERSYNTH_SDP_SOLVER environment
variable (e.g. CLARABEL or SCS).
"""

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import yaml

from .config import ConfigError, load_gains, parse_config, save_gains
from .controller import run_closed_loop
from .decomp import regularize_bounding
from .matops import spectral_radius
from .observer import verify_observer_gain
from .synthesis import build_comparison, synthesize, verify_certified_gains

__all__ = ["main", "read_run_csv", "summarize_runs"]

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_CERT = 4
EXIT_CONTAIN = 5

CONTAIN_TOL = 1e-9


def _ensure_out(path):
    os.makedirs(path, exist_ok=True)
    return path


def _dump_yaml(data, path=None):
    text = yaml.safe_dump(data, sort_keys=True, default_flow_style=None)
    if path is not None:
        with open(path, "w") as f:
            f.write(text)
    return text


def _plain(obj):
    """Recursively convert numpy scalars/arrays for YAML emission."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def write_run_csv(path, traj):
    """One trajectory to CSV with the documented column order."""
    n = traj.x.shape[1]
    m = traj.u.shape[1] if traj.u.size else 0
    l = traj.y.shape[1] if traj.y.size else 0
    header = (
        ["step"]
        + [f"x_{i + 1}" for i in range(n)]
        + [f"xhi_{i + 1}" for i in range(n)]
        + [f"xlo_{i + 1}" for i in range(n)]
        + [f"u_{j + 1}" for j in range(m)]
        + [f"y_{p + 1}" for p in range(l)]
    )
    steps = traj.x.shape[0]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for k in range(steps):
            row = [k]
            row += [float(v) for v in traj.x[k]]
            row += [float(v) for v in traj.xhi[k]]
            row += [float(v) for v in traj.xlo[k]]
            if k < traj.u.shape[0]:
                row += [float(v) for v in traj.u[k]]
                row += [float(v) for v in traj.y[k]]
            else:
                row += [""] * (m + l)
            w.writerow(row)


def read_run_csv(path):
    """Parse a run CSV back into arrays; inverse of write_run_csv."""
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = list(reader)
    n = sum(1 for h in header if h.startswith("x_"))
    m = sum(1 for h in header if h.startswith("u_"))
    l = sum(1 for h in header if h.startswith("y_"))
    x = np.array([[float(c) for c in r[1:1 + n]] for r in rows])
    xhi = np.array([[float(c) for c in r[1 + n:1 + 2 * n]] for r in rows])
    xlo = np.array([[float(c) for c in r[1 + 2 * n:1 + 3 * n]] for r in rows])
    u_rows = [r for r in rows if r[1 + 3 * n] != ""] if m else []
    u = np.array([[float(c) for c in r[1 + 3 * n:1 + 3 * n + m]] for r in u_rows]) if m else np.zeros((0, 0))
    y = np.array([[float(c) for c in r[1 + 3 * n + m:1 + 3 * n + m + l]] for r in u_rows]) if l else np.zeros((0, 0))
    return {"x": x, "xhi": xhi, "xlo": xlo, "u": u, "y": y}


def summarize_runs(runs, horizon):
    """Aggregate metrics over parsed or recorded runs.

    Accepts either ClosedLoopTrajectory objects or read_run_csv dicts; the
    verdicts are recomputed from the arrays so CSV round trips land on the
    same numbers.
    """
    per_run = []
    widths = []
    n_contained = 0
    n_diverged = 0
    for item in runs:
        x = item["x"] if isinstance(item, dict) else item.x
        xhi = item["xhi"] if isinstance(item, dict) else item.xhi
        xlo = item["xlo"] if isinstance(item, dict) else item.xlo
        contained = bool(np.all(xlo - CONTAIN_TOL <= x) and np.all(x <= xhi + CONTAIN_TOL))
        diverged = x.shape[0] - 1 < horizon
        w = xhi - xlo
        mean_w = float(np.mean(w))
        n_contained += contained
        n_diverged += diverged
        widths.append(mean_w)
        per_run.append({
            "steps": int(x.shape[0] - 1),
            "contained": contained,
            "diverged": diverged,
            "mean_width": mean_w,
            "final_width_inf": float(np.max(w[-1])) if w.size else 0.0,
        })
    total = len(per_run)
    return {
        "runs": total,
        "containment_rate": float(n_contained) / total if total else 1.0,
        "diverged_runs": int(n_diverged),
        "mean_width": float(np.mean(widths)) if widths else 0.0,
        "per_run": per_run,
    }


def _load_config(path):
    try:
        return parse_config(path)
    except FileNotFoundError:
        print(f"error: model file not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)


def cmd_decompose(args):
    cfg = _load_config(args.model)
    dp = cfg.decomposition()
    F_phi = regularize_bounding(dp.phi.F, eps0=cfg.eps0, policy=cfg.regularization)
    gamma = float(np.linalg.norm(F_phi, np.inf))
    report = {
        "model": cfg.name,
        "phi": {
            "H": dp.phi.H,
            "jac_lo": dp.phi.jac_lo,
            "jac_hi": dp.phi.jac_hi,
            "F": dp.phi.F,
            "F_regularized": F_phi,
        },
        "psi": {
            "H": dp.psi.H,
            "jac_lo": dp.psi.jac_lo,
            "jac_hi": dp.psi.jac_hi,
            "F": dp.psi.F,
        },
        "gamma": gamma,
    }
    if cfg.alpha * gamma ** 2 < 1.0:
        report["epsilon"] = 1.0 / (cfg.alpha * gamma ** 2) - 1.0
    text = _dump_yaml(_plain(report))
    print(text, end="")
    if args.out:
        _dump_yaml(_plain(report), os.path.join(_ensure_out(args.out), "decomposition.yaml"))
    return EXIT_OK


def cmd_synthesize(args):
    cfg = _load_config(args.model)
    alpha = args.alpha if args.alpha is not None else cfg.alpha
    try:
        res = synthesize(
            cfg.model,
            dp=cfg.decomposition(),
            L=cfg.L,
            alpha=alpha,
            eps0=cfg.eps0,
            reg_policy=cfg.regularization,
            selection=cfg.selection,
            search_seed=args.seed if args.seed is not None else cfg.seed,
        )
    except ValueError as e:
        # e.g. alpha * gamma^2 >= 1, or a spread matrix that cannot be
        # regularized under the configured policy: the program cannot be posed
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    summary = _plain(res.summary())
    summary["rho_A"] = float(spectral_radius(cfg.model.A))
    if res.comparison is not None:
        summary["rho_A_tilde"] = float(spectral_radius(res.comparison.A_tilde))
    out = _ensure_out(args.out)
    cert = None
    if res.status == "certified":
        cert = {
            "P": res.cert_solution["P"],
            "mu": res.cert_solution["mu"],
            "alpha": res.alpha,
            "epsilon": res.epsilon,
            "gamma": res.gamma,
        }
    save_gains(os.path.join(out, "gains.yaml"), gains=res.gains, L=res.L, certificate=cert)
    _dump_yaml(summary, os.path.join(out, "summary.yaml"))
    for key in ("status", "gamma", "epsilon", "sdp_status", "sdp_mu", "certified_mu", "structure"):
        if key in summary and summary[key] is not None:
            print(f"{key}: {summary[key]}")
    print(f"artifacts written to {out}")
    if res.status == "certified":
        return EXIT_OK
    if res.status == "uncertified_gains":
        return EXIT_CERT
    return EXIT_INFEASIBLE


def cmd_simulate(args):
    cfg = _load_config(args.model)
    horizon = args.horizon if args.horizon is not None else cfg.horizon
    if horizon < 1:
        print("error: horizon must be at least 1", file=sys.stderr)
        return EXIT_PARSE
    if args.runs < 1:
        print("error: runs must be at least 1", file=sys.stderr)
        return EXIT_PARSE
    seed = args.seed if args.seed is not None else cfg.seed
    gains = cfg.gains
    L = cfg.L
    if args.gains:
        try:
            loaded = load_gains(args.gains)
        except (ConfigError, FileNotFoundError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_PARSE
        gains = loaded["gains"] if loaded["gains"] is not None else gains
        L = loaded["L"] if loaded["L"] is not None else L
    if args.mode == "closed" and gains is None:
        print("error: closed-loop simulation needs controller gains "
              "(config `gains:` block or --gains file)", file=sys.stderr)
        return EXIT_PARSE
    if L is None:
        # no measurement correction; the framer still propagates the box
        L = np.zeros((cfg.model.n, cfg.model.l))
    dp = cfg.decomposition()
    g = gains if args.mode == "closed" else None

    def one(i):
        return run_closed_loop(cfg.model, dp, L, g=g, horizon=horizon,
                               seed=seed + i, scheme=args.scheme,
                               contain_tol=CONTAIN_TOL)

    workers = min(args.runs, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        trajs = list(pool.map(one, range(args.runs)))

    out = _ensure_out(args.out)
    for i, traj in enumerate(trajs):
        write_run_csv(os.path.join(out, f"run_{i:03d}.csv"), traj)
    summary = summarize_runs(trajs, horizon)
    summary["mode"] = args.mode
    summary["scheme"] = args.scheme
    summary["horizon"] = int(horizon)
    summary["base_seed"] = int(seed)
    for i, rec in enumerate(summary["per_run"]):
        rec["seed"] = int(seed + i)
    _dump_yaml(_plain(summary), os.path.join(out, "summary.yaml"))
    print(f"runs: {summary['runs']}  containment_rate: {summary['containment_rate']:.3f}  "
          f"diverged: {summary['diverged_runs']}  mean_width: {summary['mean_width']:.6g}")
    print(f"artifacts written to {out}")
    if summary["containment_rate"] < 1.0:
        return EXIT_CONTAIN
    return EXIT_OK


def cmd_verify(args):
    cfg = _load_config(args.model)
    gains = cfg.gains
    L = cfg.L
    certificate = None
    if args.gains:
        try:
            loaded = load_gains(args.gains)
        except (ConfigError, FileNotFoundError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_PARSE
        gains = loaded["gains"] if loaded["gains"] is not None else gains
        L = loaded["L"] if loaded["L"] is not None else L
        certificate = loaded["certificate"]
    dp = cfg.decomposition()
    F_phi = regularize_bounding(dp.phi.F, eps0=cfg.eps0, policy=cfg.regularization)
    checks = []

    rng = np.random.default_rng(0)
    worst = 0.0
    for dec, box in ((dp.phi, cfg.model.x0_box), (dp.psi, cfg.model.x0_box)):
        for _ in range(500):
            z2 = box.sample(rng)
            z1 = z2 + rng.uniform(0.0, 1.0, size=box.dim) * (box.hi - z2)
            xmid = z2 + rng.uniform(0.0, 1.0, size=box.dim) * (z1 - z2)
            up = dec.eval_pair(z1, z2)
            dn = dec.eval_pair(z2, z1)
            mid = dec.residual(xmid)
            gap = (up - dn) - dec.F @ (z1 - z2)
            worst = max(worst, float(np.max(mid - up)), float(np.max(dn - mid)), float(np.max(gap)))
    checks.append({
        "name": "decomposition_bracketing",
        "passed": worst <= 1e-9,
        "max_violation": worst,
    })

    if L is not None:
        obs = verify_observer_gain(cfg.model, dp, L, F_phi=F_phi)
        checks.append({
            "name": "observer_contraction",
            "passed": bool(obs["iss"]),
            "rho_comparison": obs["rho_comparison"],
            "rho_closed": obs["rho_closed"],
        })

    if gains is not None and L is not None:
        try:
            cs = build_comparison(cfg.model, dp, L, g=gains, eps0=cfg.eps0,
                                  reg_policy=cfg.regularization)
        except AssertionError as e:
            checks.append({"name": "gain_block_identity", "passed": False, "detail": str(e)})
            cs = None
        else:
            checks.append({
                "name": "gain_block_identity",
                "passed": True,
                "rho_A_tilde": float(spectral_radius(cs.A_tilde)),
            })

    cert_failed = False
    if certificate is not None:
        needed = {"P", "mu", "alpha", "epsilon"}
        if gains is None or L is None or not needed <= set(certificate):
            checks.append({
                "name": "certificate",
                "passed": False,
                "detail": "certificate needs gains, observer gain, and P/mu/alpha/epsilon",
            })
            cert_failed = True
        else:
            report = verify_certified_gains(
                cfg.model, dp, L, gains,
                np.asarray(certificate["P"], dtype=float),
                float(certificate["mu"]), float(certificate["alpha"]),
                float(certificate["epsilon"]), F_phi=F_phi,
            )
            checks.append({
                "name": "certificate",
                "passed": bool(report["certified"]),
                "mu": float(certificate["mu"]),
                "min_eig_P": report["min_eig_P"],
                "eig_state": report["eig_state"],
                "eig_atten": report["eig_atten"],
                "rho_A_tilde": report["rho_A_tilde"],
            })
            cert_failed = not report["certified"]

    report = {"model": cfg.name, "checks": checks,
              "all_passed": all(c["passed"] for c in checks)}
    text = _dump_yaml(_plain(report))
    print(text, end="")
    if args.out:
        _dump_yaml(_plain(report), os.path.join(_ensure_out(args.out), "verify.yaml"))
    if cert_failed:
        return EXIT_CERT
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="framersynth",
        description="Interval-observer controller synthesis and simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="print the remainder decomposition and slope data")
    p.add_argument("--model", required=True, help="model config YAML")
    p.add_argument("--out", default=None, help="directory for the report file")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("synthesize", help="run the full gain synthesis pipeline")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default="artifacts")
    p.add_argument("--alpha", type=float, default=None, help="override the config's alpha")
    p.add_argument("--seed", type=int, default=None, help="observer-search seed override")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="Monte-Carlo rollouts with framer tracking")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default="artifacts")
    p.add_argument("--mode", choices=("open", "closed"), default="open")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scheme", choices=("uniform", "vertex", "midpoint"), default="uniform")
    p.add_argument("--gains", default=None, help="gain file from `synthesize`")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="re-check decomposition, observer, and certificate")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--gains", default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
