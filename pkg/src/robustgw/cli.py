"""Command-line entry point.

Subcommands expose the solvers and the sweep harness; results are JSON
(or CSV for sweeps) on stdout or written atomically to ``--out``.  Exit
codes: 0 success, 1 usage or validation error, 2 numerical failure.
"""

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import contamination as _shapes
from .contamination import select_tau
from .errors import NumericalError
from .experiments import (MethodSpec, SweepConfig, run_sweep, runs_csv_text,
                          runs_to_json, summarize, summary_csv_text)
from .gaussian_mixture import mixture_from_json, mixture_gw, mixture_gw_robust
from .gw_solvers import GwConfig, egw_solve
from .lrgw import lrigw_bound, truncate_space
from .mmspace import (RobustPenalty, build_space, distortion_samples,
                      load_distance_csv, load_points_csv, load_weights_csv,
                      save_points_csv, space_from_distances)
from .ot_solvers import (SinkhornConfig, exact_ot, levy_prokhorov_trunc,
                         robust_w_eps, sinkhorn, cross_distances)

SHAPE_MAKERS = {
    "heart": _shapes.heart_shape,
    "circle": _shapes.circle_shape,
    "moons": _shapes.two_moons_shape,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; the CLI contract is 1
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".robustgw-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text, out):
    if out:
        _atomic_write(out, text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _load_space(path, weights_path=None, metric="euclidean"):
    weights = load_weights_csv(weights_path) if weights_path else None
    if metric == "precomputed":
        return space_from_distances(load_distance_csv(path), weights)
    return build_space(load_points_csv(path), weights, metric)


def _add_space_args(p, metric_default="euclidean"):
    p.add_argument("--x", required=True, help="source CSV (points, or distances with --metric precomputed)")
    p.add_argument("--y", required=True, help="target CSV")
    p.add_argument("--x-weights", default=None)
    p.add_argument("--y-weights", default=None)
    p.add_argument("--metric", default=metric_default,
                   choices=["euclidean", "sqeuclidean", "inner", "precomputed"])


def _add_out(p):
    p.add_argument("--out", default=None, help="write result here (atomic) instead of stdout")


def _spaces(args):
    x = _load_space(args.x, args.x_weights, args.metric)
    y = _load_space(args.y, args.y_weights, args.metric)
    return x, y


def _resolve_tau_flag(args, x, y):
    if args.tau is None:
        return None
    if args.tau == "auto":
        rng = np.random.default_rng(args.seed)
        j = distortion_samples(x, y, pairing=None, size=args.pairs, rng=rng)
        return select_tau(j).tau
    return float(args.tau)


def _gw_config(args, penalty):
    return GwConfig(
        penalty=penalty,
        epsilon=args.eps,
        outer_iter=args.outer,
        inner=SinkhornConfig(epsilon=1.0, max_iter=args.inner, tol=args.tol),
        seed=args.seed)


def _penalty_from_args(args, tau):
    kind = args.penalty
    if kind == "squared":
        return RobustPenalty.squared(args.p)
    if kind == "tukey":
        if tau is None:
            raise ValueError("tukey penalty needs --tau (value or 'auto')")
        return RobustPenalty.tukey(args.p, tau)
    if kind == "huber":
        if tau is None:
            raise ValueError("huber penalty needs --tau (value or 'auto')")
        return RobustPenalty.huber(tau)
    if args.lam is None:
        raise ValueError("truncate penalty needs --lam")
    return RobustPenalty.truncate(args.lam)


def _cmd_gw(args):
    x, y = _spaces(args)
    if getattr(args, "lam_metric", None) is not None:
        x = truncate_space(x, args.lam_metric)
        y = truncate_space(y, args.lam_metric)
    tau = _resolve_tau_flag(args, x, y)
    penalty = _penalty_from_args(args, tau)
    cfg = _gw_config(args, penalty)
    res = egw_solve(x, y, cfg)
    payload = res.to_json_dict(method=args.command, penalty=penalty)
    payload["distance"] = 0.5 * max(res.value, 0.0) ** (1.0 / penalty.root)
    payload["epsilon"] = res.epsilon
    if tau is not None:
        payload["tau_used"] = tau
    return json.dumps(payload, indent=2)


def _cmd_lrigw(args):
    x, y = _spaces(args)
    state, f1, total = lrigw_bound(x, y, args.lam, max_iter=args.max_iter,
                                   tol=args.tol)
    return json.dumps({
        "f1": f1, "f2_bound": state.objective, "total": total,
        "m_bound": state.m_bound, "converged": state.converged,
        "iterations": state.iterations,
    }, indent=2)


def _cmd_mixture_gw(args):
    with open(args.a) as fh:
        mix_a = mixture_from_json(fh.read())
    with open(args.b) as fh:
        mix_b = mixture_from_json(fh.read())
    cfg = GwConfig(epsilon=args.eps, outer_iter=args.outer, seed=args.seed)
    if args.robust_eps > 0:
        res = mixture_gw_robust(mix_a, mix_b, args.robust_eps, cfg,
                                sample_size=args.sample_size, seed=args.seed)
    else:
        res = mixture_gw(mix_a, mix_b, cfg)
    payload = res.to_json_dict(method="mixture-gw", penalty=cfg.penalty)
    payload["distance"] = res.value_with_root
    return json.dumps(payload, indent=2)


def _cmd_ot(args):
    x, y = _spaces(args)
    cost = cross_distances(x, y) ** args.p
    if args.solver == "exact":
        coupling, value = exact_ot(cost, x.weights, y.weights)
        payload = {"value": value, "distance": value ** (1.0 / args.p)}
    else:
        if args.eps is None:
            raise ValueError("sinkhorn solver needs --eps")
        res = sinkhorn(cost, x.weights, y.weights,
                       SinkhornConfig(epsilon=args.eps, max_iter=args.inner,
                                      tol=args.tol))
        coupling = res.coupling
        value = float(np.sum(coupling.plan * cost))
        payload = {"value": value, "distance": value ** (1.0 / args.p),
                   "iterations": res.iterations, "violation": res.violation}
    if args.plan_out:
        _atomic_write(args.plan_out, "\n".join(
            ",".join(repr(v) for v in row) for row in coupling.plan) + "\n")
    return json.dumps(payload, indent=2)


def _cmd_robust_w(args):
    x, y = _spaces(args)
    value = robust_w_eps(x, y, p=args.p, eps=args.eps, eps2=args.eps2,
                         dual_check=args.dual_check)
    return json.dumps({"value": value, "p": args.p, "eps": args.eps}, indent=2)


def _cmd_levy(args):
    x, y = _spaces(args)
    value = levy_prokhorov_trunc(x, y, args.lam, tol=args.tol)
    return json.dumps({"value": value, "lam": args.lam}, indent=2)


def _cmd_select_tau(args):
    x, y = _spaces(args)
    rng = np.random.default_rng(args.seed)
    j = distortion_samples(x, y, pairing=None, size=args.pairs, rng=rng)
    return select_tau(j).to_json()


def _cmd_shapes(args):
    maker = SHAPE_MAKERS[args.kind]
    pts = maker(args.n, seed=args.seed, jitter=args.jitter)
    if args.out:
        save_points_csv(pts, args.out)
        return None
    return "\n".join(",".join(repr(v) for v in row) for row in pts)


def _space_from_sweep_entry(entry, metric):
    if "csv" in entry:
        return _load_space(entry["csv"], entry.get("weights"), metric)
    maker = SHAPE_MAKERS[entry.get("shape", "heart")]
    pts = maker(int(entry.get("n", 200)), seed=int(entry.get("seed", 0)),
                jitter=float(entry.get("jitter", 0.01)))
    deg = float(entry.get("rotate_deg", 0.0))
    if deg:
        th = np.deg2rad(deg)
        rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        pts = pts @ rot.T
    return build_space(pts, metric=metric)


def _cmd_sweep(args):
    with open(args.config) as fh:
        conf = json.load(fh)
    methods = tuple(MethodSpec(
        name=m["name"], penalty=m.get("penalty", "squared"),
        p=float(m.get("p", 2.0)), tau_mode=m.get("tau_mode"),
        lam=m.get("lam")) for m in conf["methods"])
    cfg = SweepConfig(
        levels=tuple(conf["levels"]),
        repetitions=args.repetitions or int(conf.get("repetitions", 1)),
        methods=methods,
        adversary=conf.get("adversary", "cauchy"),
        regime=conf.get("regime", "replace_fraction"),
        tau_mode=conf.get("tau_mode", "dynamic"),
        base_seed=args.base_seed if args.base_seed is not None
        else int(conf.get("base_seed", 0)),
        m=int(conf.get("m", 200)), n=int(conf.get("n", 200)),
        metric=conf.get("metric", "sqeuclidean"),
        epsilon=conf.get("epsilon"),
        outer_iter=int(conf.get("outer_iter", 20)),
        inner_iter=int(conf.get("inner_iter", 200)),
        inner_tol=float(conf.get("inner_tol", 1e-9)),
        j_sample=int(conf.get("j_sample", 50_000)),
        full_scale=args.full_scale or bool(conf.get("full_scale", False)))
    source = _space_from_sweep_entry(conf["source"], cfg.metric)
    target = _space_from_sweep_entry(conf["target"], cfg.metric)
    runs = run_sweep(cfg, source, target)
    zero_timing = args.deterministic
    csv_text = runs_csv_text(runs, zero_timing=zero_timing)
    if args.summary_out:
        _atomic_write(args.summary_out, summary_csv_text(summarize(runs)))
    if args.json_out:
        _atomic_write(args.json_out, runs_to_json(runs, zero_timing=zero_timing))
    return csv_text


def build_parser():
    parser = _Parser(prog="robustgw",
                     description="Outlier-robust Gromov-Wasserstein toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def gw_like(name, help_text, penalty_default=None, lam_metric=False):
        p = sub.add_parser(name, help=help_text)
        _add_space_args(p)
        if penalty_default is None:
            p.add_argument("--penalty", default="squared",
                           choices=["squared", "tukey", "huber", "truncate"])
        else:
            p.add_argument("--penalty", default=penalty_default,
                           help=argparse.SUPPRESS)
        p.add_argument("--p", type=float, default=2.0)
        p.add_argument("--tau", default=None,
                       help="threshold value, or 'auto' for median + 3 mad")
        p.add_argument("--lam", type=float, default=None,
                       help="truncation level for the truncate penalty")
        if lam_metric:
            p.add_argument("--lam-metric", dest="lam_metric", type=float,
                           required=True,
                           help="truncate both distance matrices at this level")
        p.add_argument("--eps", type=float, default=None,
                       help="entropic regularization (default: auto)")
        p.add_argument("--outer", type=int, default=50)
        p.add_argument("--inner", type=int, default=200)
        p.add_argument("--tol", type=float, default=1e-9)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--pairs", type=int, default=50_000,
                       help="distortion subsample size for --tau auto")
        _add_out(p)
        p.set_defaults(func=_cmd_gw)
        return p

    gw_like("gw", "penalized entropic Gromov-Wasserstein")
    gw_like("tgw", "Tukey-penalized GW", penalty_default="tukey")
    gw_like("hgw", "Huber-penalized GW", penalty_default="huber")
    gw_like("lrgw", "GW on truncated distance matrices", lam_metric=True)

    p = sub.add_parser("lrigw", help="truncated inner-product GW upper bound")
    _add_space_args(p, metric_default="inner")
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-9)
    _add_out(p)
    p.set_defaults(func=_cmd_lrigw)

    p = sub.add_parser("mixture-gw", help="GW between Gaussian mixtures")
    p.add_argument("--a", required=True, help="mixture JSON")
    p.add_argument("--b", required=True, help="mixture JSON")
    p.add_argument("--robust-eps", type=float, default=0.0)
    p.add_argument("--sample-size", type=int, default=100)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--outer", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=_cmd_mixture_gw)

    p = sub.add_parser("ot", help="optimal transport between two clouds")
    _add_space_args(p)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--solver", default="exact", choices=["exact", "sinkhorn"])
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--inner", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--plan-out", default=None)
    _add_out(p)
    p.set_defaults(func=_cmd_ot)

    p = sub.add_parser("robust-w", help="mass-deletion robust Wasserstein")
    _add_space_args(p)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--eps2", type=float, default=None)
    p.add_argument("--dual-check", action="store_true")
    _add_out(p)
    p.set_defaults(func=_cmd_robust_w)

    p = sub.add_parser("levy", help="truncated Levy-Prokhorov distance")
    _add_space_args(p)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--tol", type=float, default=None)
    _add_out(p)
    p.set_defaults(func=_cmd_levy)

    p = sub.add_parser("select-tau", help="data-driven threshold from distortions")
    _add_space_args(p, metric_default="sqeuclidean")
    p.add_argument("--pairs", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=_cmd_select_tau)

    p = sub.add_parser("sweep", help="contamination sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--repetitions", type=int, default=None)
    p.add_argument("--base-seed", type=int, default=None)
    p.add_argument("--full-scale", action="store_true")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded kernels, timing column zeroed")
    p.add_argument("--summary-out", default=None)
    p.add_argument("--json-out", default=None)
    _add_out(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("shapes", help="generate a synthetic point cloud")
    p.add_argument("--kind", required=True, choices=sorted(SHAPE_MAKERS))
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter", type=float, default=0.01)
    _add_out(p)
    p.set_defaults(func=_cmd_shapes)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if getattr(args, "deterministic", False):
        try:
            import numba

            numba.set_num_threads(1)
        except Exception:
            pass
    try:
        payload = args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if payload is not None:
        _emit(payload, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
