"""Command-line surface.

Subcommands: sample, graph, eig, filter, forward, scatter, converge, rerun.
Every run writes a manifest next to its primary output recording the fully
resolved configuration and content hashes of its inputs; `mfcn rerun
MANIFEST` replays a run from that file alone.

Exit codes: 0 success, 1 usage error, 2 data/contract error, 3 assertion
failure.
"""

from __future__ import annotations

import argparse
import warnings
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as mio
from . import manifolds as mf
from .convergence import AUTO_BANDWIDTH_C, SweepConfig, run_sweep
from .errors import AssertionFailure, ContractError, UsageError
from .graphs import (KernelSpec, bandwidth_schedule, build_dense_gaussian,
                     build_epsilon, build_knn)
from .network import (network_forward, scattering_feature_names,
                      scattering_moments, scattering_moments_approx)
from .spectral import apply_filter, eig_dense_sym, eig_partial


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _density_from_flag(text: str) -> mf.DensitySpec:
    if text == "uniform":
        return mf.DensitySpec()
    if text.startswith("cosine:"):
        return mf.DensitySpec("cosine_tilt", float(text.split(":", 1)[1]))
    raise UsageError(f"bad density {text!r} (uniform | cosine:a)")


def _build_parser() -> _Parser:
    p = _Parser(prog="mfcn", description=__doc__)
    p.add_argument("--version", action="store_true", help="print version and exit")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("sample", help="draw a point cloud")
    s.add_argument("--manifold", required=True, choices=["circle", "sphere", "torus"])
    s.add_argument("--density", default="uniform")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)

    g = sub.add_parser("graph", help="build a graph Laplacian from a cloud")
    g.add_argument("--cloud", required=True)
    g.add_argument("--family", required=True, choices=["dense", "epsilon", "knn"])
    g.add_argument("--param", default="AUTO", help="eps / k, or AUTO for the schedule")
    g.add_argument("--c", type=float, default=None, help="schedule constant override")
    g.add_argument("--kernel", default="indicator", choices=["indicator", "truncated_linear"])
    g.add_argument("--out", required=True)

    e = sub.add_parser("eig", help="eigendecompose a graph Laplacian")
    e.add_argument("--graph", required=True)
    e.add_argument("--kappa", default="all")
    e.add_argument("--out", required=True, help="output prefix")

    f = sub.add_parser("filter", help="apply a spectral filter to signals")
    f.add_argument("--eig", required=True, help="eigensystem prefix")
    f.add_argument("--spec", required=True, help="e.g. heat:t=1, wavelet:j=2, gcn")
    f.add_argument("--signal", required=True, help="CSV of vertex-value columns")
    f.add_argument("--out", required=True)

    w = sub.add_parser("forward", help="run a network forward pass")
    w.add_argument("--eig", required=True)
    w.add_argument("--net", required=True)
    w.add_argument("--input", required=True)
    w.add_argument("--out", required=True)

    sc = sub.add_parser("scatter", help="scattering-moment features for a cloud")
    sc.add_argument("--input", required=True, help="cloud CSV")
    sc.add_argument("--mode", default="spectral", choices=["spectral", "approx"])
    sc.add_argument("--J", type=int, default=4)
    sc.add_argument("--Q", type=int, default=4)
    sc.add_argument("--signals", default="coords",
                    help="'coords' (ambient coordinates) or a CSV file")
    sc.add_argument("--family", default="epsilon", choices=["dense", "epsilon", "knn"])
    sc.add_argument("--param", default="AUTO")
    sc.add_argument("--c", type=float, default=None)
    sc.add_argument("--kernel", default="indicator", choices=["indicator", "truncated_linear"])
    sc.add_argument("--kappa", type=int, default=20)
    sc.add_argument("--out", required=True)

    cv = sub.add_parser("converge", help="run a convergence sweep")
    cv.add_argument("--config", help="sweep config JSON")
    cv.add_argument("--out", required=True, help="output directory")
    cv.add_argument("--assert", dest="assert_mode", action="store_true")
    cv.add_argument("--emit-plot-data", action="store_true")
    cv.add_argument("--synthetic", default=None, help="test hook, e.g. r=0.5")

    r = sub.add_parser("rerun", help="replay a command from its manifest")
    r.add_argument("manifest")
    return p


def _family_key(flag: str) -> str:
    return {"dense": "dense_gaussian", "epsilon": "epsilon", "knn": "knn"}[flag]


def _resolve_graph_param(family_flag: str, param: str, n: int, d: int,
                         c: float | None, manifold: str):
    if param != "AUTO":
        return (int(param) if family_flag == "knn" else float(param)), None
    key = (manifold, _family_key(family_flag))
    cc = c if c is not None else AUTO_BANDWIDTH_C.get(key, None)
    sched = {"dense": "dense", "epsilon": "epsilon", "knn": "knn"}[family_flag]
    return bandwidth_schedule(sched, n, d, cc), cc


def _cmd_sample(args) -> int:
    spec = mf.ManifoldSpec({"torus": "flat_torus"}.get(args.manifold, args.manifold),
                           _density_from_flag(args.density))
    cloud = mf.sample_points(spec, args.n, args.seed)
    mio.write_cloud_csv(args.out, cloud)
    mio.write_manifest(args.out, "sample",
                       {"manifold": args.manifold, "density": args.density,
                        "n": args.n, "seed": args.seed, "out": args.out},
                       {}, [args.out])
    return 0


def _cmd_graph(args) -> int:
    cloud = mio.read_cloud_csv(args.cloud)
    d = cloud.spec.intrinsic_dim
    param, used_c = _resolve_graph_param(args.family, args.param, cloud.n, d,
                                         args.c, cloud.spec.kind)
    kern = KernelSpec(args.kernel)
    if args.family == "dense":
        L = build_dense_gaussian(cloud, param, d)
    elif args.family == "epsilon":
        L = build_epsilon(cloud, param, d, kern)
    else:
        L = build_knn(cloud, int(param), d, kern)
    if L.disconnected:
        print("warning: graph is disconnected", file=sys.stderr)
    mio.write_graph(args.out, L)
    mio.write_manifest(args.out, "graph",
                       {"cloud": args.cloud, "family": args.family,
                        "param": args.param, "resolved_param": param,
                        "schedule_c": used_c, "kernel": args.kernel,
                        "out": args.out},
                       {"cloud": args.cloud}, [args.out, args.out + ".json"])
    return 0


def _cmd_eig(args) -> int:
    L = mio.read_graph(args.graph)
    if args.kappa == "all":
        es = eig_dense_sym(L)
    else:
        kappa = int(args.kappa)
        es = eig_partial(L, kappa) if L.is_sparse else eig_dense_sym(L).truncate(kappa)
    es.validate(L.matrix)
    mio.write_eigensystem(args.out, es, graph_hash=mio.file_hash(args.graph),
                          residual_max=es.max_residual(L.matrix))
    mio.write_manifest(args.out, "eig",
                       {"graph": args.graph, "kappa": args.kappa, "out": args.out},
                       {"graph": args.graph},
                       [args.out + s for s in (".evals.mat", ".evecs.mat", ".json")])
    return 0


def _cmd_filter(args) -> int:
    es = mio.read_eigensystem(args.eig)
    w = mio.parse_filter_label(args.spec)
    X = mio.read_values_csv(args.signal)
    out = apply_filter(es, w, X)
    mio.write_values_csv(args.out, out)
    mio.write_manifest(args.out, "filter",
                       {"eig": args.eig, "spec": args.spec,
                        "signal": args.signal, "out": args.out,
                        "truncated": not es.complete},
                       {"signal": args.signal}, [args.out])
    return 0


def _cmd_forward(args) -> int:
    es = mio.read_eigensystem(args.eig)
    net = mio.read_network_json(args.net)
    X = mio.read_values_csv(args.input)
    Y = network_forward(net, es, X)
    mio.write_values_csv(args.out, Y)
    mio.write_manifest(args.out, "forward",
                       {"eig": args.eig, "net": args.net, "input": args.input,
                        "out": args.out, "truncated": not es.complete},
                       {"net": args.net, "input": args.input}, [args.out])
    return 0


def _cmd_scatter(args) -> int:
    cloud = mio.read_cloud_csv(args.input)
    d = cloud.spec.intrinsic_dim
    param, used_c = _resolve_graph_param(args.family, args.param, cloud.n, d,
                                         args.c, cloud.spec.kind)
    kern = KernelSpec(args.kernel)
    if args.family == "dense":
        L = build_dense_gaussian(cloud, param, d)
    elif args.family == "epsilon":
        L = build_epsilon(cloud, param, d, kern)
    else:
        L = build_knn(cloud, int(param), d, kern)

    axis_names = {"x": 0, "y": 1, "z": 2, "w": 3}
    axis_names.update({f"x{i}": i for i in range(cloud.points.shape[1])})
    tokens = args.signals.split(",")
    if args.signals == "coords":
        signals = cloud.points
        signames = [f"x{i}" for i in range(signals.shape[1])]
    elif all(t in axis_names for t in tokens):
        idx = [axis_names[t] for t in tokens]
        if max(idx) >= cloud.points.shape[1]:
            raise ContractError(f"axis out of range for ambient dim {cloud.points.shape[1]}")
        signals = cloud.points[:, idx]
        signames = tokens
    else:
        signals = mio.read_values_csv(args.signals)
        signames = [f"s{i}" for i in range(signals.shape[1])]
    scaled = signals / math.sqrt(cloud.n)

    if args.mode == "spectral":
        kappa = min(args.kappa, cloud.n)
        es = eig_partial(L, kappa) if L.is_sparse else eig_dense_sym(L).truncate(kappa)
        with warnings.catch_warnings():
            # truncation to --kappa modes is the configured behavior here
            warnings.simplefilter("ignore")
            feats = [scattering_moments(es, scaled[:, k], args.J, args.Q)
                     for k in range(scaled.shape[1])]
    else:
        A = L.adjacency()
        if L.disconnected:
            print("warning: isolated vertices keep their mass in the lazy walk",
                  file=sys.stderr)
        feats = [scattering_moments_approx(A, scaled[:, k], args.J, args.Q)
                 for k in range(scaled.shape[1])]

    row = np.concatenate(feats)
    names = [f"{s}:{m}" for s in signames
             for m in scattering_feature_names(args.J, args.Q)]
    mio.write_values_csv(args.out, row[None, :], colnames=names)
    mio.write_manifest(args.out, "scatter",
                       {"input": args.input, "mode": args.mode, "J": args.J,
                        "Q": args.Q, "signals": args.signals,
                        "family": args.family, "param": args.param,
                        "resolved_param": param, "schedule_c": used_c,
                        "kernel": args.kernel, "kappa": args.kappa,
                        "out": args.out},
                       {"input": args.input}, [args.out])
    return 0


# sparse-family slope bands are relative to the theory target -1/(d+4):
# measured slope minus target must lie in [-0.40, -0.05] (desk-scale decay
# runs steeper than the asymptotic rate)
DEFAULT_ASSERTIONS = {
    "dense_gaussian": {"alpha_slope": [-0.45, -0.13], "beta_slope_max": 0.0,
                       "beta_r2_min": 0.6, "gamma_sq_slope": [-0.65, -0.35],
                       "bound_dominance": True},
    "epsilon": {"alpha_slope": [-0.60, -0.25], "beta_slope": [-0.60, -0.25],
                "gamma_sq_slope": [-0.65, -0.35], "bound_dominance": True,
                "max_disconnected_frac": 0.1, "disconnected_min_n": 512},
    "knn": {"alpha_slope": [-0.60, -0.25], "beta_slope": [-0.60, -0.25],
            "gamma_sq_slope": [-0.65, -0.35], "bound_dominance": True,
            "max_disconnected_frac": 0.1, "disconnected_min_n": 512},
}


def evaluate_assertions(report, assertions: dict) -> list[str]:
    """Return a list of violated assertion descriptions (empty = all pass)."""
    failures = []

    def slope_of(metric):
        fit = report.fits.get(metric)
        return None if fit is None else fit["slope"]

    for metric in ("alpha", "beta", "gamma_sq"):
        band = assertions.get(f"{metric}_slope")
        if isinstance(band, (list, tuple)):
            s = slope_of(metric)
            if s is None:
                failures.append(f"{metric}: no fitted slope")
            elif not (band[0] <= s <= band[1]):
                failures.append(f"{metric} slope {s:+.4f} outside [{band[0]}, {band[1]}]")
    if "beta_slope_max" in assertions:
        s = slope_of("beta")
        if s is None or s >= assertions["beta_slope_max"]:
            failures.append(f"beta slope {s} not below {assertions['beta_slope_max']}")
    if "beta_r2_min" in assertions:
        fit = report.fits.get("beta")
        if fit is None or fit["r_squared"] < assertions["beta_r2_min"]:
            r2 = None if fit is None else fit["r_squared"]
            failures.append(f"beta R^2 {r2} below {assertions['beta_r2_min']}")
    if "synthetic_slope" in assertions:
        target = assertions["synthetic_slope"]
        for metric in ("alpha", "beta"):
            s = slope_of(metric)
            if s is None or abs(s - target) > 1e-9:
                failures.append(f"synthetic {metric} slope {s} != {target}")
    if assertions.get("bound_dominance"):
        for s in report.samples:
            if s.disconnected:
                continue
            for fe in s.filter_errors:
                if fe["hypotheses_hold"] and fe["error"] > fe["bound"]:
                    failures.append(
                        f"filter error {fe['error']:.3e} exceeds bound "
                        f"{fe['bound']:.3e} at n={s.n} trial={s.trial}")
    if "max_disconnected_frac" in assertions:
        min_n = assertions.get("disconnected_min_n", 0)
        tot = bad = 0
        for s in report.samples:
            if s.n >= min_n:
                tot += 1
                bad += int(s.disconnected)
        if tot and bad / tot >= assertions["max_disconnected_frac"]:
            failures.append(f"disconnected fraction {bad}/{tot} at n >= {min_n}")
    return failures


def _cmd_converge(args) -> int:
    cfg_doc = {}
    if args.config:
        cfg_doc = json.loads(Path(args.config).read_text())
    cfg = SweepConfig.from_dict(cfg_doc)
    if args.synthetic:
        text = args.synthetic
        cfg.synthetic_rate = float(text.split("=", 1)[1] if "=" in text else text)
    report = run_sweep(cfg)
    mio.write_report(args.out, report, emit_plot_data=args.emit_plot_data)
    manifest_cfg = cfg.to_dict()
    if "assertions" in cfg_doc:
        manifest_cfg["assertions"] = cfg_doc["assertions"]
    mio.write_manifest(str(Path(args.out) / "report.json"), "converge",
                       {"config": manifest_cfg, "assert": args.assert_mode,
                        "emit_plot_data": args.emit_plot_data,
                        "synthetic": args.synthetic, "out": args.out},
                       ({"config": args.config} if args.config else {}),
                       [str(Path(args.out) / "report.json"),
                        str(Path(args.out) / "report.csv")])
    for metric, fit in report.fits.items():
        if fit:
            print(f"{metric}: slope {fit['slope']:+.4f} (R^2 {fit['r_squared']:.3f})")
    if args.assert_mode:
        if cfg.synthetic_rate is not None:
            assertions = cfg_doc.get("assertions",
                                     {"synthetic_slope": -cfg.synthetic_rate})
        else:
            assertions = cfg_doc.get("assertions",
                                     DEFAULT_ASSERTIONS.get(cfg.family, {}))
        failures = evaluate_assertions(report, assertions)
        if failures:
            for f in failures:
                print(f"ASSERTION FAILED: {f}", file=sys.stderr)
            raise AssertionFailure(f"{len(failures)} assertion(s) failed")
        print("all assertions passed")
    return 0


def _cmd_rerun(args) -> int:
    man = json.loads(Path(args.manifest).read_text())
    cmd = man["command"]
    cfg = man["resolved_config"]
    argv = {"sample": lambda c: ["sample", "--manifold", c["manifold"],
                                 "--density", c["density"], "--n", str(c["n"]),
                                 "--seed", str(c["seed"]), "--out", c["out"]],
            "graph": lambda c: ["graph", "--cloud", c["cloud"], "--family", c["family"],
                                "--param", str(c["param"]), "--kernel", c["kernel"],
                                "--out", c["out"]] +
                               (["--c", str(c["schedule_c"])]
                                if c.get("schedule_c") is not None else []),
            "eig": lambda c: ["eig", "--graph", c["graph"], "--kappa", str(c["kappa"]),
                              "--out", c["out"]],
            "filter": lambda c: ["filter", "--eig", c["eig"], "--spec", c["spec"],
                                 "--signal", c["signal"], "--out", c["out"]],
            "forward": lambda c: ["forward", "--eig", c["eig"], "--net", c["net"],
                                  "--input", c["input"], "--out", c["out"]],
            "scatter": lambda c: ["scatter", "--input", c["input"], "--mode", c["mode"],
                                  "--J", str(c["J"]), "--Q", str(c["Q"]),
                                  "--signals", c["signals"], "--family", c["family"],
                                  "--param", str(c["param"]), "--kernel", c["kernel"],
                                  "--kappa", str(c["kappa"]), "--out", c["out"]],
            }
    if cmd == "converge":
        import tempfile
        cfgfile = Path(tempfile.mkstemp(suffix=".json")[1])
        cfgfile.write_text(json.dumps(cfg["config"]))
        argv_list = ["converge", "--config", str(cfgfile), "--out", cfg["out"]]
        if cfg.get("assert"):
            argv_list.append("--assert")
        if cfg.get("emit_plot_data"):
            argv_list.append("--emit-plot-data")
        if cfg.get("synthetic"):
            argv_list += ["--synthetic", cfg["synthetic"]]
        return run(argv_list)
    if cmd not in argv:
        raise ContractError(f"manifest for unknown command {cmd!r}")
    return run(argv[cmd](cfg))


_DISPATCH = {
    "sample": _cmd_sample,
    "graph": _cmd_graph,
    "eig": _cmd_eig,
    "filter": _cmd_filter,
    "forward": _cmd_forward,
    "scatter": _cmd_scatter,
    "converge": _cmd_converge,
    "rerun": _cmd_rerun,
}


def run(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.version:
        print(f"mfcn {__version__} (matrix format v{mio.FORMAT_VERSION})")
        return 0
    if not args.command:
        raise UsageError("no command given (see --help)")
    return _DISPATCH[args.command](args)


def main(argv=None) -> int:
    try:
        threads = os.environ.get("MFCN_THREADS")
        if threads:
            import threadpoolctl
            with threadpoolctl.threadpool_limits(limits=int(threads)):
                return run(argv)
        return run(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except AssertionFailure as exc:
        print(f"assertion failure: {exc}", file=sys.stderr)
        return 3
    except (ContractError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
