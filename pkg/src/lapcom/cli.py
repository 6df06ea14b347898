"""Command-line frontend: ``lapcom {simulate,fit,postprocess,ppc,evaluate}``.

Config file schema (JSON, every key optional)::

    {
      "sampler": {"n_iter": int, "burn_in": int, "thin": int, "seed": int,
                  "variant": "lapcom" | "mono-lapcm", "init_method": "kmeans" | "gmm",
                  "tune": bool, "alpha_init": "dyad-mean" | "per-node",
                  "checkpoint_every": int},
      "hyper": {<any Hyperparams field>},
      "n_chains": int
    }

Command-line flags override file values. Hyperparameters not given fall back
to the defaults computed from the number of networks and nodes.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .evaluation.metrics import ari, match_labels, procrustes_correlation
from .evaluation.ppc import run_ppc, write_ppc
from .evaluation.scenarios import PRESETS, ScenarioSpec, generate_scenario, load_truth, preset, save_truth
from .manifest import MANIFEST_NAME, ManifestError, RunManifest, artifact_entry, config_digest, tree_digest
from .model import Hyperparams
from .multiplex import load_multiplex, save_multiplex
from .postprocess import ReconcileError, load_solution, reconcile_chains, save_solution
from .sampler import SamplerConfig, run_multichain
from .traceio import load_trace, save_trace

log = logging.getLogger("lapcom")

SAMPLER_KEYS = ("n_iter", "burn_in", "thin", "seed", "variant", "init_method", "tune",
                "alpha_init", "checkpoint_every")


class UsageError(Exception):
    pass


def _write_manifest(command, out, seed, config, data_digest, artifacts, upstream, inputs, t0):
    man = RunManifest(
        command=command, version=__version__, seed=seed, config=config,
        config_digest=config_digest(config), data_digest=data_digest,
        artifacts={name: artifact_entry(out, rel) for name, rel in artifacts.items()},
        upstream=upstream, inputs={k: str(Path(v).resolve()) for k, v in inputs.items()},
        timing={"started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(t0)),
                "seconds": round(time.time() - t0, 3)},
    )
    man.save(out)
    return man


def _load_manifest(directory, data_dir=None) -> RunManifest:
    try:
        return RunManifest.load(directory, data_dir)
    except ManifestError as err:
        raise UsageError(str(err)) from None


def _data_dir(path: Path) -> Path:
    """Accept either a simulate output directory or a bare data directory."""
    if (path / "data").is_dir():
        return path / "data"
    return path


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    t0 = time.time()
    if (args.preset is None) == (args.spec is None):
        raise UsageError("give exactly one of --preset or --spec")
    if args.preset is not None:
        if args.preset not in PRESETS:
            raise UsageError(f"unknown preset {args.preset!r}; choose from {', '.join(PRESETS)}")
        spec = preset(args.preset, seed=args.seed if args.seed is not None else 0)
    else:
        try:
            spec = ScenarioSpec.from_file(args.spec)
        except (OSError, ValueError, TypeError, KeyError) as err:
            raise UsageError(f"invalid scenario file {args.spec}: {err}") from None
        if args.seed is not None:
            spec = ScenarioSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mx, truth = generate_scenario(spec)
    save_multiplex(mx, out / "data")
    save_truth(truth, out / "truth")
    (out / "scenario.json").write_text(json.dumps(spec.to_dict(), indent=2))
    _write_manifest("simulate", out, spec.seed, spec.to_dict(), tree_digest(out / "data"),
                    {"data": "data", "truth": "truth", "scenario": "scenario.json"}, {}, {}, t0)
    log.info("simulated %s: M=%d N=%d family=%s -> %s", spec.name or "custom", mx.n_networks,
             mx.n_nodes, mx.family, out)
    return 0


# ---------------------------------------------------------------------------
# fit


def _fit_config(args, mx) -> tuple[SamplerConfig, int]:
    file_cfg = {}
    if args.config is not None:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise UsageError(f"cannot read config {args.config}: {err}") from None
    unknown = set(file_cfg) - {"sampler", "hyper", "n_chains"}
    if unknown:
        raise UsageError(f"unknown config sections {sorted(unknown)}")
    sampler = dict(file_cfg.get("sampler", {}))
    bad = set(sampler) - set(SAMPLER_KEYS)
    if bad:
        raise UsageError(f"unknown sampler settings {sorted(bad)}")
    flags = {"n_iter": args.iters, "burn_in": args.burnin, "thin": args.thin, "seed": args.seed,
             "variant": args.variant, "init_method": args.init}
    sampler.update({k: v for k, v in flags.items() if v is not None})
    hyper = dict(file_cfg.get("hyper", {}))
    n_min = args.n_min if args.n_min is not None else hyper.pop("n_min", None)
    hyper.pop("n_min", None)
    try:
        H = Hyperparams.defaults(mx.n_networks, mx.n_nodes, n_min=n_min, **hyper)
        cfg = SamplerConfig(hyper=H, **sampler)
    except (TypeError, ValueError) as err:
        raise UsageError(f"invalid configuration: {err}") from None
    n_chains = args.n_chains if args.n_chains is not None else int(file_cfg.get("n_chains", 1))
    if n_chains < 1:
        raise UsageError("--n-chains must be >= 1")
    return cfg, n_chains


def cmd_fit(args) -> int:
    t0 = time.time()
    src = Path(args.data)
    data_dir = _data_dir(src)
    try:
        mx = load_multiplex(data_dir)
    except Exception as err:  # any parse or validation failure is a usage problem
        raise UsageError(f"invalid data in {data_dir}: {err}") from None
    cfg, n_chains = _fit_config(args, mx)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = replace(cfg, checkpoint_dir=str(out / "checkpoints"))
    upstream = {}
    if (src / MANIFEST_NAME).exists():
        upstream["simulate"] = _load_manifest(src).digest()
    log.info("fitting %d chain(s): M=%d N=%d G_max=%d K_max=%d u_sigma2=%g variant=%s",
             n_chains, mx.n_networks, mx.n_nodes, cfg.hyper.G_max, cfg.hyper.K_max,
             cfg.hyper.u_sigma2, cfg.variant)
    traces = run_multichain(mx, cfg, n_chains=n_chains, jobs=args.jobs)
    artifacts = {}
    for i, tr in enumerate(traces, start=1):
        save_trace(tr, out / f"chain_{i}")
        artifacts[f"chain_{i}"] = f"chain_{i}"
        log.info("chain %d acceptance: %s", i,
                 ", ".join(f"{b}={r:.3f}" for b, r in tr.acceptance_rates.items()))
    config = cfg.to_dict()
    config.pop("checkpoint_dir")
    config["n_chains"] = n_chains
    (out / "config.json").write_text(json.dumps(config, indent=2))
    artifacts["config"] = "config.json"
    _write_manifest("fit", out, cfg.seed, config, tree_digest(data_dir), artifacts, upstream,
                    {"data": data_dir}, t0)
    return 0


# ---------------------------------------------------------------------------
# postprocess


def _chain_dirs(paths) -> list:
    dirs = []
    for p in map(Path, paths):
        if (p / "states").is_dir():
            dirs.append(p)
        else:
            found = sorted((d for d in p.glob("chain_*") if (d / "states").is_dir()),
                           key=lambda d: int(d.name.split("_")[1]))
            if not found:
                raise UsageError(f"no trace bundles under {p}")
            dirs.extend(found)
    return dirs


def _fit_manifest_for(chain_dir: Path):
    for d in (chain_dir, chain_dir.parent):
        if (d / MANIFEST_NAME).exists():
            return d, _load_manifest(d)
    return None, None


def cmd_postprocess(args) -> int:
    t0 = time.time()
    chain_dirs = _chain_dirs(args.traces)
    fits, data_dir = {}, args.data
    for c in chain_dirs:
        d, man = _fit_manifest_for(c)
        if man is not None:
            fits[str(d.resolve())] = man
            data_dir = data_dir or man.inputs.get("data")
    if data_dir is None:
        raise UsageError("cannot locate the data; pass --data")
    mx = load_multiplex(data_dir)
    traces = [load_trace(c) for c in chain_dirs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        best, sol, aris, notes = reconcile_chains(traces, mx, seed=args.seed or 0)
    except ReconcileError as err:
        (out / "discarded_chains.log").write_text(f"{err}\n")
        print(f"postprocess failed: {err}", file=sys.stderr)
        return 3
    names = [f"{c.parent.name}/{c.name}" for c in chain_dirs]
    save_solution(sol, out, {"selected_chain": names[best], "n_chains": len(traces)})
    others = [i for i in range(len(traces)) if i != best and notes[i].startswith("retained")]
    with open(out / "chain_ari.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["selected", "other", "ari"])
        for i, a in zip(others, aris):
            w.writerow([names[best], names[i], repr(float(a))])
    (out / "discarded_chains.log").write_text(
        "".join(f"{names[i]}: {notes[i]}\n" for i in range(len(traces))))
    config = {"seed": args.seed or 0, "chains": names}
    upstream = {"fit": sorted(m.digest() for m in fits.values())}
    _write_manifest("postprocess", out, args.seed or 0, config, tree_digest(data_dir),
                    {"solution": "solution.json", "chain_ari": "chain_ari.csv"}, upstream,
                    {"data": data_dir, "trace": chain_dirs[best]}, t0)
    log.info("selected %s: G_hat=%d", names[best], sol.G_hat_plus)
    return 0


# ---------------------------------------------------------------------------
# ppc


def cmd_ppc(args) -> int:
    t0 = time.time()
    sol_dir = Path(args.solution)
    man = _load_manifest(sol_dir)
    trace_dir = Path(args.trace or man.inputs["trace"])
    data_dir = Path(args.data or man.inputs["data"])
    mx = load_multiplex(data_dir)
    trace = load_trace(trace_dir)
    R = args.R if args.R is not None else min(500, len(trace.samples))
    if R < 1 or R > len(trace.samples):
        raise UsageError(f"R={R} exceeds the trace length {len(trace.samples)}")
    report = run_ppc(trace.samples, mx, R, seed=args.seed or 0)
    out = Path(args.out)
    write_ppc(report, out)
    arts = {"report": "ppc_report.csv", "summary": "ppc_summary.json"}
    if report.ecdf:
        arts["ecdf"] = "ecdf"
    upstream = {"postprocess": man.digest(), "fit": man.upstream.get("fit", [])}
    _write_manifest("ppc", out, args.seed or 0, {"R": R, "seed": args.seed or 0},
                    tree_digest(data_dir), arts, upstream, {"data": data_dir, "trace": trace_dir}, t0)
    return 0


# ---------------------------------------------------------------------------
# evaluate


def evaluate_solution(sol: dict, truth) -> dict:
    """ARI and Procrustes scores of a solution against generating labels (0-based)."""
    C_hat = np.asarray(sol["C_hat"])
    out = {"network_ari": ari(C_hat, truth.C), "G_hat_plus": int(sol["G_hat_plus"]),
           "G_true": len(truth.S), "clusters": []}
    mapping = match_labels(C_hat, truth.C)
    for g in range(int(sol["G_hat_plus"])):
        t = mapping[g]
        row = {"cluster": g + 1, "matched_true_cluster": None, "node_ari": None,
               "procrustes_correlation": None}
        if t < len(truth.S):
            row.update(matched_true_cluster=t + 1,
                       procrustes_correlation=procrustes_correlation(sol["Z_hat"][g], truth.Z[t]))
            if g < len(sol["S_hat"]):  # the mono variant has no node partitions
                row["node_ari"] = ari(sol["S_hat"][g], truth.S[t])
        out["clusters"].append(row)
    return out


def cmd_evaluate(args) -> int:
    t0 = time.time()
    sol_dir = Path(args.solution)
    man = _load_manifest(sol_dir)
    truth_dir = Path(args.truth) if args.truth else None
    if truth_dir is None:
        data_dir = Path(man.inputs.get("data", ""))
        if (data_dir.parent / "truth").is_dir():
            truth_dir = data_dir.parent / "truth"
    if truth_dir is None or not (truth_dir / "truth_C.csv").exists():
        raise UsageError("truth labels not found; pass --truth")
    metrics = evaluate_solution(load_solution(sol_dir), load_truth(truth_dir))
    out = Path(args.out or sol_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2))
    if out.resolve() != sol_dir.resolve():
        _write_manifest("evaluate", out, None, {}, man.data_digest, {"metrics": "metrics.json"},
                        {"postprocess": man.digest()}, {"truth": truth_dir}, t0)
    log.info("network ARI %.4f", metrics["network_ari"])
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lapcom", description="Co-clustering of multiplex networks.")
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic multiplex")
    s.add_argument("--preset")
    s.add_argument("--spec", help="scenario JSON file")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="run the sampler")
    f.add_argument("data", help="data directory (or a simulate output directory)")
    f.add_argument("--config")
    f.add_argument("--out", required=True)
    f.add_argument("--n-chains", type=int)
    f.add_argument("--jobs", type=int, default=1)
    f.add_argument("--seed", type=int)
    f.add_argument("--variant", choices=["lapcom", "mono-lapcm"])
    f.add_argument("--iters", type=int, help="post-burn-in sweeps")
    f.add_argument("--burnin", type=int)
    f.add_argument("--thin", type=int)
    f.add_argument("--init", choices=["kmeans", "gmm"])
    f.add_argument("--n-min", type=int)
    f.set_defaults(func=cmd_fit)

    q = sub.add_parser("postprocess", help="summarize and reconcile chains")
    q.add_argument("traces", nargs="+", help="fit directories or chain directories")
    q.add_argument("--data")
    q.add_argument("--seed", type=int)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_postprocess)

    r = sub.add_parser("ppc", help="posterior predictive checks")
    r.add_argument("solution", help="postprocess output directory")
    r.add_argument("--trace")
    r.add_argument("--data")
    r.add_argument("--R", "-R", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_ppc)

    e = sub.add_parser("evaluate", help="score a solution against generating labels")
    e.add_argument("solution")
    e.add_argument("--truth")
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)
    return p


def _thread_cap() -> int | None:
    raw = os.environ.get("LAPCOM_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"LAPCOM_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("LAPCOM_THREADS must be >= 1")
    return n


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        cap = _thread_cap()
        if cap is not None and hasattr(args, "jobs"):
            args.jobs = min(args.jobs, cap)
        with threadpool_limits(limits=cap):
            return args.func(args)
    except UsageError as err:
        parser.error(str(err))
    return 2


if __name__ == "__main__":
    sys.exit(main())
