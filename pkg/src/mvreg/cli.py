"""Command line front end.

Subcommands wrap the library layers one to one: generate-data (datagen),
solve-ft (lattice solver), train-nn (network trainer), sweep and diagonal
(grid orchestration), bft (ensemble posterior).  Every command writes its
data files plus a manifest JSON into --out.  Exit codes: 0 for success,
including runs flagged as non-converged (a recorded science outcome, not a
process failure), 2 for usage or config errors, 3 for I/O errors.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import SYNTHETIC_NAMES, gen_synthetic, save_csv
from .ensemble import (
    ensemble_posterior,
    predictive_decomposition,
    save_ensemble_csvs,
    save_predictive_csv,
)
from .experiment import ExperimentSpec, ft_bundle, ft_metric_row, nn_metric_row
from .metrics import write_metrics_csv
from .nets import LOSS_KINDS, TrainConfig, save_checkpoint, save_predictions_csv
from .rng import resolve_seed
from .solver import SolverConfig, save_fields_csv, save_trajectory_csv
from .sweep import (
    SweepPlan,
    diagonal_grid,
    logit_grid,
    plan_from_toml,
    plan_hash,
    run_sweep,
    select_diagonal_model,
    write_sweep_manifest,
)

__all__ = ["main", "RunManifest"]


@dataclass
class RunManifest:
    """What a command did: enough to reproduce or audit the run."""

    command: str
    config_hash: str
    seeds: list
    version: str
    outputs: list
    wall_time_s: float


def _hash_config(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _write_manifest(outdir: Path, command: str, config_hash: str, seeds,
                    outputs, t0: float) -> Path:
    manifest = RunManifest(
        command=command,
        config_hash=config_hash,
        seeds=list(seeds),
        version=__version__,
        outputs=[str(Path(p).name) for p in outputs],
        wall_time_s=round(time.perf_counter() - t0, 3),
    )
    path = outdir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _spec_from_args(args) -> ExperimentSpec:
    return ExperimentSpec(
        dataset=args.dataset,
        data_seed=resolve_seed(args.data_seed),
        lattice_size=args.lattice_size,
        train_n=args.train_n,
        test_n=args.test_n,
        heteroskedastic=not args.homoskedastic,
    )


def _add_dataset_flags(p, lattice_size=512):
    p.add_argument("--dataset", default="sine", help="synthetic process name")
    p.add_argument("--data-seed", type=int, default=None,
                   help="data realization seed (default: MVR_SEED or 0)")
    p.add_argument("--lattice-size", type=int, default=lattice_size)
    p.add_argument("--train-n", type=int, default=64)
    p.add_argument("--test-n", type=int, default=256)
    p.add_argument("--homoskedastic", action="store_true",
                   help="constant unit noise instead of the sd curve")


def cmd_generate_data(args) -> int:
    t0 = time.perf_counter()
    outdir = _outdir(args)
    seed = resolve_seed(args.seed)
    ds = gen_synthetic(args.name, n=args.n, seed=seed,
                       heteroskedastic=not args.homoskedastic,
                       noise_scale=args.noise_scale)
    path = outdir / f"{args.name.lower()}.csv"
    save_csv(path, ds)
    cfg_doc = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
    cfg_doc["seed"] = seed
    _write_manifest(outdir, "generate-data", _hash_config(cfg_doc),
                    [seed], [path], t0)
    print(f"wrote {path} ({ds.n} rows)")
    return 0


def cmd_solve_ft(args) -> int:
    t0 = time.perf_counter()
    outdir = _outdir(args)
    spec = _spec_from_args(args)
    seed = resolve_seed(args.seed)
    overrides = {} if args.epochs is None else {"epochs": args.epochs}
    base = SolverConfig.paper_preset if args.preset == "paper" else SolverConfig.desk_preset
    cfg = base(rho=args.rho, gamma=args.gamma, seed=seed, **overrides)
    row, res = ft_metric_row(spec, cfg)

    lat, _, _ = ft_bundle(spec)
    fields_path = outdir / "fields.csv"
    save_fields_csv(fields_path, lat, res.fields)
    traj_path = outdir / "trajectory.csv"
    save_trajectory_csv(traj_path, res)
    metrics_path = outdir / "metrics.csv"
    write_metrics_csv(metrics_path, [row])
    _write_manifest(outdir, "solve-ft",
                    _hash_config({"spec": asdict(spec), "cfg": asdict(cfg)}),
                    [seed], [fields_path, traj_path, metrics_path], t0)
    status = "converged" if res.converged else f"flagged {res.flag}"
    print(f"solve-ft rho={cfg.rho} gamma={cfg.gamma}: {status}, "
          f"test mu_mse={row.mu_mse:.6g}")
    return 0


def cmd_train_nn(args) -> int:
    t0 = time.perf_counter()
    outdir = _outdir(args)
    spec = _spec_from_args(args)
    seed = resolve_seed(args.seed)
    overrides = {"loss": args.loss, "rho": args.rho, "gamma": args.gamma,
                 "alpha": args.alpha, "beta": args.beta,
                 "beta_exp": args.beta_exp, "seed": seed}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.hidden is not None:
        overrides["hidden"] = tuple(int(h) for h in args.hidden.split(","))
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    base = TrainConfig.paper_preset if args.preset == "paper" else TrainConfig.desk_preset
    cfg = base(**overrides)
    row, res = nn_metric_row(spec, cfg)

    outputs = []
    ckpt_path = outdir / "checkpoint.npz"
    save_checkpoint(ckpt_path, res.mean_net, res.prec_net)
    outputs.append(ckpt_path)
    if res.converged:
        from .experiment import nn_bundle
        from .nets import predict

        _, test = nn_bundle(spec)
        mu, sd = predict(res.mean_net, res.prec_net, test.x)
        pred_path = outdir / "predictions.csv"
        save_predictions_csv(pred_path, test.x, mu, sd)
        outputs.append(pred_path)
    loss_path = outdir / "loss.csv"
    with open(loss_path, "w", newline="") as fh:
        fh.write("epoch,loss,lr\n")
        for i in range(res.epochs_run):
            fh.write(f"{i},{res.loss[i]!r},{res.lr[i]!r}\n")
    outputs.append(loss_path)
    metrics_path = outdir / "metrics.csv"
    write_metrics_csv(metrics_path, [row])
    outputs.append(metrics_path)
    _write_manifest(outdir, "train-nn",
                    _hash_config({"spec": asdict(spec), "cfg": asdict(cfg)}),
                    [seed], outputs, t0)
    status = "converged" if res.converged else f"flagged {res.flag}"
    print(f"train-nn loss={cfg.loss}: {status}, test mu_mse={row.mu_mse:.6g}")
    return 0


def _sweep_common(args, plan: SweepPlan, command: str, plan_file=None) -> tuple:
    outdir = _outdir(args)
    out_csv = outdir / "metrics.csv"
    if out_csv.exists() and not args.resume:
        raise ValueError(f"{out_csv} already exists; pass --resume to continue it")
    jobs = args.jobs if args.jobs else (os.cpu_count() or 1)
    rows = run_sweep(plan, out_csv, jobs=jobs, log=lambda msg: print(msg, flush=True))
    write_sweep_manifest(outdir / "sweep_manifest.json", plan, rows)
    if plan_file is not None:
        config_hash = hashlib.sha256(Path(plan_file).read_bytes()).hexdigest()
    else:
        config_hash = plan_hash(plan)
    return outdir, out_csv, rows, config_hash


def cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    if args.plan is not None:
        if args.grid is not None:
            raise ValueError("pass either --plan or --grid, not both")
        plan = plan_from_toml(args.plan)
    else:
        n = args.grid if args.grid is not None else 8
        grid = tuple(logit_grid(n, args.grid_lo, args.grid_hi))
        overrides = {} if args.epochs is None else {"epochs": args.epochs}
        plan = SweepPlan(
            backend=args.backend, spec=_spec_from_args(args),
            rho=grid, gamma=grid, seeds=tuple(range(args.seeds)),
            preset=args.preset, overrides=tuple(sorted(overrides.items())),
        )
    outdir, out_csv, rows, config_hash = _sweep_common(args, plan, "sweep", args.plan)
    _write_manifest(outdir, "sweep", config_hash, list(plan.seeds),
                    [out_csv, outdir / "sweep_manifest.json"], t0)
    flagged = sum(not r.converged for r in rows)
    print(f"sweep complete: {len(rows)} rows ({flagged} flagged) -> {out_csv}")
    return 0


def cmd_diagonal(args) -> int:
    t0 = time.perf_counter()
    rho = tuple(float(v) for v in diagonal_grid(args.n))
    overrides = {} if args.epochs is None else {"epochs": args.epochs}
    plan = SweepPlan(
        backend=args.backend, spec=_spec_from_args(args),
        rho=rho, gamma=None, seeds=tuple(range(args.seeds)),
        preset=args.preset, overrides=tuple(sorted(overrides.items())),
    )
    outdir, out_csv, rows, config_hash = _sweep_common(args, plan, "diagonal")
    outputs = [out_csv, outdir / "sweep_manifest.json"]
    if args.select:
        rho_star, gamma_star = select_diagonal_model(rows)
        sel_path = outdir / "selection.json"
        with open(sel_path, "w") as fh:
            json.dump({"rho_star": rho_star, "gamma_star": gamma_star}, fh, indent=2)
            fh.write("\n")
        outputs.append(sel_path)
        print(f"rho_star={rho_star!r} gamma_star={gamma_star!r}")
    _write_manifest(outdir, "diagonal", config_hash, list(plan.seeds), outputs, t0)
    print(f"diagonal complete: {len(rows)} rows -> {out_csv}")
    return 0


def cmd_bft(args) -> int:
    t0 = time.perf_counter()
    outdir = _outdir(args)
    spec = _spec_from_args(args)
    overrides = {} if args.epochs is None else {"epochs": args.epochs}
    base = SolverConfig.paper_preset if args.preset == "paper" else SolverConfig.desk_preset
    cfg = base(rho=args.rho, gamma=args.gamma, seed=0, **overrides)
    lat, train, _ = ft_bundle(spec)
    seeds = tuple(range(args.members))
    ens = ensemble_posterior(cfg, train.y, lat, seeds=seeds)
    outputs = list(save_ensemble_csvs(outdir, ens))
    if any(ens.converged):
        summary = predictive_decomposition(ens)
        spath = outdir / "summary.csv"
        save_predictive_csv(spath, lat, summary)
        outputs.append(spath)
        print(f"bft: {sum(ens.converged)}/{len(seeds)} members converged "
              f"-> {spath}")
    else:
        print("bft: no member converged; wrote member fields only")
    _write_manifest(outdir, "bft",
                    _hash_config({"spec": asdict(spec), "cfg": asdict(cfg),
                                  "members": args.members}),
                    list(seeds), outputs, t0)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvreg",
        description="Heteroskedastic mean-variance regression on a lattice "
                    "or with small networks; sweeps, diagonal search, and "
                    "ensemble uncertainty from one CLI.",
    )
    parser.add_argument("--version", action="version", version=f"mvreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="write a synthetic dataset CSV")
    p.add_argument("--name", default="sine", help=f"one of {SYNTHETIC_NAMES}")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.add_argument("--homoskedastic", action="store_true")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("solve-ft", help="fit lattice fields at one (rho, gamma)")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--preset", choices=["desk", "paper"], default="desk")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="init seed")
    _add_dataset_flags(p)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_solve_ft)

    p = sub.add_parser("train-nn", help="train the network pair at one cell")
    p.add_argument("--loss", choices=list(LOSS_KINDS), default="rho-gamma")
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--beta-exp", type=float, default=0.5,
                   help="beta-nll scale exponent")
    p.add_argument("--preset", choices=["desk", "paper"], default="desk")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--hidden", default=None, help="comma list, e.g. 64,64,64")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="init/shuffle seed")
    _add_dataset_flags(p)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_train_nn)

    p = sub.add_parser("sweep", help="run a (rho, gamma) grid of fits")
    p.add_argument("--plan", default=None, help="TOML plan file")
    p.add_argument("--backend", choices=["ft", "nn"], default="ft")
    p.add_argument("--grid", type=int, default=None,
                   help="grid side length (logit-spaced)")
    p.add_argument("--grid-lo", type=float, default=1e-10)
    p.add_argument("--grid-hi", type=float, default=1.0 - 1e-5)
    p.add_argument("--seeds", type=int, default=6)
    p.add_argument("--preset", choices=["desk", "paper"], default="desk")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel workers (default: all cores)")
    p.add_argument("--resume", action="store_true",
                   help="continue an existing metrics.csv")
    _add_dataset_flags(p)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("diagonal", help="sweep the rho = 1-gamma diagonal")
    p.add_argument("--backend", choices=["ft", "nn"], default="ft")
    p.add_argument("--n", type=int, default=100, help="diagonal points")
    p.add_argument("--seeds", type=int, default=6)
    p.add_argument("--preset", choices=["desk", "paper"], default="desk")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--select", action="store_true",
                   help="print and record the logit-midpoint model")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--resume", action="store_true")
    _add_dataset_flags(p)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_diagonal)

    p = sub.add_parser("bft", help="ensemble posterior and uncertainty split")
    p.add_argument("--members", type=int, default=6)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--preset", choices=["desk", "paper"], default="desk")
    p.add_argument("--epochs", type=int, default=None)
    _add_dataset_flags(p)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_bft)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
