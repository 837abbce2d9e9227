"""Command-line entry points.

Subcommands cover the whole workflow: synthesize or clean station data,
train and cross-validate, simulate, evaluate, explain (accumulated local
effects), and benchmark.  Errors print a one-line JSON object to stderr and
exit nonzero so scripted callers can parse failures.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import backend as backend_mod
from . import bench as bench_mod
from . import metrics as metrics_mod
from . import pipeline, synthetic
from .constraints import ThresholdSpec
from .errors import ConfigError
from .model_io import load_model, save_model
from .simulation import SiteSeries, simulate_coupled, simulate_depth
from .training import Hyperparams, build_training_set, loo_cv, train


def _read_tables(paths) -> dict[str, pd.DataFrame]:
    return {Path(p).stem: pipeline.read_processed(p) for p in paths}


def _cmd_synth(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = synthetic.generate_corpus(n_sites=args.sites, seed=args.seed,
                                       n_days=args.days)
    for site, df in corpus.items():
        pipeline.write_processed(df, out / f"{site}.csv")
    if args.raw:
        hr, daily, notes = synthetic.make_raw_station(seed=args.seed,
                                                      n_days=args.days)
        hr.to_csv(out / "raw_hourly.csv", index_label="timestamp")
        daily.to_csv(out / "raw_daily.csv", index_label="timestamp")
        (out / "raw_defects.json").write_text(json.dumps(notes, indent=2))
    print(f"wrote {len(corpus)} sites to {out}")


def _cmd_clean(args) -> None:
    hourly = daily = None
    audit: dict = {}
    if args.hourly:
        hourly, rep = pipeline.parse_station_csv(args.hourly)
        audit["parse_hourly"] = rep
    if args.daily:
        daily, rep = pipeline.parse_station_csv(args.daily)
        audit["parse_daily"] = rep
    processed, clean_audit = pipeline.clean_site(args.site, hourly=hourly,
                                                 daily=daily)
    audit.update(clean_audit)
    pipeline.write_processed(processed, args.out)
    if args.audit:
        Path(args.audit).write_text(json.dumps(audit, indent=2, default=str))
    print(f"wrote {len(processed)} daily rows to {args.out}")


def _hyperparams(args) -> Hyperparams:
    return Hyperparams(N=args.N, n=args.n, n1=args.n1, n2=args.n2,
                       batch_size=args.batch_size, epochs=args.epochs,
                       learning_rate=args.lr, seed=args.seed)


def _cmd_train(args) -> None:
    tables = _read_tables(args.data)
    hp = _hyperparams(args)
    eng = pipeline.engineer_features(tables, N=hp.N, target=args.target)
    ts = build_training_set(eng.X, eng.y, eng.site, eng.feature_names)
    threshold = ThresholdSpec(state_index=0 if args.target == "z" else 1)
    result = train(ts, hp, threshold)
    save_model(result.model, args.out)
    if args.history:
        pd.DataFrame({"epoch": np.arange(1, hp.epochs + 1),
                      "loss": result.loss_history}).to_csv(args.history,
                                                           index=False)
    print(f"trained on {ts.X.shape[0]} records, final loss "
          f"{result.loss_history[-1]:.6g}, saved to {args.out}")


def _cmd_cv(args) -> None:
    tables = _read_tables(args.data)
    grid = [Hyperparams(**d) for d in json.loads(Path(args.grid).read_text())]
    table = loo_cv(tables, grid, target=args.target, eval_every=args.eval_every,
                   rank_by=args.rank_by)
    table.to_csv(args.out, index=False)
    best = table.iloc[0]
    print(f"ranked {len(table)} candidates; best: N={best.N} n={best.n} "
          f"n1={best.n1} n2={best.n2} (rmse {best.mean_rmse:.6g})")


def _cmd_simulate(args) -> None:
    model = load_model(args.model)
    df = pipeline.read_processed(args.data)
    series = SiteSeries.from_frame(Path(args.data).stem, df,
                                   model.feature_names)
    if args.swe_model:
        swe_model = load_model(args.swe_model)
        res = simulate_coupled(series, model, swe_model, k_max=args.k_max,
                               backend=args.backend)
    else:
        res = simulate_depth(series, model, k_max=args.k_max,
                             backend=args.backend)
    out = pd.DataFrame(index=df.index)
    out["z_obs"] = series.z_obs
    out["swe_obs"] = series.swe_obs
    if args.swe_model:
        out["z_hat"] = res.state
        out["swe_hat"] = res.swe
    elif model.threshold.state_index == 0:
        out["z_hat"] = res.state
    else:
        out["swe_hat"] = res.state
    step = np.zeros(len(out), dtype=bool)
    step[1:] = res.reset
    out["reset"] = step
    step = np.zeros(len(out), dtype=bool)
    step[1:] = res.clamp
    out["clamp"] = step
    out.to_csv(args.out, index_label="date")
    print(f"simulated {len(out)} rows ({int(res.reset.sum())} resets, "
          f"{res.clamp_count} clamps) to {args.out}")


def _metric_dict(rep) -> dict:
    return dataclasses.asdict(rep)


def _cmd_evaluate(args) -> None:
    result: dict = {"per_site": {}}
    maes = []
    for path in args.pred:
        df = pd.read_csv(path, parse_dates=["date"], index_col="date")
        site = Path(path).stem
        entry = {}
        for col, obs_col in (("z_hat", "z_obs"), ("swe_hat", "swe_obs")):
            if col in df.columns and obs_col in df.columns:
                rep = metrics_mod.compute_metrics(df[obs_col], df[col])
                entry[col] = _metric_dict(rep)
        if "z_hat" in df.columns and "swe_hat" in df.columns and args.density:
            from .simulation import density_report

            dr = density_report(df["z_hat"], df["swe_hat"], df["z_obs"],
                                df["swe_obs"])
            entry["density"] = {
                "false_snowpack": dr.false_snowpack,
                "false_non_snowpack": dr.false_non_snowpack,
                "unphysical": dr.unphysical,
                "metrics": _metric_dict(dr.metrics) if dr.metrics else None,
            }
        result["per_site"][site] = entry
        if "z_hat" in df.columns:
            maes.append(float(np.mean(np.abs(df["z_hat"] - df["z_obs"]))))
    if args.baseline:
        if len(args.baseline) != len(args.pred):
            raise ConfigError("--baseline needs one file per --pred file")
        base_maes = []
        for path in args.baseline:
            df = pd.read_csv(path, parse_dates=["date"], index_col="date")
            base_maes.append(float(np.mean(np.abs(df["z_hat"] - df["z_obs"]))))
        w = metrics_mod.wilcoxon_signed_rank(np.asarray(maes),
                                             np.asarray(base_maes))
        result["wilcoxon_site_mae"] = dataclasses.asdict(w)
    Path(args.out).write_text(json.dumps(result, indent=2))
    print(f"wrote metrics for {len(args.pred)} site(s) to {args.out}")


def _cmd_ale(args) -> None:
    model = load_model(args.model)
    df = pipeline.read_processed(args.data)
    eng = pipeline.engineer_features({Path(args.data).stem: df}, N=1,
                                     target=args.target)
    names = list(model.feature_names)
    if args.feature not in names:
        raise ConfigError(f"feature must be one of {names}")
    fidx = names.index(args.feature)
    predict = model.evaluate_batch if args.constrained else model.predict_raw
    curve = metrics_mod.ale_first_order(predict, eng.X, fidx,
                                        min_bin=args.min_bin)
    pd.DataFrame({"edge": curve.edges, "value": curve.values}).to_csv(
        args.out, index=False)
    print(f"{args.feature}: {curve.counts.size} bins, effect span "
          f"{curve.span:.3e} (written to {args.out})")


def _cmd_bench(args) -> None:
    model = load_model(args.model)
    df = pipeline.read_processed(args.data)
    eng = pipeline.engineer_features({Path(args.data).stem: df}, N=1,
                                     target="z", drop_uninformative=False)
    reps = tuple(int(r) for r in args.reps.split(","))
    report = bench_mod.bench(model, eng.X, replications=reps,
                             grid_trials=args.grid_trials,
                             column_passes=args.column_passes)
    report.to_frame().to_csv(args.out, index=False)
    print(report.table())


def _cmd_backend(args) -> None:
    print(backend_mod.active_backend())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="snowpar",
                                 description="bounded snowpack tendency models")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic station data")
    p.add_argument("--out", required=True)
    p.add_argument("--sites", type=int, default=5)
    p.add_argument("--days", type=int, default=730)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--raw", action="store_true",
                   help="also write a defect-injected raw station")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("clean", help="raw station CSVs to a processed table")
    p.add_argument("--hourly")
    p.add_argument("--daily")
    p.add_argument("--site", default="site")
    p.add_argument("--out", required=True)
    p.add_argument("--audit")
    p.set_defaults(func=_cmd_clean)

    p = sub.add_parser("train", help="fit a model on processed tables")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--target", choices=("z", "swe"), default="z")
    p.add_argument("--out", required=True)
    p.add_argument("--history")
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--n1", type=float, default=2.0)
    p.add_argument("--n2", type=float, default=4.0)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("cv", help="leave-one-site-out grid search")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--grid", required=True,
                   help="JSON list of hyperparameter dicts")
    p.add_argument("--target", choices=("z", "swe"), default="z")
    p.add_argument("--eval-every", type=int, default=10)
    p.add_argument("--rank-by", choices=("rmse", "nse"), default="rmse")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("simulate", help="explicit Euler walk over a site")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--swe-model", help="couple with a water equivalent model")
    p.add_argument("--k-max", type=int, default=5)
    p.add_argument("--backend", choices=("numba", "numpy"))
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("evaluate", help="score simulation outputs")
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--baseline", nargs="*",
                   help="paired predictions for a signed-rank comparison")
    p.add_argument("--density", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ale", help="accumulated local effect of one feature")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--feature", required=True)
    p.add_argument("--target", choices=("z", "swe"), default="z")
    p.add_argument("--min-bin", type=int, default=50)
    p.add_argument("--constrained", action="store_true",
                   help="explain the bounded output instead of the raw net")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ale)

    p = sub.add_parser("bench", help="layer vs branch throughput")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reps", default="14,141")
    p.add_argument("--grid-trials", type=int, default=250)
    p.add_argument("--column-passes", type=int, default=10)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("backend", help="print the active compute backend")
    p.set_defaults(func=_cmd_backend)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
