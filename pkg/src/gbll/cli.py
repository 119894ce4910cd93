"""Command-line entry point: ``gbll fit | forecast | backtest | cluster``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from gbll import artifact
from gbll.backtest import mape_by_age, run_backtest, run_clustered_comparison
from gbll.boost import fit_gbll
from gbll.cluster import cluster_features, build_features, lc_kappas
from gbll.config import RunConfig
from gbll.data import (
    WEEKS_PER_YEAR,
    apply_hemisphere_transform,
    back_transform_log,
    format_week_label,
    load_csv,
    parse_week_label,
)
from gbll.diagnostics import negligible_scale, white_noise_counts
from gbll.errors import ConfigError, DataError, GbllError
from gbll.forecast import forecast_ensemble, forecast_fit
from gbll.multipop import fit_hby, fit_li_lee
from gbll.report import write_rows, write_svg, write_table

log = logging.getLogger("gbll")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON run configuration")
    common.add_argument("--data", help="CSV file with weekly rates (overrides [data] path)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="worker processes for backtest folds")
    common.add_argument("--seed", type=int)
    common.add_argument("--model", choices=("ll", "hby", "gbll"))
    common.add_argument("--order", type=int, nargs="+", help="HBY order: R [U]")
    common.add_argument("--max-iter", type=int, help="maximum boosting stages G")
    common.add_argument("--lb-lags", type=int)
    common.add_argument("--lb-alpha", type=float)
    common.add_argument("--clustering", help="comma-separated clustering methods, e.g. 1,2,3")
    common.add_argument("--k", type=int, help="number of clusters (overrides the elbow rule)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gbll", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", parents=[common], help="fit a model and write diagnostics")
    f = sub.add_parser("forecast", parents=[common], help="forecast from a saved model")
    f.add_argument("--artifact", required=True, help="model file written by `fit`")
    f.add_argument("--h", type=int, default=52, help="forecast horizon in weeks")
    f.add_argument("--freeze-kappa", action="store_true", help="hold every time index at its last value")
    b = sub.add_parser("backtest", parents=[common], help="expanding-window MAPE tables")
    b.add_argument("--models", help="comma-separated subset of ll,hby,gbll")
    c = sub.add_parser("cluster", parents=[common], help="cluster countries by mortality dynamics")
    c.add_argument("--method", type=int, choices=(1, 2, 3))
    return p


def _csv_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc


def build_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.data:
        cfg.data_path = args.data
    for attr, flag in (("out", "out"), ("jobs", "jobs"), ("seed", "seed"), ("model", "model"),
                       ("max_iter", "max_iter"), ("lb_lags", "lb_lags"), ("lb_alpha", "lb_alpha"), ("k", "k")):
        v = getattr(args, flag, None)
        if v is not None:
            setattr(cfg, attr, v)
    if args.order:
        if len(args.order) > 2:
            raise ConfigError("--order takes one or two integers")
        cfg.hby_order = (args.order[0], args.order[-1])
    if args.clustering:
        cfg.clustering = _csv_ints(args.clustering)
    if getattr(args, "models", None):
        cfg.models = tuple(m.strip() for m in args.models.split(",") if m.strip())
    if getattr(args, "method", None) is not None:
        cfg.method = args.method
    if args.command in ("fit", "backtest", "cluster") and not cfg.data_path:
        raise ConfigError("no data file given (--data or [data] path)")
    if cfg.data_path and not Path(cfg.data_path).exists():
        raise ConfigError(f"data file {cfg.data_path} does not exist")
    return cfg.validate()


def _load(cfg: RunConfig):
    return load_csv(cfg.data_path, cfg.ingest)


def _meta(tensor, work) -> dict:
    return {
        "countries": list(tensor.countries),
        "age_groups": list(tensor.age_groups),
        "weeks": list(tensor.weeks),
        "hemisphere": list(tensor.hemisphere),
        "reciprocal": [bool(v) for v in work.reciprocal],
        "week_fracs": [float(v).hex() for v in tensor.year_fractions()],
    }


def _component_rows(stages):
    for g, stage in enumerate(stages, start=1):
        parts = [("common", stage.product_fit)] + [(f"country_{j}", rf) for j, rf in enumerate(stage.ratio_fits)]
        for name, lc in parts:
            for x, (a, b) in enumerate(zip(lc.a_x, lc.b_x)):
                yield {"stage": g, "component": name, "kind": "age", "index": x, "a_x": a, "b_x": b, "kappa_t": ""}
            for t, k in enumerate(lc.kappa_t):
                yield {"stage": g, "component": name, "kind": "time", "index": t, "a_x": "", "b_x": "", "kappa_t": k}


def cmd_fit(cfg: RunConfig) -> int:
    tensor = _load(cfg)
    work = apply_hemisphere_transform(tensor)
    stack = work.stacked_log()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    lb = cfg.lb()
    if cfg.model == "gbll":
        model = fit_gbll(stack, cfg.max_iter, lb, cfg.gamma_cap)
        log.info("stopped after %d stages: %s", model.iterations_used, model.stop_reason)
        residuals = model.residuals
        stages = model.stages
    elif cfg.model == "ll":
        model = fit_li_lee(stack)
        residuals, stages = model.residuals, (model,)
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            model = fit_hby(stack, cfg.hby_order)
        for w in caught:
            log.warning("%s", w.message)
            print(f"warning: {w.message}", file=sys.stderr)
        residuals, stages = model.residuals, ()
    artifact.save(out / f"model.{cfg.model}", model, {**_meta(tensor, work), "model": cfg.model})

    report = white_noise_counts(residuals, lb, cfg.model.upper(), negligible_scale(stack))
    write_rows(out / "whitenoise.csv", report.rows(list(tensor.countries), list(tensor.age_groups)))
    write_rows(out / "whitenoise_counts.csv",
               [{"model": report.model_label, "age": a, "count": int(c), "countries": tensor.J}
                for a, c in zip(tensor.age_groups, report.counts)])
    if stages:
        write_rows(out / "components.csv", _component_rows(stages))
    if cfg.model == "gbll":
        write_rows(out / "stages.csv", [
            {"stage": g, "gamma": float(gm), "loss": float(ls), "min_pvalue": float(mp)}
            for g, (gm, ls, mp) in enumerate(zip(model.gammas, model.per_stage_loss, model.min_pvalues), start=1)
        ])
    print(f"white-noise counts ({cfg.model}): " + ", ".join(
        f"{a}={int(c)}" for a, c in zip(tensor.age_groups, report.counts)))
    return 0


def _future_labels(last_label: str, h: int) -> list[str]:
    year, week = parse_week_label(last_label)
    out = []
    for _ in range(h):
        week += 1
        if week > WEEKS_PER_YEAR:
            year, week = year + 1, 1
        out.append(format_week_label(year, week))
    return out


def cmd_forecast(cfg: RunConfig, artifact_path: str, h: int, freeze: bool) -> int:
    if h < 1:
        raise ConfigError("--h must be >= 1")
    kind, model, meta = artifact.load(artifact_path)
    fracs = np.array([float.fromhex(v) for v in meta["week_fracs"]])
    grid = cfg.grid()
    if kind == "gbll":
        fc = forecast_ensemble(model, fracs, h, grid, freeze)
    else:
        fc = forecast_fit(model, fracs, h, grid, freeze)
    rates = np.exp(back_transform_log(fc, meta["reciprocal"]))
    labels = _future_labels(meta["weeks"][-1], h)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = (
        {"country": c, "age": a, "h": u + 1, "week": labels[u], "rate": float(rates[j, u, x])}
        for j, c in enumerate(meta["countries"])
        for x, a in enumerate(meta["age_groups"])
        for u in range(h)
    )
    n = write_rows(out / "forecast.csv", rows, ["country", "age", "h", "week", "rate"])
    print(f"wrote {n} forecast rows to {out / 'forecast.csv'}")
    return 0


def cmd_backtest(cfg: RunConfig) -> int:
    tensor = _load(cfg)
    plan = cfg.plan()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    months = list(range(1, len(plan.H) + 1))
    models = [cfg.build_model(m) for m in cfg.models]
    tidy = []
    if cfg.clustering:
        k = cfg.k if cfg.k is not None else 3
        reference = cfg.build_model("gbll")
        comp = run_clustered_comparison(tensor, cfg.clustering, models, plan, k, reference=reference,
                                        jobs=cfg.jobs, seed=cfg.seed, restarts=cfg.restarts)
        cols, values = comp.layout()
        write_table(out / "table8.csv", "h", months, cols, values * 100)
        write_svg(out / "table8.svg", months, {c: values[:, i] * 100 for i, c in enumerate(cols)},
                  "Mean MAPE with clustering (x100)", "forecast month h", "MAPE x100")
        write_rows(out / "clusters.csv", [
            {"country": c, "method": m, "cluster_id": cid}
            for m, g in comp.groupings.items() for c, cid in g.items()
        ])
        for res in comp.results.values():
            tidy.extend(res.tidy_rows())
        if comp.reference is not None:
            tidy.extend(comp.reference.tidy_rows())
    else:
        results = [run_backtest(tensor, m, plan, None, cfg.jobs) for m in models]
        labels = [r.label for r in results]
        tables = [r.table() for r in results]
        values = np.column_stack([t.mape for t in tables])
        write_table(out / "table2.csv", "h", months, labels, values * 100)
        write_svg(out / "table2.svg", months, {lab: values[:, i] * 100 for i, lab in enumerate(labels)},
                  "Mean MAPE of out-of-sample forecasts (x100)", "forecast month h", "MAPE x100")
        cols, by_age = [], []
        for r in results:
            ba = mape_by_age(r)
            for x, a in enumerate(tensor.age_groups):
                cols.append(f"{a}_{r.label}")
                by_age.append(ba[:, x])
        write_table(out / "table3.csv", "h", months, cols, np.column_stack(by_age) * 100)
        for r in results:
            tidy.extend(r.tidy_rows())
    write_rows(out / "backtest_tidy.csv", tidy, ["model", "method", "fold", "country", "age", "h", "mape"])
    print(f"backtest tables written to {out}")
    return 0


def cmd_cluster(cfg: RunConfig) -> int:
    tensor = _load(cfg)
    feats = build_features(tensor, lc_kappas(tensor), cfg.method)
    res = cluster_features(feats, cfg.k, cfg.k_max, cfg.restarts, cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / "clusters.csv", [
        {"country": c, "method": cfg.method, "cluster_id": cid} for c, cid in res.assignments.items()
    ])
    if res.k_curve:
        ks = sorted(res.k_curve)
        write_rows(out / "inertia.csv", [{"k": k, "inertia": res.k_curve[k]} for k in ks])
        write_svg(out / f"elbow_method{cfg.method}.svg", ks, {"inertia": [res.k_curve[k] for k in ks]},
                  f"Inertia by number of clusters (method {cfg.method})", "K", "inertia")
    if feats.raw is not None or feats.matrix.shape[1] <= 2:
        write_rows(out / "features.csv", [
            {"country": c, **{f"f{i + 1}": float(v) for i, v in enumerate(feats.matrix[j])}}
            for j, c in enumerate(tensor.countries)
        ])
    sizes = np.bincount(res.labels)[1:]
    print(f"method {cfg.method}: {len(sizes)} clusters, sizes {tuple(int(s) for s in sizes)}, inertia {res.inertia:.6g}")
    return 0


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "fit" or args.verbose:
        logging.getLogger("gbll").setLevel(logging.INFO)
    try:
        cfg = build_config(args)
        if args.command == "fit":
            return cmd_fit(cfg)
        if args.command == "forecast":
            return cmd_forecast(cfg, args.artifact, args.h, args.freeze_kappa)
        if args.command == "backtest":
            return cmd_backtest(cfg)
        return cmd_cluster(cfg)
    except GbllError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        kind = DataError if isinstance(exc, OSError) else ConfigError
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return kind.exit_code


if __name__ == "__main__":
    sys.exit(main())
