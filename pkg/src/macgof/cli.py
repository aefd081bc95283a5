"""Batch command-line interface.

Subcommands: ``gof`` (assess a model on a dataset), ``two-sample`` (MAC
permutation test between two files), ``null-dist`` (precompute and cache a
null distribution), ``power-sim`` (rejection-rate studies), ``replicate``
(canned synthetic studies and real-data recipes).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from macgof import __version__
from macgof.errors import DataError, NumericalError
from macgof.experiments import example_replication, power_curve, write_power_csv
from macgof.gof import GofConfig, GofReport, gof_test, gof_test_external
from macgof.mac import MacConfig, mac, select_locations
from macgof.models import (
    FeatureMap,
    ModelSpec,
    fit_model,
    lag_embed,
    sunspot_ar2_lognormal_model,
    sunspot_ar9_model,
    sunspot_tar_model,
)
from macgof.nulldist import NullCache, cached_or_simulated, default_cache_dir, null_seed_for
from macgof.sample import PairedSample

REPORT_VERSION = 1

#: Cell values treated as missing in CSV input ('?' covers UCI-style files).
MISSING_TOKENS = {"", "na", "nan", "null", "n/a", "?"}

_SUNSPOT_MODELS = {
    "ar9": sunspot_ar9_model,
    "tar": sunspot_tar_model,
    "ar2ln": sunspot_ar2_lognormal_model,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


# --------------------------------------------------------------------- #
# CSV ingestion
# --------------------------------------------------------------------- #


def ingest_csv(path, response: str, covariates: list[str],
               categoricals: dict[str, str | None] | None = None):
    """Load a headed CSV into a paired sample.

    Rows with missing values in any used column are dropped (and listed in
    the returned info).  Columns named in ``categoricals`` are expanded to
    indicator variables with the reference level dropped (given level, or
    the first in sorted order).
    """
    categoricals = categoricals or {}
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"input file not found: {path}")
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file")
        col_index = {name: i for i, name in enumerate(header)}
        used = [response] + list(covariates)
        for name in used:
            if name not in col_index:
                raise DataError(f"{path}: column {name!r} not in header {header}")
        for name in categoricals:
            if name not in covariates:
                raise DataError(f"categorical column {name!r} is not among the covariates")

        kept: list[tuple[int, dict]] = []
        dropped: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            values = {}
            missing = False
            for name in used:
                i = col_index[name]
                raw = row[i].strip() if i < len(row) else ""
                if raw.lower() in MISSING_TOKENS:
                    missing = True
                    break
                values[name] = raw
            if missing:
                dropped.append(lineno)
            else:
                kept.append((lineno, values))
    if not kept:
        raise DataError(f"{path}: no usable rows after dropping missing values")

    def as_float(name: str, raw: str, lineno: int) -> float:
        try:
            return float(raw)
        except ValueError:
            raise DataError(
                f"{path}: non-numeric value {raw!r} in column {name!r} at line {lineno}"
            )

    y = np.array([as_float(response, vals[response], ln) for ln, vals in kept])

    columns: list[str] = []
    blocks: list[np.ndarray] = []
    for name in covariates:
        if name in categoricals:
            raw_values = [vals[name] for _, vals in kept]
            levels = sorted(set(raw_values))
            reference = categoricals[name]
            if reference is None:
                reference = levels[0]
            elif reference not in levels:
                raise DataError(f"reference level {reference!r} not found in column {name!r}")
            for level in levels:
                if level == reference:
                    continue
                columns.append(f"{name}={level}")
                blocks.append(np.array([1.0 if v == level else 0.0 for v in raw_values]))
        else:
            columns.append(name)
            blocks.append(np.array([as_float(name, vals[name], ln) for ln, vals in kept]))
    xs = np.column_stack(blocks)

    info = {
        "path": str(path),
        "n": len(kept),
        "dropped_rows": dropped,
        "columns": columns,
        "response": response,
    }
    return PairedSample(xs, y), info


def _read_means(path) -> np.ndarray:
    """Mean vector file: one number per line, or a single-column CSV with header."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"means file not found: {path}")
    values: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            cell = row[0].strip()
            try:
                values.append(float(cell))
            except ValueError:
                if lineno == 1:  # header line
                    continue
                raise DataError(f"{path}: non-numeric mean {cell!r} at line {lineno}")
    if not values:
        raise DataError(f"{path}: no mean values found")
    return np.asarray(values)


# --------------------------------------------------------------------- #
# Shared option plumbing
# --------------------------------------------------------------------- #


def _add_data_args(p, single=True):
    if single:
        p.add_argument("--input", required=True, help="input CSV (header row required)")
    p.add_argument("--response", help="response column name")
    p.add_argument("--covariates", help="comma-separated covariate column names")
    p.add_argument("--categorical", action="append", default=[],
                   help="covariate to dummy-code, as NAME or NAME=REFLEVEL (repeatable)")


def _add_mac_args(p):
    p.add_argument("--k", type=int, help="number of anchor locations (default min(n, 100))")
    p.add_argument("--strategy", choices=("random", "cluster", "all"), default="random")
    p.add_argument("--pair-ordering", choices=("upper", "both"), default="upper")


def _add_gof_args(p):
    p.add_argument("--b", type=int, help="bootstrap replicates (default 200; 1000 with --full)")
    p.add_argument("--m", type=int, help="null simulations (default 199; 999 with --full)")
    p.add_argument("--bootstrap", choices=("residual", "parametric"),
                   help="bootstrap kind (default: residual for gaussian, else parametric)")
    p.add_argument("--refit-null", action=argparse.BooleanOptionalAction, default=True,
                   help="refit the model inside each null replicate "
                        "(default on: keeps p-values calibrated)")
    p.add_argument("--redraw-locations", action="store_true",
                   help="redraw locations for every bootstrap replicate")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--full", action="store_true", help="full-scale defaults (B=1000, M=999)")
    p.add_argument("--cache-dir", help="null-distribution cache directory "
                                       "(default $MACGOF_CACHE_DIR or ~/.cache/macgof)")
    p.add_argument("--no-cache", action="store_true", help="disable the null cache")


def _parse_categoricals(args) -> dict[str, str | None]:
    out: dict[str, str | None] = {}
    for item in args.categorical:
        name, _, ref = item.partition("=")
        out[name.strip()] = ref if ref else None
    return out


def _parse_feature_map(text: str | None) -> FeatureMap:
    if not text or text == "linear":
        return FeatureMap()
    kind, _, arg = text.partition(":")
    if kind == "poly":
        return FeatureMap("polynomial", degree=int(arg or 2))
    if kind == "interact":
        return FeatureMap("interactions", degree=int(arg or 2))
    raise _UsageError(f"unknown feature map {text!r} (use linear, poly:N, interact:N)")


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = int(np.random.SeedSequence().generate_state(1, np.uint64)[0] >> 1)
    print(f"macgof: no --seed given; using seed {seed}", file=sys.stderr)
    return seed


def _resolve_bm(args) -> tuple[int, int]:
    b = args.b if args.b is not None else (1000 if args.full else 200)
    m = args.m if args.m is not None else (999 if args.full else 199)
    return b, m


def _cache_from(args) -> NullCache | None:
    if getattr(args, "no_cache", False):
        return None
    directory = args.cache_dir if getattr(args, "cache_dir", None) else default_cache_dir()
    return NullCache(directory)


def _require_columns(args):
    if not args.response or not args.covariates:
        raise _UsageError("--response and --covariates are required")
    return args.response, [c.strip() for c in args.covariates.split(",") if c.strip()]


def _gof_config(args, seed: int) -> GofConfig:
    b, m = _resolve_bm(args)
    return GofConfig(
        b=b, m=m,
        mac=MacConfig(k=args.k, strategy=args.strategy, pair_ordering=args.pair_ordering),
        bootstrap_kind=args.bootstrap,
        alpha=args.alpha,
        refit_null=args.refit_null,
        redraw_locations=args.redraw_locations,
        seed=seed,
    )


# --------------------------------------------------------------------- #
# Report output
# --------------------------------------------------------------------- #


def _write_json(path, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _write_series_csv(path, name: str, values) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([name])
        for v in values:
            writer.writerow([repr(float(v))])


def _emit_gof_report(args, report: GofReport, data_info: dict, kind: str) -> None:
    out = Path(args.out)
    payload = {
        "version": REPORT_VERSION,
        "package_version": __version__,
        "kind": kind,
        "input": data_info,
        **report.to_dict(),
    }
    _write_json(out, payload)
    stem = out.with_suffix("")
    _write_series_csv(f"{stem}_bootstrap.csv", "bootstrap_mac", report.bootstrap_stats)
    _write_series_csv(f"{stem}_null.csv", "null_draw", report.null_draws)
    print(f"discrepancy={report.discrepancy:.6g} p_value={report.p_value:.6g} "
          f"(report: {out})")


def _warn_dropped(info: dict) -> None:
    if info["dropped_rows"]:
        rows = ", ".join(str(r) for r in info["dropped_rows"][:20])
        more = "" if len(info["dropped_rows"]) <= 20 else ", ..."
        print(f"macgof: dropped {len(info['dropped_rows'])} rows with missing values "
              f"(lines {rows}{more})", file=sys.stderr)


# --------------------------------------------------------------------- #
# Subcommand handlers
# --------------------------------------------------------------------- #


def cmd_gof(args) -> int:
    response, covariates = _require_columns(args)
    data, info = ingest_csv(args.input, response, covariates, _parse_categoricals(args))
    _warn_dropped(info)
    seed = _resolve_seed(args)
    cfg = _gof_config(args, seed)
    cache = _cache_from(args)

    if args.external_means:
        means = _read_means(args.external_means)
        noise, _, sigma = (args.noise or "gaussian").partition(":")
        sigma2 = float(sigma) if sigma else None
        report = gof_test_external(data, means, noise, cfg, sigma2=sigma2, cache=cache)
    else:
        spec = ModelSpec(args.family, _parse_feature_map(args.feature_map))
        report = gof_test(data, spec, cfg, cache=cache)
    _emit_gof_report(args, report, info, "gof")
    return 0


def cmd_two_sample(args) -> int:
    response, covariates = _require_columns(args)
    cats = _parse_categoricals(args)
    sample_a, info_a = ingest_csv(args.input_a, response, covariates, cats)
    sample_b, info_b = ingest_csv(args.input_b, response, covariates, cats)
    _warn_dropped(info_a)
    _warn_dropped(info_b)
    if sample_a.n != sample_b.n:
        print(f"macgof: samples have different sizes ({sample_a.n} vs {sample_b.n}); "
              "the permutation p-value remains valid", file=sys.stderr)
    seed = _resolve_seed(args)
    root = np.random.SeedSequence(seed)
    ss_loc, ss_perm = root.spawn(2)

    cfg = MacConfig(k=args.k, strategy=args.strategy, pair_ordering=args.pair_ordering)
    locs = select_locations(sample_a, sample_b, cfg, rng=np.random.default_rng(ss_loc))
    observed = mac(sample_a, sample_b, locs, cfg).value

    pooled = sample_a.pooled_rows(sample_b)
    n_a, p = sample_a.n, sample_a.p
    rng = np.random.default_rng(ss_perm)
    perm_values = np.empty(args.permutations)
    for i in range(args.permutations):
        idx = rng.permutation(pooled.shape[0])
        rows_a, rows_b = pooled[idx[:n_a]], pooled[idx[n_a:]]
        perm_a = PairedSample(rows_a[:, :p], rows_a[:, p:])
        perm_b = PairedSample(rows_b[:, :p], rows_b[:, p:])
        perm_values[i] = mac(perm_a, perm_b, locs, cfg).value
    pval = (1 + int(np.sum(perm_values >= observed))) / (args.permutations + 1)

    payload = {
        "version": REPORT_VERSION,
        "package_version": __version__,
        "kind": "two-sample",
        "input": {"a": info_a, "b": info_b},
        "results": {"mac": float(observed), "p_value": pval,
                    "permutations": args.permutations},
        "config": {"k": cfg.resolve_k(min(sample_a.n, sample_b.n)),
                   "strategy": cfg.strategy, "pair_ordering": cfg.pair_ordering,
                   "seed": seed},
    }
    _write_json(args.out, payload)
    print(f"mac={observed:.6g} p_value={pval:.6g} (report: {args.out})")
    return 0


def cmd_null_dist(args) -> int:
    response, covariates = _require_columns(args)
    data, info = ingest_csv(args.input, response, covariates, _parse_categoricals(args))
    _warn_dropped(info)
    seed = _resolve_seed(args)
    cfg = _gof_config(args, seed)
    spec = ModelSpec(args.family, _parse_feature_map(args.feature_map))
    fit = fit_model(spec, data.xs, data.ys[:, 0])
    kind = args.bootstrap or ("residual" if fit.family == "gaussian" else "parametric")
    cache = _cache_from(args)

    null = cached_or_simulated(
        cache, fit, data.xs, kind,
        k=cfg.mac.resolve_k(data.n), strategy=cfg.mac.strategy,
        pair_ordering=cfg.mac.pair_ordering,
        b_inner=cfg.b_inner if cfg.b_inner is not None else cfg.b,
        m=cfg.m, seed=null_seed_for(seed), refit=cfg.refit_null,
    )
    location = cache.path_for(null.meta) if cache is not None else "(not cached)"
    payload = {
        "version": REPORT_VERSION,
        "package_version": __version__,
        "kind": "null-dist",
        "input": info,
        "meta": null.meta,
        "summary": null.summary(),
        "cache_file": str(location),
    }
    if args.out:
        _write_json(args.out, payload)
    print(f"null distribution ready: m={null.m} "
          f"q95={null.quantile(0.95):.6g} cache={location}")
    return 0


def cmd_power_sim(args) -> int:
    seed = _resolve_seed(args)
    reps = args.reps if args.reps is not None else (1000 if args.full else 500)
    cs = [float(c) for c in args.c.split(",")]
    curve = power_curve(args.example, args.n, cs, reps=reps, alpha=args.alpha,
                        k=args.k, seed=seed, workers=args.workers)
    write_power_csv(args.out, [curve])
    pairs = " ".join(f"c={c:g}:{r:.3f}" for c, r in zip(curve.cs, curve.rates))
    print(f"example {args.example} n={args.n} reps={reps}: {pairs} (csv: {args.out})")
    return 0


def _replicate_synthetic(args, seed: int) -> int:
    b, m = _resolve_bm(args)
    result = example_replication(args.example, reps=args.reps, n=200, b=b, m=m,
                                 k=args.k, alpha=args.alpha, seed=seed,
                                 workers=args.workers)
    payload = {
        "version": REPORT_VERSION,
        "package_version": __version__,
        "kind": "replicate",
        "example": args.example,
        "results": {
            "rejection_rate": result["rejection_rate"],
            "p_values": [float(p) for p in result["p_values"]],
            "reps": result["reps"],
            "alpha": result["alpha"],
        },
        "config": {"b": b, "m": m, "k": args.k, "seed": seed},
    }
    _write_json(args.out, payload)
    print(f"example {args.example}: rejection rate {result['rejection_rate']:.3f} "
          f"over {args.reps} runs (report: {args.out})")
    return 0


AUTOMPG_COVARIATES = ["cylinders", "displacement", "horsepower", "weight",
                      "acceleration", "model_year"]


def _replicate_autompg(args, seed: int) -> int:
    """Linear-model assessment of the fuel-economy dataset.

    Expects the usual column names (mpg, cylinders, displacement,
    horsepower, weight, acceleration, model_year, origin); origin is
    dummy-coded with level 3 as the reference.
    """
    if not args.input:
        raise _UsageError("--example 7 needs --input pointing at the dataset CSV")
    data, info = ingest_csv(args.input, "mpg", AUTOMPG_COVARIATES + ["origin"],
                            {"origin": "3"})
    _warn_dropped(info)
    cfg = _gof_config(args, seed)
    report = gof_test(data, ModelSpec("gaussian"), cfg, cache=_cache_from(args))
    _emit_gof_report(args, report, info, "replicate-7")
    return 0


def _replicate_sunspots(args, seed: int) -> int:
    """Fixed-coefficient time-series assessment of an annual series."""
    if not args.input:
        raise _UsageError("--example 9 needs --input pointing at the series CSV")
    if not args.model:
        raise _UsageError("--example 9 needs --model (ar9, tar, or ar2ln)")
    series = _read_means(args.input)  # same format: one value per line
    spec = _SUNSPOT_MODELS[args.model]()
    data = lag_embed(series, spec.order)
    cfg = _gof_config(args, seed)
    report = gof_test(data, ModelSpec("fixed-ar", ar=spec), cfg, cache=_cache_from(args))
    info = {"path": str(args.input), "n": data.n, "model": args.model,
            "lag_order": spec.order}
    _emit_gof_report(args, report, info, "replicate-9")
    return 0


def cmd_replicate(args) -> int:
    seed = _resolve_seed(args)
    if args.example in ("5a", "5b", "6"):
        return _replicate_synthetic(args, seed)
    if args.example == "7":
        return _replicate_autompg(args, seed)
    if args.example == "8":
        raise _UsageError(
            "example 8 is a bring-your-own-model comparison: fit the count models "
            "externally and run `macgof gof --family poisson ...` or "
            "`macgof gof --external-means MEANS --noise poisson ...` on the dataset"
        )
    return _replicate_sunspots(args, seed)


# --------------------------------------------------------------------- #
# Parser
# --------------------------------------------------------------------- #


def build_parser() -> _Parser:
    parser = _Parser(prog="macgof",
                     description="Goodness-of-fit testing via bootstrap two-sample comparison")
    parser.add_argument("--version", action="version", version=f"macgof {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gof", parents=[], help="assess a working model on a dataset")
    _add_data_args(p)
    p.add_argument("--family", choices=("gaussian", "logistic", "poisson"),
                   default="gaussian")
    p.add_argument("--feature-map", help="linear (default), poly:N, or interact:N")
    p.add_argument("--external-means", help="file with an externally fitted mean vector")
    p.add_argument("--noise", help="noise model for --external-means: "
                                   "gaussian[:SIGMA2], logistic, or poisson")
    _add_mac_args(p)
    _add_gof_args(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="report file (JSON)")
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("two-sample", help="MAC permutation test between two files")
    p.add_argument("--input-a", required=True)
    p.add_argument("--input-b", required=True)
    _add_data_args(p, single=False)
    _add_mac_args(p)
    p.add_argument("--permutations", type=int, default=499)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_two_sample)

    p = sub.add_parser("null-dist", help="precompute and cache a null distribution")
    _add_data_args(p)
    p.add_argument("--family", choices=("gaussian", "logistic", "poisson"),
                   default="gaussian")
    p.add_argument("--feature-map")
    _add_mac_args(p)
    _add_gof_args(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="optional JSON summary")
    p.set_defaults(func=cmd_null_dist)

    p = sub.add_parser("power-sim", help="two-sample power study")
    p.add_argument("--example", type=int, choices=(1, 2, 3, 4), required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--c", default="1,2,3,4,5", help="comma-separated c grid")
    p.add_argument("--reps", type=int, help="replications (default 500; 1000 with --full)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--k", type=int)
    p.add_argument("--full", action="store_true")
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="tidy CSV of rejection rates")
    p.set_defaults(func=cmd_power_sim)

    p = sub.add_parser("replicate", help="canned studies (5a, 5b, 6) and recipes (7, 9)")
    p.add_argument("--example", choices=("5a", "5b", "6", "7", "8", "9"), required=True)
    p.add_argument("--input", help="dataset for examples 7 and 9")
    p.add_argument("--model", choices=tuple(_SUNSPOT_MODELS),
                   help="which fixed-coefficient model to assess (example 9)")
    p.add_argument("--reps", type=int, default=100, help="runs for examples 5a/5b/6")
    _add_mac_args(p)
    _add_gof_args(p)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replicate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"macgof: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"macgof: error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"macgof: data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"macgof: numerical failure: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"macgof: data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"macgof: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
