"""Command-line pipeline: simulate, ingest, fit, predict, estimate, diagnose.

Every subcommand is reproducible from (arguments, seed), writes a JSON run
manifest describing its inputs and outputs, and never mutates its input
files.  Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

import argparse
import csv
import datetime
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bisg import BisgProxy
from .cbisg import CbisgProxy
from .diagnostics import binned_violation_profile, bound_sweep, consistency_report
from .domain import RaceSet
from .errors import FairproxyError
from .estimators import estimate_report
from .micsg import MicsgProxy
from .simulator import (
    JointTable,
    build_joint,
    mean_consistent_proxy,
    random_dgp,
    sample_population,
)
from .tables import (
    export_derived_geo_probs,
    export_derived_surname_probs,
    load_geo_table,
    load_supplemental,
    load_surname_table,
    split_dataset,
    write_geo_table,
    write_supplemental,
    write_surname_table,
)

SEED_ENV_VAR = "FAIRPROXY_SEED"


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 on usage errors instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(path, subcommand, config, seed, inputs, outputs):
    manifest = {
        "schema": 1,
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "versions": {
            "fairproxy": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    _write_json(manifest, path)


def _resolve_seed(args, required=False):
    seed = getattr(args, "seed", None)
    if seed is None:
        env = os.environ.get(SEED_ENV_VAR)
        if env is not None:
            seed = int(env)
    if seed is None:
        if required:
            raise FairproxyError(
                f"this subcommand is stochastic: pass --seed or set {SEED_ENV_VAR}"
            )
        seed = 0
    return int(seed)


def _race_set_from_header(path) -> RaceSet:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = next(csv.reader(fh))
    return RaceSet(tuple(h.strip() for h in header[1:]))


def _race_set_from_supplemental(path) -> RaceSet:
    labels = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if len(row) >= 5 and row[4].strip():
                labels.add(row[4].strip())
    if len(labels) < 2:
        raise FairproxyError(
            f"{path}: cannot infer race categories; provide --geo or --surnames"
        )
    return RaceSet(tuple(sorted(labels)))


def _load_tables(args, race_set=None):
    if not getattr(args, "surnames", None) or not getattr(args, "geo", None):
        raise FairproxyError("this proxy needs --surnames and --geo census files")
    rs = race_set or _race_set_from_header(args.geo)
    surnames = load_surname_table(args.surnames, rs)
    geo = load_geo_table(args.geo, rs)
    return surnames, geo, rs


def _resolve_proxy(spec, args):
    """Build a proxy from its spec string; returns (proxy, extra input paths)."""
    if spec == "bisg":
        surnames, geo, _ = _load_tables(args)
        return BisgProxy(surnames, geo), [args.surnames, args.geo]
    if spec.startswith("cbisg:"):
        model_path = spec.split(":", 1)[1]
        surnames, geo, _ = _load_tables(args)
        proxy = CbisgProxy.load_csv(model_path, surnames, geo)
        return proxy, [model_path, args.surnames, args.geo]
    if spec.startswith("micsg:"):
        model_path = spec.split(":", 1)[1]
        base_spec = MicsgProxy.read_base_spec(model_path)
        base, inputs = _resolve_proxy(base_spec, args)
        return MicsgProxy.load_json(model_path, base), [model_path, *inputs]
    if spec.startswith("oracle:"):
        table_path = spec.split(":", 1)[1]
        table = JointTable.load_csv(table_path)
        return mean_consistent_proxy(table), [table_path]
    raise FairproxyError(
        f"unknown proxy spec {spec!r}; expected bisg, cbisg:PATH, micsg:PATH, or oracle:PATH"
    )


def _load_input_dataset(args, race_set):
    dataset = load_supplemental(args.input, race_set)
    return _apply_split(args, dataset)


def _apply_split(args, dataset):
    fraction = getattr(args, "split_fraction", None)
    if fraction is None:
        return dataset
    seed = _resolve_seed(args)
    train, test = split_dataset(dataset, fraction, seed)
    return train if getattr(args, "split_part", "train") == "train" else test


def _parse_grid(text):
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise FairproxyError(f"bad grid {text!r}; expected start:stop:step") from None
    if step <= 0 or stop < start:
        raise FairproxyError(f"bad grid {text!r}")
    values = []
    v = start
    while v <= stop + 1e-9:
        values.append(round(v, 10))
        v += step
    return values


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args):
    seed = _resolve_seed(args, required=True)
    knobs = {}
    inputs = []
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            knobs = json.load(fh)
        inputs.append(args.config)
    config = random_dgp(seed, **knobs)
    table = build_joint(config)
    dataset = sample_population(
        table, args.n, seed, n_covariates=args.covariates
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    surname_table, geo_table = table.rounded_census_tables(scale=args.census_scale)
    paths = {
        "surnames": out_dir / "surnames.csv",
        "geo": out_dir / "geo.csv",
        "supplemental": out_dir / "supplemental.csv",
        "joint_table": out_dir / "joint_table.csv",
    }
    write_surname_table(surname_table, paths["surnames"])
    write_geo_table(geo_table, paths["geo"])
    write_supplemental(dataset, paths["supplemental"])
    table.save_csv(paths["joint_table"])
    _write_manifest(
        out_dir / "manifest.json",
        "simulate",
        {"n": args.n, "covariates": args.covariates, "knobs": knobs,
         "census_scale": args.census_scale},
        seed,
        inputs,
        sorted(paths.values()),
    )
    print(f"wrote {len(dataset)} records and census tables to {out_dir}")
    return 0


def cmd_ingest_check(args):
    summary = {"schema": 1, "files": {}}
    inputs = []
    outputs = []
    if args.export:
        Path(args.export).mkdir(parents=True, exist_ok=True)
    rs = None
    if args.geo:
        rs = _race_set_from_header(args.geo)
    elif args.surnames:
        rs = _race_set_from_header(args.surnames)
    if args.surnames:
        table = load_surname_table(args.surnames, rs)
        summary["files"]["surnames"] = {"rows": len(table), "races": list(rs)}
        inputs.append(args.surnames)
        if args.export:
            out = Path(args.export) / "surname_given_race.csv"
            export_derived_surname_probs(table, out)
            outputs.append(out)
    if args.geo:
        table = load_geo_table(args.geo, rs)
        summary["files"]["geo"] = {"rows": len(table), "races": list(rs)}
        inputs.append(args.geo)
        if args.export:
            out = Path(args.export) / "race_given_geo.csv"
            export_derived_geo_probs(table, out)
            outputs.append(out)
    if args.input:
        dataset = load_supplemental(
            args.input, rs or _race_set_from_supplemental(args.input)
        )
        summary["files"]["supplemental"] = {
            "rows": len(dataset),
            "covariates": dataset.covariate_dim,
            "labeled": dataset.race_labels_present,
        }
        inputs.append(args.input)
    if not inputs:
        raise FairproxyError("nothing to check: pass --surnames, --geo, or --input")
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.export:
        _write_manifest(
            Path(args.export) / "manifest.json",
            "ingest-check",
            {"export": str(args.export)},
            _resolve_seed(args),
            inputs,
            outputs,
        )
    return 0


def cmd_predict_bisg(args):
    surnames, geo, rs = _load_tables(args)
    proxy = BisgProxy(surnames, geo)
    dataset = load_supplemental(args.input, rs)
    probs = proxy.evaluate(dataset, 0)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *rs])
        for i in range(len(dataset)):
            writer.writerow([dataset.ids[i], *(f"{v:.12g}" for v in probs[i])])
    _write_manifest(
        str(args.out) + ".manifest.json",
        "predict-bisg",
        {"input": str(args.input)},
        _resolve_seed(args),
        [args.surnames, args.geo, args.input],
        [args.out],
    )
    print(f"wrote {len(dataset)} predictions to {args.out}")
    return 0


def cmd_fit_cbisg(args):
    surnames, geo, rs = _load_tables(args)
    train = load_supplemental(args.train, rs)
    train = _apply_split(args, train)
    eta = args.eta if args.eta == "tune" else float(args.eta)
    proxy = CbisgProxy(
        surnames,
        geo,
        eta=eta,
        eta_grid=tuple(_parse_grid(args.grid)),
        tune_estimator=args.tune_estimator,
    ).fit(train)
    proxy.save_csv(args.model_out)
    _write_manifest(
        str(args.model_out) + ".manifest.json",
        "fit-cbisg",
        {
            "eta": args.eta,
            "grid": args.grid,
            "tune_estimator": args.tune_estimator,
            "train": str(args.train),
            "split_fraction": args.split_fraction,
            "split_part": args.split_part,
        },
        _resolve_seed(args),
        [args.surnames, args.geo, args.train],
        [args.model_out],
    )
    print(f"fitted {len(proxy.posteriors_)} cell posteriors -> {args.model_out}")
    return 0


def cmd_fit_micsg(args):
    base, base_inputs = _resolve_proxy(args.base, args)
    train = load_supplemental(args.train, base.race_set)
    train = _apply_split(args, train)
    proxy = MicsgProxy(
        base,
        l2_lambda=args.l2_lambda,
        tolerance=args.tolerance,
        max_iters=args.max_iters,
    ).fit(train)
    proxy.save_json(args.model_out, base_spec=args.base)
    _write_manifest(
        str(args.model_out) + ".manifest.json",
        "fit-micsg",
        {
            "base": args.base,
            "lambda": args.l2_lambda,
            "train": str(args.train),
            "split_fraction": args.split_fraction,
            "split_part": args.split_part,
            "converged": bool(proxy.learner_.converged_),
            "iterations": int(proxy.learner_.n_iterations_),
        },
        _resolve_seed(args),
        [*base_inputs, args.train],
        [args.model_out],
    )
    print(
        f"fitted learner ({proxy.learner_.n_iterations_} iterations, "
        f"converged={proxy.learner_.converged_}) -> {args.model_out}"
    )
    return 0


def cmd_predict_micsg(args):
    base_spec = MicsgProxy.read_base_spec(args.model)
    base, base_inputs = _resolve_proxy(base_spec, args)
    proxy = MicsgProxy.load_json(args.model, base)
    dataset = load_supplemental(args.input, proxy.race_set)
    if args.context == "observed":
        probs = np.empty((len(dataset), len(proxy.race_set)))
        for y in (0, 1):
            mask = dataset.contexts == y
            if np.any(mask):
                probs[mask] = proxy.evaluate(dataset.subset(mask), y)
    else:
        probs = proxy.evaluate(dataset, int(args.context))
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *proxy.race_set])
        for i in range(len(dataset)):
            writer.writerow([dataset.ids[i], *(f"{v:.12g}" for v in probs[i])])
    _write_manifest(
        str(args.out) + ".manifest.json",
        "predict-micsg",
        {"model": str(args.model), "context": args.context},
        _resolve_seed(args),
        [args.model, *base_inputs, args.input],
        [args.out],
    )
    print(f"wrote {len(dataset)} predictions to {args.out}")
    return 0


def cmd_estimate(args):
    inputs = [args.input]
    proxy = None
    if args.method == "true":
        if args.proxy:
            raise FairproxyError("--method true uses labels, not a proxy")
        if args.geo:
            rs = _race_set_from_header(args.geo)
        else:
            rs = _race_set_from_supplemental(args.input)
        dataset = load_supplemental(args.input, rs)
        dataset = _apply_split(args, dataset)
        report = estimate_report(dataset, "true", race_set=rs)
    else:
        if not args.proxy:
            raise FairproxyError(f"--method {args.method} needs --proxy")
        proxy, proxy_inputs = _resolve_proxy(args.proxy, args)
        inputs.extend(proxy_inputs)
        dataset = load_supplemental(args.input, proxy.race_set)
        dataset = _apply_split(args, dataset)
        report = estimate_report(dataset, args.method, proxy=proxy)
    payload = report.to_dict()
    payload["proxy"] = args.proxy or ""
    _write_json(payload, args.out)
    _write_manifest(
        str(args.out) + ".manifest.json",
        "estimate",
        {
            "method": args.method,
            "proxy": args.proxy or "",
            "split_fraction": args.split_fraction,
            "split_part": args.split_part,
        },
        _resolve_seed(args),
        inputs,
        [args.out],
    )
    print(f"wrote {args.method} estimates to {args.out}")
    return 0


def cmd_diagnose(args):
    proxy, proxy_inputs = _resolve_proxy(args.proxy, args)
    dataset = load_supplemental(args.input, proxy.race_set)
    dataset = _apply_split(args, dataset)
    report = consistency_report(proxy, dataset)
    profiles = {}
    for race in proxy.race_set:
        bins = binned_violation_profile(proxy, dataset, race, 1, bins=args.bins)
        profiles[race] = [
            {
                "center": b.center,
                "violation": b.violation,
                "size": b.size,
                "n_records": b.n_records,
            }
            for b in bins
        ]
    payload = {
        "schema": 1,
        "proxy": args.proxy,
        "bins": args.bins,
        "report": report.to_dict(),
        "profiles": profiles,
    }
    _write_json(payload, args.out)
    _write_manifest(
        str(args.out) + ".manifest.json",
        "diagnose",
        {
            "proxy": args.proxy,
            "bins": args.bins,
            "split_fraction": args.split_fraction,
            "split_part": args.split_part,
        },
        _resolve_seed(args),
        [args.input, *proxy_inputs],
        [args.out],
    )
    print(f"wrote consistency diagnostics to {args.out}")
    return 0


def cmd_verify_theorems(args):
    seed = _resolve_seed(args, required=True)
    sweep = bound_sweep(args.instances, seed)
    _write_json(sweep, args.out)
    _write_manifest(
        str(args.out) + ".manifest.json",
        "verify-theorems",
        {"instances": args.instances},
        seed,
        [],
        [args.out],
    )
    summary = sweep["summary"]
    print(
        f"checked {summary['checked']} instance-races: "
        f"{summary['failures']} failures, {summary['degenerate']} degenerate"
    )
    return 1 if summary["failures"] else 0


def _figure_rows_from_report(payload):
    rows = []
    method = payload.get("method", "")
    proxy = payload.get("proxy", "")
    label = f"{method}:{proxy}" if proxy else method
    if "per_race" in payload:
        for i, (race, entry) in enumerate(sorted(payload["per_race"].items())):
            size = entry.get("n_group", payload.get("n", 0))
            rows.append(("rates", race, label, float(i), entry["mu"], size))
    if "profiles" in payload:
        proxy_label = payload.get("proxy", "")
        for race, bins in sorted(payload["profiles"].items()):
            for b in bins:
                rows.append(
                    (
                        "consistency",
                        race,
                        proxy_label,
                        b["center"],
                        b["violation"],
                        b["n_records"],
                    )
                )
        entries = payload.get("report", {}).get("entries", [])
        n = payload.get("report", {}).get("n", 0)
        for i, entry in enumerate(entries):
            rows.append(
                (
                    "composition",
                    entry["race"],
                    f"{proxy_label}@y={entry['context']}",
                    float(i),
                    entry["omega_bar"],
                    n,
                )
            )
    return rows


def cmd_emit_figure_data(args):
    rows = []
    for path in args.report or []:
        with open(path, "r", encoding="utf-8") as fh:
            rows.extend(_figure_rows_from_report(json.load(fh)))
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["figure", "group", "method", "x", "y", "size"])
        for figure, group, method, x, y, size in rows:
            writer.writerow([figure, group, method, f"{x:.12g}", f"{y:.12g}", f"{size:.12g}"])
    _write_manifest(
        str(args.out) + ".manifest.json",
        "emit-figure-data",
        {"reports": [str(p) for p in (args.report or [])]},
        _resolve_seed(args),
        list(args.report or []),
        [args.out],
    )
    print(f"wrote {len(rows)} figure rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------


def _add_split_flags(sub):
    sub.add_argument("--split-fraction", type=float, default=None,
                     help="hold out this fraction by hashed record id")
    sub.add_argument("--split-part", choices=["train", "test"], default="train",
                     help="which part of the split to use")


def _add_table_flags(sub):
    sub.add_argument("--surnames", help="surname counts CSV")
    sub.add_argument("--geo", help="geography counts CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairproxy", description=__doc__)
    parser.add_argument("--seed", type=int, default=None,
                        help=f"random seed (fallback: ${SEED_ENV_VAR})")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="emit a synthetic population and its oracle table")
    p.add_argument("--config", help="JSON file of population knobs")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--covariates", type=int, default=0)
    p.add_argument("--census-scale", type=float, default=1_000_000)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest-check", help="validate input files, optionally export derived tables")
    _add_table_flags(p)
    p.add_argument("--input", help="supplemental CSV")
    p.add_argument("--export", help="directory for derived conditional tables")
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("predict-bisg", help="surname-geography race probabilities")
    _add_table_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict_bisg)

    p = sub.add_parser("fit-cbisg", help="fit contextual posteriors per (geo, context) cell")
    _add_table_flags(p)
    p.add_argument("--train", required=True)
    p.add_argument("--eta", default="0.0", help='concentration in [0,1], or "tune"')
    p.add_argument("--grid", default="0:1:0.1", help="tuning grid start:stop:step")
    p.add_argument("--tune-estimator", choices=["bayes", "weighted"], default="bayes")
    p.add_argument("--model-out", required=True)
    _add_split_flags(p)
    p.set_defaults(func=cmd_fit_cbisg)

    p = sub.add_parser("fit-micsg", help="fit the learned contextual proxy")
    _add_table_flags(p)
    p.add_argument("--base", required=True, help="bisg or cbisg:PATH")
    p.add_argument("--train", required=True)
    p.add_argument("--lambda", dest="l2_lambda", type=float, default=1e-4)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--model-out", required=True)
    _add_split_flags(p)
    p.set_defaults(func=cmd_fit_micsg)

    p = sub.add_parser("predict-micsg", help="predict with a fitted learned proxy")
    _add_table_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--context", choices=["0", "1", "observed"], default="observed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict_micsg)

    p = sub.add_parser("estimate", help="per-race positive-rate estimates")
    _add_table_flags(p)
    p.add_argument("--method", choices=["true", "weighted", "bayes"], required=True)
    p.add_argument("--proxy", help="bisg | cbisg:PATH | micsg:PATH | oracle:PATH")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    _add_split_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("diagnose", help="mean-consistency diagnostics")
    _add_table_flags(p)
    p.add_argument("--proxy", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--bins", type=int, default=8)
    p.add_argument("--out", required=True)
    _add_split_flags(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("verify-theorems", help="run the bound sweeps on seeded populations")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_verify_theorems)

    p = sub.add_parser("emit-figure-data", help="flatten reports into tidy plot data")
    p.add_argument("--report", action="append", help="report JSON (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_emit_figure_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"fairproxy: I/O error: {exc}", file=sys.stderr)
        return 2
    except IsADirectoryError as exc:
        print(f"fairproxy: I/O error: {exc}", file=sys.stderr)
        return 2
    except (FairproxyError, ValueError) as exc:
        print(f"fairproxy: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"fairproxy: I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
