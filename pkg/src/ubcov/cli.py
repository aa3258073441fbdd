"""Command-line frontend.

Subcommands: ``estimate`` (block coordinates with standard errors and Wald
intervals), ``precision`` (coordinates of the inverse estimate), ``eigs``
(spectrum of the estimate), ``threshold`` (hard-thresholded coordinates for
the many-communities regime), ``augmented`` (communities plus singleton
features) and ``simulate`` (Monte Carlo scenario runner).

Exit codes: 0 success, 2 usage error, 3 numerical precondition failure
(singular or non-positive-definite estimate), 4 input/output failure.
Reports go to ``--out`` as JSON (default) or CSV; when an output path is
given, diagnostic figures are rendered next to it unless ``--no-figures``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import report as report_mod
from .blocks import (
    NotPositiveDefiniteError,
    Partition,
    SingularityError,
    eigenvalues,
    is_positive_definite,
)
from .estimation import (
    compute_inference,
    estimate_correlation_mode,
    estimate_from_data,
    plugin_precision,
)
from .simulation import ScenarioSpec, run_scenario
from .singletons import estimate_augmented
from .thresholding import ThresholdConfig, estimate_large_k


class DataFormatError(ValueError):
    """Input file exists but its content cannot be used."""


def load_data(path: str | Path, header: bool = False) -> np.ndarray:
    """Read a rectangular numeric CSV into an (n, p) array."""
    rows: list[list[float]] = []
    width: int | None = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, rec in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not rec or (len(rec) == 1 and rec[0].strip() == ""):
                continue
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise DataFormatError(
                    f"{path}: row {lineno} has {len(rec)} fields, expected {width}"
                )
            parsed = []
            for col, cell in enumerate(rec, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {lineno}, column {col}: not numeric: {cell!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def load_partition(path: str | Path) -> Partition:
    """Community sizes from whitespace/comma separated text or a JSON array."""
    text = Path(path).read_text(encoding="utf-8").strip()
    if not text:
        raise DataFormatError(f"{path}: empty partition file")
    if text.startswith("["):
        try:
            values = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON array: {exc}") from None
    else:
        values = text.replace(",", " ").split()
    try:
        sizes = tuple(int(v) for v in values)
    except (TypeError, ValueError):
        raise DataFormatError(f"{path}: partition entries must be integers") from None
    try:
        return Partition(sizes)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def load_order(path: str | Path, total: int) -> np.ndarray:
    """0-based column permutation placing communities first, singletons last."""
    text = Path(path).read_text(encoding="utf-8").strip()
    values = text.replace(",", " ").split()
    order = np.array([int(v) for v in values])
    if sorted(order.tolist()) != list(range(total)):
        raise DataFormatError(f"{path}: not a permutation of 0..{total - 1}")
    return order


def _add_io_args(sub, with_partition: bool = True):
    sub.add_argument("--data", required=True, help="CSV file of observations (rows) by features (columns)")
    if with_partition:
        sub.add_argument("--partition", required=True, help="file with community sizes")
    sub.add_argument("--header", action="store_true", help="skip the first CSV line")
    sub.add_argument("--no-center", action="store_true", help="treat the mean as known zero (divisor n)")
    sub.add_argument("--out", help="output file path (default: print JSON to stdout)")
    sub.add_argument("--format", choices=("json", "csv"), default="json")
    sub.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    sub.add_argument("--seed", type=int, default=None, help="seed for any randomized step")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ubcov",
        description="Covariance and precision estimation for interconnected-community structures.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    est = subs.add_parser("estimate", help="closed-form coordinate estimates with standard errors")
    _add_io_args(est)
    est.add_argument("--correlation", action="store_true", help="fit the sample correlation matrix")
    est.add_argument("--level", type=float, default=0.95, help="confidence level for Wald intervals")

    prec = subs.add_parser("precision", help="coordinates of the inverse covariance estimate")
    _add_io_args(prec)
    prec.add_argument("--correlation", action="store_true")

    eigs = subs.add_parser("eigs", help="spectrum of the estimated covariance matrix")
    _add_io_args(eigs)

    thr = subs.add_parser("threshold", help="hard-thresholded coordinates for many communities")
    _add_io_args(thr)
    group = thr.add_mutually_exclusive_group()
    group.add_argument("--lambda", dest="lam", type=float, default=None, help="explicit threshold level")
    group.add_argument("--lambda-auto", action="store_true", help="choose the level by sample splitting")
    group.add_argument("--lambda-c", type=float, default=None, help="level C*sqrt(log(K)/n)")
    thr.add_argument("--splits", type=int, default=50)
    thr.add_argument("--grid-size", type=int, default=20)
    thr.add_argument("--exempt-diagonal", action="store_true", help="never threshold diagonal coefficients")

    aug = subs.add_parser("augmented", help="communities plus singleton features")
    _add_io_args(aug)
    aug.add_argument("--singletons", type=int, required=True, metavar="D", help="number of trailing singleton columns")
    group = aug.add_mutually_exclusive_group()
    group.add_argument("--lambda", dest="lam", type=float, default=None)
    group.add_argument("--lambda-auto", action="store_true")
    aug.add_argument("--mode", choices=("soft", "hard"), default="soft")
    aug.add_argument("--clip-psd", action="store_true", help="floor the spectrum of the assembled estimate")
    aug.add_argument("--order", help="file with a 0-based column permutation (communities first)")
    aug.add_argument("--matrix-out", help="also write the assembled dense matrix as CSV")
    aug.add_argument("--splits", type=int, default=50)
    aug.add_argument("--grid-size", type=int, default=20)

    sim = subs.add_parser("simulate", help="run a Monte Carlo scenario file")
    sim.add_argument("--scenario", required=True, help="JSON scenario specification")
    sim.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    sim.add_argument("--reps", type=int, default=None, help="override the replicate count")
    sim.add_argument("--threads", type=int, default=1, help="worker threads for replicates")
    sim.add_argument("--out", help="output file path (default: print JSON to stdout)")
    sim.add_argument("--format", choices=("json", "csv"), default="json")
    sim.add_argument("--no-figures", action="store_true")
    return parser


def _resolve_seed(args) -> int:
    seed = getattr(args, "seed", None)
    if seed is None:
        print("note: no --seed given, using seed 0", file=sys.stderr)
        return 0
    return int(seed)


def _emit(doc: dict, args, coords=None) -> None:
    """Write the report per --out/--format, render figures, print a summary."""
    if args.out is None:
        print(json.dumps(doc, indent=2))
        return
    out = Path(args.out)
    if args.format == "json":
        report_mod.write_json(doc, out)
    else:
        report_mod.write_theta_csv(doc, out)
    print(f"wrote {out}")
    if coords is not None and not args.no_figures:
        try:
            for fig_path in report_mod.render_estimate_figures(doc, coords, out.with_suffix("")):
                print(f"wrote {fig_path}")
        except Exception as exc:  # figures must never fail the run
            print(f"warning: figure rendering failed: {exc}", file=sys.stderr)


def _print_theta_summary(doc: dict) -> None:
    rows = report_mod.flatten_parameters(doc)
    have_se = rows and rows[0]["se"] != ""
    header = "parameter   estimate" + ("        se      ci_lo      ci_hi" if have_se else "")
    print(header)
    for row in rows:
        line = f"{row['name']:<10} {row['estimate']:>9.4f}"
        if have_se:
            line += f" {row['se']:>9.4f} {row['ci_lo']:>10.4f} {row['ci_hi']:>10.4f}"
        print(line)


def _load_inputs(args):
    x = load_data(args.data, header=args.header)
    part = load_partition(args.partition)
    if part.total != x.shape[1]:
        raise DataFormatError(
            f"partition totals {part.total} but data has {x.shape[1]} columns "
            "(for singleton columns use the augmented command)"
        )
    return x, part


def _cmd_estimate(args) -> int:
    seed = _resolve_seed(args)
    if args.correlation and args.no_center:
        raise UsageError("--correlation standardises columns and conflicts with --no-center")
    x, part = _load_inputs(args)
    if args.correlation:
        theta = estimate_correlation_mode(x, part)
    else:
        theta = estimate_from_data(x, part, centered=not args.no_center)
    compute_inference(theta)
    level = getattr(args, "level", 0.95)
    doc = report_mod.estimate_report(theta, level=level, seed=seed)
    _emit(doc, args, coords=theta.coords)
    if args.out is not None:
        _print_theta_summary(doc)
    return 0


def _cmd_precision(args) -> int:
    seed = _resolve_seed(args)
    if args.correlation and args.no_center:
        raise UsageError("--correlation standardises columns and conflicts with --no-center")
    x, part = _load_inputs(args)
    if args.correlation:
        theta = estimate_correlation_mode(x, part)
    else:
        theta = estimate_from_data(x, part, centered=not args.no_center)
    try:
        prec = plugin_precision(theta)
    except NotPositiveDefiniteError as exc:
        _emit_pd_failure(exc, args)
        return 3
    doc = report_mod.estimate_report(
        theta, seed=seed, coords=prec,
        pd_check=is_positive_definite(theta.coords),
        extra={"content": "precision"},
    )
    _emit(doc, args, coords=prec)
    return 0


def _emit_pd_failure(exc: NotPositiveDefiniteError, args) -> None:
    doc = {
        "error": str(exc),
        "pd": {"is_pd": False, "min_eig": exc.min_eigenvalue},
    }
    if getattr(args, "out", None):
        report_mod.write_json(doc, Path(args.out))
    print(json.dumps(doc, indent=2), file=sys.stderr)


def _cmd_eigs(args) -> int:
    seed = _resolve_seed(args)
    x, part = _load_inputs(args)
    theta = estimate_from_data(x, part, centered=not args.no_center)
    eigs = np.sort(eigenvalues(theta.coords))
    check = is_positive_definite(theta.coords)
    doc = {
        "partition": list(part.sizes),
        "eigenvalues": eigs.tolist(),
        "pd": {"is_pd": bool(check.is_pd), "min_eig": float(check.min_eigenvalue)},
        "meta": {"n": theta.n, "p": part.total, "K": part.count,
                 "q": part.n_params, "seed": seed, "version": report_mod.VERSION},
    }
    if args.out is None:
        print(json.dumps(doc, indent=2))
    elif args.format == "json":
        report_mod.write_json(doc, Path(args.out))
        print(f"wrote {args.out}")
    else:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "eigenvalue"])
            for i, val in enumerate(eigs):
                writer.writerow([i, repr(float(val))])
        print(f"wrote {args.out}")
    return 0


def _threshold_config(args, seed: int) -> ThresholdConfig:
    if args.lam is None and not args.lambda_auto and getattr(args, "lambda_c", None) is None:
        raise UsageError("one of --lambda, --lambda-auto or --lambda-c is required")
    return ThresholdConfig(
        lam=args.lam,
        c_constant=getattr(args, "lambda_c", None),
        auto=bool(args.lambda_auto),
        splits=args.splits,
        grid_size=args.grid_size,
        seed=seed,
        exempt_diagonal=bool(getattr(args, "exempt_diagonal", False)),
    )


def _cmd_threshold(args) -> int:
    seed = _resolve_seed(args)
    x, part = _load_inputs(args)
    cfg = _threshold_config(args, seed)
    result = estimate_large_k(x, part, cfg, centered=not args.no_center)
    theta = estimate_from_data(x, part, centered=not args.no_center)
    extra = {
        "sparsity": {
            "kept_a": result.kept_a,
            "kept_b_upper": result.kept_b_upper,
            "total_a": part.count,
            "total_b_upper": part.count * (part.count + 1) // 2,
        }
    }
    if result.selection is not None:
        extra["selection"] = {
            "grid": result.selection.grid.tolist(),
            "risks": result.selection.risks.tolist(),
        }
    doc = report_mod.estimate_report(
        theta, seed=seed, lam=result.lam, coords=result.coords,
        pd_check=result.pd, extra=extra,
    )
    _emit(doc, args, coords=result.coords)
    if args.out is not None:
        kept = result.kept_a + result.kept_b_upper
        total = part.count + part.count * (part.count + 1) // 2
        print(f"lambda={result.lam:.6g} kept {kept}/{total} coordinates; "
              f"pd={result.pd.is_pd} (min eig {result.pd.min_eigenvalue:.4g})")
    return 0


def _cmd_augmented(args) -> int:
    seed = _resolve_seed(args)
    x = load_data(args.data, header=args.header)
    part = load_partition(args.partition)
    d = args.singletons
    if d < 0:
        raise UsageError("--singletons must be nonnegative")
    if part.total + d != x.shape[1]:
        raise DataFormatError(
            f"partition + singletons total {part.total + d} but data has {x.shape[1]} columns"
        )
    if args.order:
        order = load_order(args.order, x.shape[1])
        x = x[:, order]
    cfg = ThresholdConfig(auto=True, splits=args.splits, grid_size=args.grid_size, seed=seed)
    aug = estimate_augmented(
        x, part, d,
        lambda_singleton=args.lam,
        mode=args.mode,
        clip_psd=args.clip_psd,
        centered=not args.no_center,
        cfg=cfg,
    )
    theta = estimate_from_data(x[:, : part.total], part, centered=not args.no_center)
    compute_inference(theta)
    doc = report_mod.estimate_report(
        theta, seed=seed, lam=aug.lam,
        extra={
            "singletons": {
                "d": aug.d,
                "mode": args.mode,
                "min_eig": aug.min_eigenvalue,
                "clipped": aug.clipped,
            }
        },
    )
    _emit(doc, args, coords=theta.coords)
    if args.matrix_out:
        np.savetxt(args.matrix_out, aug.assemble(), delimiter=",")
        print(f"wrote {args.matrix_out}")
    if args.out is not None:
        print(f"singleton lambda={aug.lam:.6g}; assembled min eig {aug.min_eigenvalue:.4g}")
    return 0


def _cmd_simulate(args) -> int:
    with open(args.scenario, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{args.scenario}: invalid JSON: {exc}") from None
    try:
        spec = ScenarioSpec.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid scenario: {exc}") from None
    if args.seed is None and "seed" not in doc:
        print("note: no seed given, using seed 0", file=sys.stderr)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.reps is not None:
        overrides["replicates"] = args.reps
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    report = run_scenario(spec, threads=max(1, args.threads))
    doc_out = report.to_dict()
    if args.out is None:
        print(json.dumps(doc_out, indent=2))
        return 0
    out = Path(args.out)
    if args.format == "json":
        report_mod.write_json(doc_out, out)
        print(f"wrote {out}")
    else:
        report_mod.write_sim_csv(report, out)
        print(f"wrote {out}")
    if not args.no_figures:
        try:
            for fig_path in report_mod.render_sim_figures(report, out.with_suffix("")):
                print(f"wrote {fig_path}")
        except Exception as exc:
            print(f"warning: figure rendering failed: {exc}", file=sys.stderr)
    total = report.timings.get("total_s")
    if total is not None:
        print(f"{spec.replicates} replicates in {total:.2f}s")
    return 0


class UsageError(ValueError):
    """Invalid flag combination or semantic configuration mistake."""


_COMMANDS = {
    "estimate": _cmd_estimate,
    "precision": _cmd_precision,
    "eigs": _cmd_eigs,
    "threshold": _cmd_threshold,
    "augmented": _cmd_augmented,
    "simulate": _cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NotPositiveDefiniteError, SingularityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
