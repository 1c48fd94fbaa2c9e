"""Command-line pipeline: synth | inject-noise | detect | tune | evaluate | filter | theory.

Exit codes: 0 success, 1 validation error, 2 usage error, 3 internal error.
Every failure prints a single ``ERROR: ...`` line to stderr.  All file
outputs are written atomically, and results are independent of --threads.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import noise as noise_mod
from . import theory as theory_mod
from .dataset import (
    _atomic_write_text,
    load_dataset,
    read_scores,
    write_dataset,
    write_scores,
)
from .errors import UsageError, ValidationError
from .metrics import compute_report
from .scoring import METHODS, LemonParams, score_split
from .synthetic import GeneratorSpec, generate
from .tuning import GridSpec, lemon_fix_params, tune_lemon

log = logging.getLogger("lemon")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3


def _load_json(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{p}: file missing")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{p}: invalid JSON ({exc})") from exc


def _cmd_synth(args) -> int:
    spec = GeneratorSpec.from_json_obj(_load_json(args.spec))
    ds = generate(spec)
    write_dataset(ds, args.out)
    log.info("wrote %d samples to %s", ds.n, args.out)
    return EXIT_OK


def _cmd_inject_noise(args) -> int:
    ds = load_dataset(args.dataset)
    perm = None
    if args.perm:
        perm = {int(k): int(v) for k, v in _load_json(args.perm).items()}
    seed = args.seed if args.seed is not None else (args.global_seed or 0)
    spec = noise_mod.NoiseSpec(
        noise_type=args.noise_type,
        rate=args.rate,
        seed=seed,
        split=args.split,
        class_permutation=perm,
    )
    noised = noise_mod.inject(ds, spec, num_classes=args.num_classes)
    write_dataset(noised, args.out)
    log.info("flagged %s records in split %s", noised.manifest["noise"]["flagged"], args.split)
    return EXIT_OK


def _detect_params(args):
    if args.params is None or args.params == "-":
        if args.method == "lemon":
            return lemon_fix_params()
        return None  # per-method defaults
    obj = _load_json(args.params)
    if args.method == "lemon":
        return LemonParams.from_json_obj(obj)
    return obj


def _cmd_detect(args) -> int:
    ds = load_dataset(args.dataset)
    params = _detect_params(args)
    table = score_split(
        ds,
        reference_split=args.reference_split,
        query_split=args.query_split,
        method=args.method,
        params=params,
        threads=args.threads,
    )
    write_scores(table, args.out)
    log.info("scored %d records with %s", len(table.rows), args.method)
    return EXIT_OK


def _cmd_tune(args) -> int:
    ds = load_dataset(args.dataset)
    grid = GridSpec(tied_taus=not args.full_grid)
    result = tune_lemon(ds, val_split=args.val_split, grid=grid, threads=args.threads)
    payload = dict(result.best_params.to_json_obj())
    payload["val_f1"] = result.best_val_f1
    payload["trials"] = len(result.trials)
    payload["provenance"] = result.provenance
    _atomic_write_text(Path(args.out), json.dumps(payload, indent=2, sort_keys=True) + "\n")
    log.info("best validation F1 %.4f with %d trials", result.best_val_f1, len(result.trials))
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    ds = load_dataset(args.dataset)
    table = read_scores(args.scores)
    positions = ds.split_positions(args.split)
    flags_by_index = {}
    for pos in positions:
        rec = ds.records[pos]
        if rec.mislabel_flag is None:
            raise ValidationError(f"record {pos}: no mislabel_flag; cannot evaluate split {args.split!r}")
        flags_by_index[int(pos)] = rec.mislabel_flag
    scores, flags = [], []
    for row in table.rows:
        if row.index not in flags_by_index:
            raise ValidationError(f"score row index {row.index} is not in split {args.split!r}")
        scores.append(row.score)
        flags.append(flags_by_index[row.index])
    missing = set(flags_by_index) - {r.index for r in table.rows}
    if missing:
        raise ValidationError(f"{len(missing)} records of split {args.split!r} have no score row")
    report = compute_report(np.array(scores), np.array(flags))
    _atomic_write_text(Path(args.out), report.to_json())
    log.info("auroc %.4f f1 %.4f over %d records", report.auroc, report.f1_max, len(scores))
    return EXIT_OK


def _cmd_filter(args) -> int:
    if not 0.0 <= args.fraction <= 1.0:
        raise UsageError(f"--fraction must be in [0, 1], got {args.fraction}")
    table = read_scores(args.scores)
    n = len(table.rows)
    drop = int(np.floor(args.fraction * n))
    # highest scores are removed first; on ties the higher index goes first,
    # so the retained set keeps lower indices
    order = sorted(table.rows, key=lambda r: (-r.score, -r.index))
    dropped = {r.index for r in order[:drop]}
    retained = sorted(r.index for r in table.rows if r.index not in dropped)
    _atomic_write_text(Path(args.out), "".join(f"{i}\n" for i in retained))
    log.info("retained %d of %d rows", len(retained), n)
    return EXIT_OK


def _cmd_theory(args) -> int:
    if args.theory_cmd == "closed-form":
        params = theory_mod.TheoryParams.from_json_obj(_load_json(args.params))
        payload = {
            "auroc": theory_mod.closed_form_auroc(params),
            "regime_ok": theory_mod.lemma_regime_check(params),
        }
    elif args.theory_cmd == "sim":
        params = theory_mod.TheoryParams.from_json_obj(_load_json(args.params))
        seed = args.seed if args.seed is not None else (args.global_seed or 0)
        auroc_hat, se = theory_mod.simulate_auroc(params, args.trials, seed=seed)
        payload = {
            "auroc": auroc_hat,
            "std_error": se,
            "closed_form": theory_mod.closed_form_auroc(params),
            "trials": args.trials,
        }
    else:  # lipschitz
        seed = args.seed if args.seed is not None else (args.global_seed or 0)
        rate, delta = theory_mod.verify_lipschitz_bound(
            args.sigma, args.eps, args.L, args.trials, seed=seed
        )
        payload = {"empirical_rate": rate, "delta_bound": delta, "trials": args.trials}
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        _atomic_write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lemon",
        description="Label error detection over paired image/text embeddings",
    )
    parser.add_argument("--seed", type=int, default=None, dest="global_seed",
                        help="fallback seed for subcommands that draw random numbers")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for batched scoring (results are identical for any value)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="generate a synthetic clustered dataset")
    p.add_argument("--spec", required=True, help="generator spec JSON")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("inject-noise", help="corrupt labels and record ground-truth flags")
    p.add_argument("--dataset", required=True)
    p.add_argument("--noise-type", required=True, choices=noise_mod.NOISE_TYPES)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--split", default="train")
    p.add_argument("--perm", default=None, help="JSON class permutation for asymmetric noise")
    p.add_argument("--num-classes", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_inject_noise)

    p = sub.add_parser("detect", help="score records for suspected label errors")
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--params", default=None,
                   help="params JSON; '-' or omitted uses the method's defaults")
    p.add_argument("--reference-split", default="train")
    p.add_argument("--query-split", default="train")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_detect)

    p = sub.add_parser("tune", help="search hyperparameters on a labeled validation split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--val-split", default="val")
    p.add_argument("--full-grid", action="store_true",
                   help="search all four tau axes independently (slow)")
    p.add_argument("--out", required=True, help="winning params JSON (loadable by detect)")
    p.set_defaults(fn=_cmd_tune)

    p = sub.add_parser("evaluate", help="compute detection metrics for a score table")
    p.add_argument("--scores", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("filter", help="drop the top scoring fraction, keep the rest")
    p.add_argument("--scores", required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_filter)

    p = sub.add_parser("theory", help="closed-form and Monte Carlo checks")
    tsub = p.add_subparsers(dest="theory_cmd", required=True)
    t = tsub.add_parser("closed-form")
    t.add_argument("--params", required=True)
    t.add_argument("--out", default=None)
    t = tsub.add_parser("sim")
    t.add_argument("--params", required=True)
    t.add_argument("--trials", type=int, default=200_000)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", default=None)
    t = tsub.add_parser("lipschitz")
    t.add_argument("--sigma", type=float, required=True)
    t.add_argument("--eps", type=float, required=True)
    t.add_argument("--L", type=float, required=True)
    t.add_argument("--trials", type=int, default=100_000)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_theory)

    return parser


def run(argv: list[str] | None = None) -> int:
    """Dispatch one CLI invocation; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed its own message (or help text)
        if exc.code == 0:
            return EXIT_OK
        print("ERROR: invalid arguments", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - defensive
        print(f"ERROR: internal failure: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
