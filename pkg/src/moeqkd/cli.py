"""Command line front end.

Usage is ``moeqkd <experiment> [--flags]``. Flags may also be supplied as a
JSON object via --config; explicit flags win over file values. The exit code
is 0 only when every emitted record passed its own assertion.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import (
    EXPERIMENT_NAMES,
    FORMATS,
    RunConfig,
    records_to_csv,
    records_to_json,
    run,
    sample_transcript,
)

_HELP = {
    "lemmas": "operator lemma battery over random instances",
    "moe": "one guessing-game configuration, exact or sampled",
    "niqkd": "one-round key agreement under a chosen channel",
    "two-round": "composed two-instance runs with the cross-check round",
    "nogo": "interception attack on a classically-keyed family",
    "entropy": "certified guessing-probability machinery checks",
}

# keys a --config file may set; flags given on the command line win
_CONFIG_KEYS = ("seed", "scheme", "strategy", "adversary", "kind", "n", "s",
                "m", "r", "trials", "exact", "tol", "out", "format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moeqkd",
        description="Deterministic experiment runner; every row reproduces "
                    "bit for bit from the master seed.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENT_NAMES:
        sp = sub.add_parser(name, help=_HELP[name])
        sp.add_argument("--seed", type=int, default=None,
                        help="master seed (required here or in --config)")
        sp.add_argument("--trials", type=int, default=None)
        sp.add_argument("--n", type=int, default=None, help="key length in bits")
        sp.add_argument("--s", type=int, default=None, help="block size")
        sp.add_argument("--m", type=int, default=None, help="digest length in bits")
        sp.add_argument("--r", type=int, default=None, help="local-coin length in bits")
        sp.add_argument("--scheme", default=None, choices=("ideal", "toydh", "broken"))
        sp.add_argument("--strategy", default=None,
                        help="moe: honest, intercept, basis_reading, random")
        sp.add_argument("--adversary", default=None,
                        help="niqkd/two-round: none, identity, entangling_relay, "
                             "measure_resend, swap_epr, swap_epr_sub0")
        sp.add_argument("--kind", default=None,
                        help="nogo: xor_trunc, affine_hash, table")
        sp.add_argument("--exact", action=argparse.BooleanOptionalAction, default=None,
                        help="enumerate instead of sampling (moe)")
        sp.add_argument("--tol", type=float, default=None, help="tolerance override")
        sp.add_argument("--out", default=None, help="write records to this path")
        sp.add_argument("--format", default=None, choices=FORMATS)
        sp.add_argument("--config", default=None,
                        help="JSON file of flag values; explicit flags win")
        sp.add_argument("--dump-transcript", default=None, metavar="PATH",
                        help="also write one protocol transcript as JSON "
                             "(niqkd and two-round only)")
    return parser


def _merge_config(ns: argparse.Namespace) -> RunConfig:
    file_vals: dict = {}
    if ns.config is not None:
        try:
            file_vals = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config file {ns.config}: {exc}") from exc
        if not isinstance(file_vals, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = sorted(set(file_vals) - set(_CONFIG_KEYS))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    merged = {}
    for key in _CONFIG_KEYS:
        value = getattr(ns, key)
        if value is None and key in file_vals:
            value = file_vals[key]
        if value is not None:
            merged[key] = value
    if "seed" not in merged:
        raise ValueError("--seed is required (on the command line or in --config)")
    return RunConfig(experiment=ns.experiment, **merged)


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = _merge_config(ns)
        records = run(cfg)
        if ns.dump_transcript is not None:
            Path(ns.dump_transcript).write_text(sample_transcript(cfg) + "\n")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return 1

    text = records_to_csv(records) if cfg.format == "csv" else records_to_json(records)
    if cfg.out is not None:
        Path(cfg.out).write_text(text)
        for r in records:
            verdict = "PASS" if r.passed else "FAIL"
            extra = "" if r.bound is None else f" (bound {r.bound!r})"
            print(f"[{verdict}] {r.metric} = {r.value!r}{extra}")
        print(f"wrote {len(records)} records to {cfg.out} "
              f"in {records[0].runtime:.2f}s" if records else "wrote 0 records")
    else:
        sys.stdout.write(text)
    return 0 if all(r.passed for r in records) else 1


if __name__ == "__main__":
    sys.exit(main())
