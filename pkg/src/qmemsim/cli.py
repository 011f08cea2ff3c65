"""Command-line entry point: ``qmemsim run --scenario NAME [options]``.

Exit status is 0 when no scenario assertion failed, 1 when one did and 2 for
configuration or usage errors (unknown scenario, bad config file, unwritable
output directory). A ``manifest.json`` listing every written file with its
SHA-256 is written on every path that reaches the output directory.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .exceptions import ConfigurationError, FitError, InsufficientStatistics
from .mzi import MeasuredProbs, PhaseScanPoint, phase_scan_csv
from .protocol import DelayMode, ProtocolConfig

__all__ = ["main", "build_parser", "parse_trials", "parse_betas", "parse_probs"]

EXIT_OK, EXIT_ASSERTION, EXIT_CONFIG = 0, 1, 2


def parse_trials(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value.is_integer() or value < 1:
        raise argparse.ArgumentTypeError(f"trials must be a positive integer, got {text!r}")
    return int(value)


def parse_betas(text):
    """``start:stop:count`` with ``stop`` included, as in ``numpy.linspace``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected start:stop:count")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad phase range {text!r}") from None
    if count < 1:
        raise argparse.ArgumentTypeError("count must be >= 1")
    return tuple(float(b) for b in np.linspace(start, stop, count))


def parse_probs(text):
    """Six comma-separated probabilities; a trailing ``%`` divides by 100."""
    values = []
    for item in text.split(","):
        item = item.strip()
        scale = 1.0
        if item.endswith("%"):
            item, scale = item[:-1], 0.01
        try:
            values.append(float(item) * scale)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad probability {item!r}") from None
    try:
        return MeasuredProbs.from_sequence(values)
    except ConfigurationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    parser = argparse.ArgumentParser(prog="qmemsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario or a single simulation")
    run.add_argument("--scenario", required=True, choices=experiments.SCENARIOS)
    run.add_argument("--config", help="key = value file overriding the scenario preset")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--trials", type=parse_trials, help="trials per point (1e6 accepted)")
    run.add_argument("--out", default="qmemsim-out", help="output directory")
    run.add_argument("--delay-mode", choices=[m.value for m in DelayMode])
    run.add_argument("--betas", type=parse_betas, help="phase scan start:stop:count")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                     help="worker processes (results do not depend on it)")
    run.add_argument("--probs", type=parse_probs,
                     help="P_S1,P_S3,P_S3|S1,P_AS2|S1,P_AS4|S1,P_AS4|S3 for ve-estimate")
    return parser


def _load_config(args):
    config = experiments.preset_config(args.scenario)
    if args.config:
        config = ProtocolConfig.from_file(args.config, base=config)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.delay_mode is not None:
        changes["delay_mode"] = args.delay_mode
    return config.replace(**changes) if changes else config


def _run_scenario(args, config):
    name, jobs = args.scenario, args.jobs
    if name == "anticorrelation":
        return experiments.scenario_anticorrelation(config, jobs=jobs)
    if name == "g2-storage":
        return experiments.scenario_g2_storage(config, jobs=jobs)
    if name == "enhancement":
        return experiments.scenario_enhancement(config, jobs=jobs)
    if name == "interference":
        betas = args.betas if args.betas is not None else experiments.DEFAULT_BETAS
        return experiments.scenario_interference(config, betas, jobs=jobs)
    if name == "ve-estimate":
        return experiments.scenario_ve_estimate(args.probs or experiments.REFERENCE_PROBS)
    return experiments.scenario_single(config, jobs=jobs)


def _outputs(result, fmt):
    """``{file name: text}`` for one scenario result."""
    stem = result.name
    files = {}
    if fmt == "json":
        files[f"{stem}.json"] = result.to_json()
    else:
        files[f"{stem}.csv"] = result.to_csv()
        files[f"{stem}_summary.json"] = result.to_json()
        if result.name == "interference":
            for key, tag in (("R_S1", "S1"), ("R_S1&S3", "S1_S3")):
                points = [PhaseScanPoint(r["beta"], r[key].value, r[key].stderr)
                          for r in result.rows]
                files[f"fringe_{tag}.csv"] = phase_scan_csv(points)
    return files


def _print_summary(result, stream):
    s = result.summary
    if result.name == "ve-estimate":
        print(f"V_E = {s['V_E']:.3f}", file=stream)
    elif result.name == "interference":
        for tag in ("S1", "S1&S3"):
            if s[f"V_{tag}"] is None:
                print(f"V({tag}): no fringe (herald never fired)", file=stream)
                continue
            print(f"V({tag}) = {s[f'V_{tag}']:.4f} +/- {s[f'V_{tag}_stderr']:.4f}  "
                  f"a = {s[f'a_{tag}']:.4f}  delta = {s[f'delta_{tag}']:.4f}", file=stream)
        if s["V_E"] is not None:
            print(f"V_E = {s['V_E']:.3f}", file=stream)
    elif result.name == "g2-storage" and "C" in s:
        print(f"fit: C = {s['C']:.4g}  A = {s['A']:.4g}  B = {s['B']:.4g}  "
              f"residual = {s['residual']:.3%}", file=stream)
    for line in result.summary_lines():
        print(line, file=stream)


def _write(out_dir, files):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_bytes(text.encode("utf-8"))


def _manifest(args, config, files, status, exit_code, error=None):
    return {
        "scenario": args.scenario,
        "config_path": args.config,
        "output_dir": str(args.out),
        "master_seed": None if config is None else config.master_seed,
        "trials_override": args.trials,
        "files": [{"path": name, "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest()}
                  for name, text in sorted(files.items())],
        "status": status,
        "exit_code": exit_code,
        "error": error,
    }


def run(args, stream=None):
    """Execute a parsed ``run`` command and return the exit status."""
    stream = stream or sys.stdout
    out_dir = Path(args.out)
    config, files = None, {}
    try:
        config = _load_config(args)
        result = _run_scenario(args, config)
    except (ConfigurationError, ValueError) as exc:
        if isinstance(exc, (FitError, InsufficientStatistics)):
            code, status = EXIT_ASSERTION, "error"
        else:
            code, status = EXIT_CONFIG, "config-error"
        print(f"qmemsim: {exc}", file=sys.stderr)
        _try_manifest(out_dir, _manifest(args, config, files, status, code, str(exc)))
        return code
    files = _outputs(result, args.format)
    code = EXIT_OK if result.passed else EXIT_ASSERTION
    files["manifest.json"] = json.dumps(
        _manifest(args, config, dict(files), result.status, code), indent=2, sort_keys=True) + "\n"
    try:
        _write(out_dir, files)
    except OSError as exc:
        print(f"qmemsim: cannot write to {out_dir}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _print_summary(result, stream)
    return code


def _try_manifest(out_dir, manifest):
    try:
        _write(out_dir, {"manifest.json": json.dumps(manifest, indent=2, sort_keys=True) + "\n"})
    except OSError:
        pass


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    if args.command == "run":
        return run(args)
    return EXIT_CONFIG  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
