"""Command-line surface: every pipeline as a reproducible run.

Each subcommand writes its CSV/JSON artifacts plus a run manifest with
SHA-256 checksums into the output directory.  Runs are deterministic given
(subcommand, config, seed): stochastic subcommands require an explicit seed
and no artifact embeds wall-clock state.  All files are written atomically
(temp file in the target directory, then rename).

Angles are accepted in degrees on the command line; every file artifact
stores radians.

Exit codes: 0 success, 1 configuration/usage error, 2 numeric contract
violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

from . import emulator, protocol, scenarios
from .emulator import ConfigError
from .statekit import ContractViolation

__all__ = ["main"]

DEAD_ZONE_THRESHOLD = 1e-9


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; route them through
    # ConfigError so usage problems land on exit code 1 instead.
    def error(self, message):
        raise ConfigError(message)


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.tmp-{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _schema(name: str) -> dict:
    ref = resources.files("iqpe.schemas").joinpath(name)
    return json.loads(ref.read_text(encoding="utf-8"))


def _write_json(out_dir: Path, name: str, payload: dict, schema_name: str) -> None:
    jsonschema.validate(payload, _schema(schema_name))
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    _atomic_write(out_dir / name, text.encode("ascii"))


def _write_csv(out_dir: Path, name: str, header: str, columns) -> None:
    lines = [header]
    for row in zip(*columns):
        lines.append(",".join(f"{float(v):.17g}" for v in row))
    _atomic_write(out_dir / name, ("\n".join(lines) + "\n").encode("ascii"))


def _write_manifest(
    out_dir: Path,
    subcommand: str,
    config_path: Optional[str],
    seed: Optional[int],
    parameters: dict,
) -> None:
    checksums = {}
    for path in sorted(out_dir.iterdir()):
        if path.name == "manifest.json" or not path.is_file():
            continue
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        checksums[path.name] = f"sha256:{digest}"
    payload = {
        "subcommand": subcommand,
        "config_path": config_path,
        "seed": seed,
        "parameters": parameters,
        "output_dir": str(out_dir),
        "artifact_checksums": checksums,
    }
    _write_json(out_dir, "manifest.json", payload, "manifest.v1.json")


def _prepare_out(raw: str) -> Path:
    out_dir = Path(raw)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {raw!r}: {exc}") from None
    return out_dir


def _cmd_qfi_map(args) -> None:
    out_dir = _prepare_out(args.out)
    if args.scenario == "birefringence":
        rows = scenarios.birefringence_qfi_map(args.resolution)
    else:
        if args.order_n is None:
            raise ConfigError("--order-n is required for the rotation scenario")
        rows = scenarios.rotation_qfi_map(args.order_n, args.resolution)
    sqpe = [row.qfi_sqpe for row in rows]
    iqpe_vals = [row.qfi_iqpe for row in rows]
    dead = [row for row in rows if row.qfi_sqpe < DEAD_ZONE_THRESHOLD]
    csv_lines = ["theta,phi,qfi_sqpe,qfi_iqpe"]
    for row in rows:
        csv_lines.append(
            f"{row.theta:.17g},{row.phi:.17g},{row.qfi_sqpe:.17g},{row.qfi_iqpe:.17g}"
        )
    _atomic_write(out_dir / "map.csv", ("\n".join(csv_lines) + "\n").encode("ascii"))
    summary = {
        "scenario": args.scenario,
        "order_n": args.order_n,
        "resolution": args.resolution,
        "qfi_sqpe_min": min(sqpe),
        "qfi_sqpe_max": max(sqpe),
        "qfi_iqpe_min": min(iqpe_vals),
        "qfi_iqpe_max": max(iqpe_vals),
        "dead_zone": {
            "threshold": DEAD_ZONE_THRESHOLD,
            "count": len(dead),
            "points": [{"theta": row.theta, "phi": row.phi} for row in dead],
        },
    }
    _write_json(out_dir, "summary.json", summary, "qfi_map_summary.v1.json")
    _write_manifest(
        out_dir,
        "qfi-map",
        None,
        None,
        {"scenario": args.scenario, "order_n": args.order_n, "resolution": args.resolution},
    )


def _cmd_kerr(args) -> None:
    out_dir = _prepare_out(args.out)
    truncation = args.truncation
    if truncation is None:
        truncation = scenarios.kerr_truncation(args.nbar)
    qfi_sqpe, qfi_iqpe = scenarios.kerr_qfi(args.nbar, truncation)
    payload = {
        "nbar": args.nbar,
        "truncation": truncation,
        "qfi_sqpe": qfi_sqpe,
        "qfi_iqpe": qfi_iqpe,
    }
    _write_json(out_dir, "kerr.json", payload, "kerr.v1.json")
    _write_manifest(
        out_dir, "kerr", None, None, {"nbar": args.nbar, "truncation": truncation}
    )


def _cmd_rotation_sim(args) -> None:
    out_dir = _prepare_out(args.out)
    proto = protocol.RotationProtocol(args.l, math.radians(args.delta_phi_deg))
    alpha_true = math.radians(args.alpha_deg)
    mean, stddev = protocol.monte_carlo_precision(
        proto, alpha_true, args.nu, args.trials, args.seed
    )
    crb = protocol.crb_stddev(proto, args.nu)
    payload = {
        "l": args.l,
        "alpha_true_rad": alpha_true,
        "delta_phi_rad": proto.delta_phi,
        "nu": args.nu,
        "trials": args.trials,
        "seed": args.seed,
        "mean_rad": mean,
        "empirical_stddev": stddev,
        "crb": crb,
        "ratio": stddev / crb,
    }
    _write_json(out_dir, "rotation_sim.json", payload, "rotation_sim.v1.json")
    _write_manifest(
        out_dir,
        "rotation-sim",
        None,
        args.seed,
        {
            "l": args.l,
            "alpha_deg": args.alpha_deg,
            "delta_phi_deg": args.delta_phi_deg,
            "nu": args.nu,
            "trials": args.trials,
        },
    )


def _experiment_artifacts(out_dir: Path, run: emulator.ChannelRun) -> None:
    t = run.record.times()
    _write_csv(
        out_dir, f"record_l{run.l}.csv", "t,ch1,ch2", (t, run.record.ch1, run.record.ch2)
    )
    _write_csv(out_dir, f"demod_l{run.l}.csv", "t,phi,alpha", (t, run.phi, run.alpha))


def _cmd_experiment(args) -> None:
    out_dir = _prepare_out(args.out)
    cfg = emulator.parse_run_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if cfg.mode == "fit":
        result = emulator.run_fit_pipeline(cfg)
        for run in result.runs:
            _experiment_artifacts(out_dir, run)
        summary = {
            "mode": "fit",
            "phi_means": [[l, phi] for l, phi in result.phi_means],
            "fit": {
                "alpha_hat_rad": result.fit.alpha_hat,
                "delta_phi_hat_rad": result.fit.delta_phi_hat,
                "r_square": result.fit.r_square,
            },
        }
        _write_json(out_dir, "summary.json", summary, "experiment_fit_summary.v1.json")
    else:
        result = emulator.run_spectrum_pipeline(cfg)
        _experiment_artifacts(out_dir, result.run)
        _write_csv(
            out_dir,
            "spectrum.csv",
            "f_hz,amp_rad",
            (result.spectrum.frequencies, result.spectrum.amplitudes),
        )
        summary = {
            "mode": "spectrum",
            "l": result.run.l,
            "signal_peak_hz": result.spectrum.signal_peak[0],
            "signal_peak_rad": result.spectrum.signal_peak[1],
            "noise_floor_rad": result.spectrum.noise_floor,
        }
        _write_json(
            out_dir, "summary.json", summary, "experiment_spectrum_summary.v1.json"
        )
    _write_manifest(
        out_dir, "experiment", str(args.config), cfg.seed, {"mode": cfg.mode}
    )


def _cmd_fit(args) -> None:
    out_dir = _prepare_out(args.out)
    measurements = []
    try:
        with open(args.input, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "l,phi_rad":
                raise ConfigError(
                    f"{args.input}:1: expected header 'l,phi_rad', got {header!r}"
                )
            for lineno, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 2:
                    raise ConfigError(f"{args.input}:{lineno}: expected 'l,phi_rad'")
                measurements.append((int(parts[0]), float(parts[1])))
    except OSError as exc:
        raise ConfigError(f"cannot read {args.input!r}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{args.input}: bad numeric value: {exc}") from None
    report = emulator.fit_oam_series(measurements)
    payload = {
        "alpha_hat_rad": report.alpha_hat,
        "delta_phi_hat_rad": report.delta_phi_hat,
        "r_square": report.r_square,
        "n_points": len(measurements),
    }
    _write_json(out_dir, "fit.json", payload, "fit.v1.json")
    _write_manifest(out_dir, "fit", str(args.input), None, {"n_points": len(measurements)})


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="iqpe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_map = sub.add_parser("qfi-map", help="QFI maps over a sphere grid")
    p_map.add_argument("--scenario", required=True, choices=["birefringence", "rotation"])
    p_map.add_argument("--order-n", type=int, default=None, help="mode order (rotation)")
    p_map.add_argument("--resolution", type=int, default=32)
    p_map.add_argument("--out", required=True)
    p_map.set_defaults(func=_cmd_qfi_map)

    p_kerr = sub.add_parser("kerr", help="coherent-probe phase-shift QFI pair")
    p_kerr.add_argument("--nbar", type=float, required=True)
    p_kerr.add_argument("--truncation", type=int, default=None)
    p_kerr.add_argument("--out", required=True)
    p_kerr.set_defaults(func=_cmd_kerr)

    p_sim = sub.add_parser("rotation-sim", help="Monte-Carlo estimator precision")
    p_sim.add_argument("--l", type=int, required=True, help="OAM value")
    p_sim.add_argument("--alpha-deg", type=float, required=True, help="true angle, degrees")
    p_sim.add_argument("--delta-phi-deg", type=float, default=0.0)
    p_sim.add_argument("--nu", type=int, default=10**6, help="photons per trial")
    p_sim.add_argument("--trials", type=int, default=10_000)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=_cmd_rotation_sim)

    p_exp = sub.add_parser("experiment", help="full detector pipeline from a config file")
    p_exp.add_argument("--config", required=True)
    p_exp.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_exp.add_argument("--out", required=True)
    p_exp.set_defaults(func=_cmd_experiment)

    p_fit = sub.add_parser("fit", help="linear phase-vs-OAM fit of a measurement CSV")
    p_fit.add_argument("--input", required=True, help="CSV with header l,phi_rad")
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=_cmd_fit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ContractViolation as exc:
        print(f"numeric contract violation: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
