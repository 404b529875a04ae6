"""Command-line entry point: experiment dispatch and deterministic artifacts.

Subcommands: sweep, single, smatrix, fringe, leakage, validate.  Every data
artifact (CSV tables, manifest.json, binary snapshots) is byte-deterministic
for a fixed configuration, except the runtime_s column of curves.csv.
Exit codes: 0 success, 2 configuration error, 3 resolution-floor failure,
4 solver failure, 5 invariant failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, default_config, parse_config
from .experiments import (
    FloorError,
    FringeResult,
    fit_rate,
    fringe_experiment,
    leakage_scan,
    model_error_envelope,
    uniform_error_curve,
)
from .geometry import GridSpec
from .potentials import accumulated_phase, remaining_phase, total_phase
from .propagation import SolverError, approx_incoming_solution
from .snapshots import SnapshotHeader, write_snapshot
from .spectral import set_fft_workers
from .states import commensurate_velocity
from .validation import InvariantError, run_invariant_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FLOOR = 3
EXIT_SOLVER = 4
EXIT_INVARIANT = 5

SLOPE_BAND_HALFWIDTH = 0.3

LEAKAGE_VELOCITIES = (4.0, 8.0, 16.0)
LEAKAGE_RADIUS = 1.0
LEAKAGE_TIME = 4.0
LEAKAGE_GRID = GridSpec(extent=(38.4, 38.4), points=(512, 512), absorber_width=0.0)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _write_manifest(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=1, allow_nan=True) + "\n")


def _base_manifest(cfg: RunConfig, tier: str) -> dict:
    profile = cfg.profile()
    phi = total_phase(profile)
    return {
        "config": cfg.to_mapping(),
        "config_hash": cfg.config_hash(),
        "tier": tier,
        "derived": {
            "phi": phi,
            "accumulated_phase_at_0": float(accumulated_phase(0.0, max(cfg.sweep.velocities), profile)),
            "remaining_phase_at_0": float(remaining_phase(0.0, max(cfg.sweep.velocities), profile)),
            "error_model_rho": cfg.sweep.model_rho(),
            "velocities_actual": [
                commensurate_velocity(v, cfg.mass, cfg.grid_for_tier(tier))
                for v in cfg.sweep.velocities
            ],
        },
    }


def _slope_band(model_rho: float) -> tuple[float, float]:
    exponent = -1.0 if model_rho >= 1.0 else -model_rho
    return (exponent - SLOPE_BAND_HALFWIDTH, exponent + SLOPE_BAND_HALFWIDTH)


def cmd_sweep(cfg: RunConfig, out: Path, tier: str) -> int:
    setup = cfg.setup(tier)
    profile = cfg.profile() if cfg.target_phi != 0.0 else None
    sweep = cfg.sweep
    if sweep.bg_mode != "off" and sweep.target_phi == 0.0:
        profile = None
    curve = uniform_error_curve(setup, sweep, profile)

    rows = [
        [r.v_requested, r.v, r.sup_error, r.floor, e, r.phase_error, r.runtime_s]
        for r, e in zip(curve.results, curve.model_E)
    ]
    _write_csv(out / "curves.csv",
               ["v_requested", "v_actual", "sup_error", "floor", "model_E",
                "phase_error", "runtime_s"],
               rows)

    manifest = _base_manifest(cfg, tier)
    band = _slope_band(sweep.model_rho())
    manifest["sweep"] = {
        "h2_norm": curve.h2,
        "conclusive": curve.conclusive,
        "c_fit": curve.c_fit,
        "slope": curve.fit.slope if curve.fit else None,
        "intercept": curve.fit.intercept if curve.fit else None,
        "residual": curve.fit.residual if curve.fit else None,
        "slope_half_width": curve.fit.half_width if curve.fit else None,
        "slope_band": list(band),
        "slope_in_band": (curve.fit is not None and band[0] <= curve.fit.slope <= band[1]),
        "points": [
            {
                "v_requested": r.v_requested,
                "v": r.v,
                "sup_error": r.sup_error,
                "sup_error_time": r.sup_error_time,
                "floor": r.floor,
                "passed_floor": r.passed_floor,
                "phase_error": r.phase_error,
                "slice0_error": r.slice0_error,
                "scattering_distance": r.scattering_distance,
                "scattering_phase": r.scattering_phase,
                "norm_drift": r.norm_drift,
            }
            for r in curve.results
        ],
    }
    _write_manifest(out / "manifest.json", manifest)

    if not curve.conclusive:
        failing = [r.v for r in curve.results if not r.passed_floor]
        raise FloorError(
            f"sweep inconclusive: fewer than 4 points clear 5x their control floor "
            f"(failing velocities: {failing})"
        )
    print(f"sweep: slope = {curve.fit.slope:.4f} (band {band[0]:.2f}..{band[1]:.2f}), "
          f"C_fit = {curve.c_fit:.4g}")
    return EXIT_OK


def cmd_single(cfg: RunConfig, out: Path, tier: str) -> int:
    setup = cfg.setup(tier)
    profile = cfg.profile()
    v = commensurate_velocity(max(cfg.sweep.velocities), cfg.mass, setup.grid)
    masks = setup.masks()

    from .experiments import _ErrorProbe

    phi_v = None
    from .states import boost

    phi_v = boost(setup.envelope, cfg.mass, v)
    probe = _ErrorProbe(phi_v, profile, v, cfg.mass, setup.grid, masks)
    snapshots: list[tuple[float, np.ndarray]] = []

    def on_probe(t, psi):
        probe(t, psi)
        if cfg.output.snapshot_cadence == "probes":
            snapshots.append((t, psi.copy()))

    approx_incoming_solution(
        setup.envelope, v, cfg.mass, setup.tube, profile, setup.region,
        cfg.background, setup.solver, masks=masks, on_probe=on_probe,
    )

    rows = [[t, e] for t, e in probe.errors]
    _write_csv(out / "errors.csv", ["t", "ansatz_error"], rows)

    manifest = _base_manifest(cfg, tier)
    manifest["single"] = {"v": v, "probe_count": len(probe.errors),
                          "sup_error": max(e for _, e in probe.errors)}
    _write_manifest(out / "manifest.json", manifest)

    grid = setup.grid
    origin = (-grid.extent[0] / 2, -grid.extent[1] / 2)
    for idx, (t, psi) in enumerate(snapshots):
        header = SnapshotHeader(dims=grid.points, spacing=grid.spacing, origin=origin,
                                time=t, velocity=v, config_hash=cfg.config_hash())
        write_snapshot(psi, header, out / f"snapshot_{idx:04d}.bin")
    print(f"single: v = {v:.4f}, sup error = {manifest['single']['sup_error']:.4e}, "
          f"{len(snapshots)} snapshots")
    return EXIT_OK


def cmd_smatrix(cfg: RunConfig, out: Path, tier: str) -> int:
    setup = cfg.setup(tier)
    profile = cfg.profile()
    curve = uniform_error_curve(setup, cfg.sweep, profile)
    phi = total_phase(profile)

    rows = []
    for r in curve.results:
        deviation = abs(math.remainder(r.scattering_phase + phi, 2 * math.pi))
        rows.append([r.v_requested, r.v, r.scattering_distance, r.scattering_phase, deviation])
    _write_csv(out / "scattering.csv",
               ["v_requested", "v_actual", "s_distance", "s_phase", "phase_deviation"],
               rows)

    passing = [r for r in curve.results if r.passed_floor]
    fit = fit_rate([r.v for r in passing], [r.scattering_distance for r in passing]) \
        if len(passing) >= 4 else None
    manifest = _base_manifest(cfg, tier)
    manifest["smatrix"] = {
        "slope": fit.slope if fit else None,
        "slope_half_width": fit.half_width if fit else None,
        "phase_target": -phi,
        "points": [
            {"v": r.v, "distance": r.scattering_distance, "phase": r.scattering_phase,
             "passed_floor": r.passed_floor}
            for r in curve.results
        ],
    }
    _write_manifest(out / "manifest.json", manifest)
    if fit is None:
        raise FloorError("scattering sweep inconclusive: fewer than 4 points clear the floor")
    print(f"smatrix: distance slope = {fit.slope:.4f}, "
          f"phase(v_max) = {rows[-1][3]:.4f} (target {-phi:.4f})")
    return EXIT_OK


def cmd_fringe(cfg: RunConfig, out: Path, tier: str) -> int:
    setup = cfg.setup(tier)
    profile = cfg.profile()
    result: FringeResult = fringe_experiment(setup, max(cfg.sweep.velocities), profile,
                                             background=cfg.background)
    rows = [[t, i] for t, i in zip(result.thetas, result.intensity)]
    _write_csv(out / "interferogram.csv", ["theta", "intensity"], rows)

    manifest = _base_manifest(cfg, tier)
    manifest["fringe"] = {
        "v": result.v,
        "theta_star": result.theta_star,
        "theta_star_grid": result.theta_star_grid,
        "visibility": result.visibility,
        "relative_phase": result.relative_phase,
        "phi": total_phase(profile),
    }
    _write_manifest(out / "manifest.json", manifest)
    print(f"fringe: theta* = {result.theta_star:.4f} (phi = {total_phase(profile):.4f}), "
          f"visibility = {result.visibility:.4f}")
    return EXIT_OK


def cmd_leakage(cfg: RunConfig, out: Path, tier: str) -> int:
    table = leakage_scan(LEAKAGE_RADIUS, LEAKAGE_VELOCITIES, LEAKAGE_TIME, cfg.mass,
                         LEAKAGE_GRID)
    rows = []
    prev = None
    for v, leak in table:
        ratio = (prev / leak) if (prev is not None and leak > 0.0) else math.nan
        rows.append([v, leak, ratio])
        prev = leak
    _write_csv(out / "leakage.csv", ["v", "leakage", "decay_from_previous"], rows)

    manifest = _base_manifest(cfg, tier)
    manifest["leakage"] = {
        "radius": LEAKAGE_RADIUS,
        "time": LEAKAGE_TIME,
        "points": [{"v": v, "leakage": l} for v, l in table],
    }
    _write_manifest(out / "manifest.json", manifest)
    print("leakage: " + ", ".join(f"v={v:g}: {l:.3e}" for v, l in table))
    return EXIT_OK


def cmd_validate(cfg: RunConfig, out: Path, tier: str) -> int:
    run_invariant_suite(verbose=True)
    return EXIT_OK


_COMMANDS = {
    "sweep": cmd_sweep,
    "single": cmd_single,
    "smatrix": cmd_smatrix,
    "fringe": cmd_fringe,
    "leakage": cmd_leakage,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="abe",
        description="Electric Aharonov-Bohm effect simulator: rate sweeps, "
                    "scattering phases, fringe demos, and invariant validation.",
    )
    parser.add_argument("subcommand", choices=sorted(_COMMANDS))
    parser.add_argument("--config", help="run configuration file (INI); defaults apply if omitted")
    parser.add_argument("--out", help="output directory (overrides [output] directory)")
    parser.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    parser.add_argument("--tier", choices=("base", "halved"), default=None,
                        help="resolution tier override")
    args = parser.parse_args(argv)

    set_fft_workers(args.threads)
    try:
        cfg = parse_config(args.config) if args.config else default_config()
        tier = {"base": "base", "halved": "halved_dx_dt"}[args.tier] if args.tier \
            else cfg.sweep.resolution_tier
        out = Path(args.out) if args.out else Path(cfg.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.subcommand](cfg, out, tier)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloorError as exc:
        print(f"resolution-floor failure: {exc}", file=sys.stderr)
        return EXIT_FLOOR
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except InvariantError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
