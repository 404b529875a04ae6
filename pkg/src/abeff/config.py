"""Run configuration: INI-style file parsing, cross-field validation, and the
fully-echoed mapping used for manifests.

One file determines one run.  Every field has a documented default; parsing
echoes defaulted values explicitly so the manifest always records the
complete physical configuration.  Constraint violations are hard errors
naming the violated inequality.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import dataclass, field, replace

from .experiments import ExperimentSetup, SweepConfig
from .geometry import GridSpec, TubeSpec
from .potentials import (
    BackgroundSpec,
    PulseProfile,
    PulseRegionSpec,
    calibrate_amplitude_for_phase,
)
from .propagation import SolverError, SolverParams
from .states import make_envelope

__all__ = ["RunConfig", "OutputSpec", "ConfigError", "parse_config", "default_config"]


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    snapshot_cadence: str = "probes"  # probes | none
    deterministic: bool = True

    def __post_init__(self):
        if self.snapshot_cadence not in ("probes", "none"):
            raise ConfigError(
                f"snapshot_cadence must be 'probes' or 'none', got {self.snapshot_cadence!r}"
            )


@dataclass(frozen=True)
class RunConfig:
    """Validated bundle of every physical and numerical parameter of a run."""

    mass: float = 1.0
    tube: TubeSpec = field(default_factory=TubeSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    pulse_shape: str = "quartic_bump"
    pulse_half_support: float = 2.0
    target_phi: float = math.pi / 2
    region: PulseRegionSpec | None = None
    background: BackgroundSpec = field(default_factory=BackgroundSpec)
    envelope_radius: float = 2.5
    envelope_kind: str = "bump_c2"
    envelope_normalization: float = 1.0
    solver: SolverParams = field(default_factory=SolverParams)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputSpec = field(default_factory=OutputSpec)

    def profile(self, target_phi: float | None = None) -> PulseProfile | None:
        """Pulse calibrated to the requested flux phase; None for a zero phase
        (pulse absent)."""
        phi = self.target_phi if target_phi is None else target_phi
        if phi == 0.0:
            return None
        base = PulseProfile(amplitude=1.0, half_support=self.pulse_half_support,
                            shape=self.pulse_shape)
        return calibrate_amplitude_for_phase(phi, base)

    def effective_region(self) -> PulseRegionSpec:
        if self.region is not None:
            return self.region
        dx1 = self.grid.spacing[0]
        outer = min(self.tube.inner_halfwidth, self.tube.length / 2) - dx1
        return PulseRegionSpec(taper_inner=self.tube.flat_radius, taper_outer=outer)

    def grid_for_tier(self, tier: str) -> GridSpec:
        if tier == "base":
            return self.grid
        if tier == "halved_dx_dt":
            n1, n2 = self.grid.points
            return replace(self.grid, points=(2 * n1, 2 * n2))
        raise ConfigError(f"unknown resolution tier {tier!r}")

    def solver_for_tier(self, tier: str) -> SolverParams:
        if tier == "base":
            return self.solver
        return replace(self.solver, phase_cap=self.solver.phase_cap / 2.0,
                       dt=None if self.solver.dt is None else self.solver.dt / 2.0)

    def setup(self, tier: str = "base") -> ExperimentSetup:
        grid = self.grid_for_tier(tier)
        envelope = make_envelope(
            self.envelope_radius, grid, kind=self.envelope_kind,
            normalization=self.envelope_normalization,
            support_limit=self.tube.flat_radius - self.pulse_half_support,
        )
        return ExperimentSetup(
            grid=grid, tube=self.tube, region=self.effective_region(),
            envelope=envelope, solver=self.solver_for_tier(tier), mass=self.mass,
        )

    def validate(self) -> None:
        margin = self.tube.flat_radius - self.pulse_half_support
        if not self.envelope_radius < margin:
            raise ConfigError(
                "envelope.radius < flat_radius - pulse.half_support violated: "
                f"{self.envelope_radius} >= {margin}"
            )
        region = self.effective_region()
        if region.taper_inner < self.tube.flat_radius:
            raise ConfigError(
                "taper_inner >= flat_radius violated: "
                f"{region.taper_inner} < {self.tube.flat_radius}"
            )
        limit = min(self.tube.inner_halfwidth, self.tube.length / 2)
        if not region.taper_outer < limit:
            raise ConfigError(
                "taper_outer < min(inner_halfwidth, length/2) violated: "
                f"{region.taper_outer} >= {limit}"
            )
        half_r = self.pulse_half_support + self.envelope_radius
        for name, dist in (("start", self.solver.start_distance),
                           ("stop", self.solver.stop_distance)):
            if not dist > half_r:
                raise ConfigError(
                    f"solver.{name}_distance > half_support + envelope.radius violated: "
                    f"{dist} <= {half_r}"
                )
        reach = max(self.solver.start_distance, self.solver.stop_distance) + self.envelope_radius
        if self.grid.extent[1] / 2 < reach:
            raise ConfigError(
                "grid X2/2 >= max(start, stop) + envelope.radius violated: "
                f"{self.grid.extent[1] / 2} < {reach}"
            )
        if self.tube.outer_halfwidth >= self.grid.extent[0] / 2:
            raise ConfigError(
                "tube.outer_halfwidth < grid X1/2 violated: "
                f"{self.tube.outer_halfwidth} >= {self.grid.extent[0] / 2}"
            )
        v_max = max(self.sweep.velocities)
        if min(self.sweep.velocities) <= 1.0:
            raise ConfigError(
                f"sweep velocities must exceed 1 (error envelope domain), got {self.sweep.velocities}"
            )
        v_limit = self.grid_for_tier(self.sweep.resolution_tier).max_resolved_velocity(
            self.mass, self.solver.points_per_wavelength
        )
        if v_max > v_limit * (1.0 + 1e-12):
            raise ConfigError(
                "grid resolution rule dx2 * mass * v_max <= 2*pi/PPW violated: "
                f"v_max {v_max} > limit {v_limit:.6g}"
            )
        dx = max(self.grid.spacing)
        if self.envelope_radius / dx < 16.0:
            raise ConfigError(
                "envelope.radius resolved by >= 16 cells violated: "
                f"{self.envelope_radius / dx:.3g} cells at dx = {dx}"
            )

    def to_mapping(self) -> dict:
        """Complete, explicitly-defaulted configuration echo."""
        region = self.effective_region()
        return {
            "run": {"mass": self.mass, "hbar": 1.0},
            "geometry": {
                "inner_halfwidth": self.tube.inner_halfwidth,
                "outer_halfwidth": self.tube.outer_halfwidth,
                "length": self.tube.length,
                "flat_radius": self.tube.flat_radius,
            },
            "grid": {
                "extent": list(self.grid.extent),
                "points": list(self.grid.points),
                "spacing": list(self.grid.spacing),
                "absorber_width": self.grid.absorber_width,
            },
            "pulse": {
                "shape": self.pulse_shape,
                "half_support": self.pulse_half_support,
                "target_phi": self.target_phi,
                "amplitude": (lambda p: p.amplitude if p is not None else 0.0)(self.profile()),
            },
            "pulse_region": {
                "taper_inner": region.taper_inner,
                "taper_outer": region.taper_outer,
            },
            "background": {
                "enabled": self.background.enabled,
                "strength": self.background.strength,
                "rho": self.background.rho,
                "mu": self.background.mu,
            },
            "envelope": {
                "radius": self.envelope_radius,
                "kind": self.envelope_kind,
                "normalization": self.envelope_normalization,
            },
            "solver": {
                "scheme": self.solver.scheme,
                "cap_strength": self.solver.cap_strength,
                "start_distance": self.solver.start_distance,
                "stop_distance": self.solver.stop_distance,
                "probe_count": self.solver.probe_count,
                "phase_cap": self.solver.phase_cap,
                "points_per_wavelength": self.solver.points_per_wavelength,
                "dt": self.solver.dt,
                "norm_tolerance": self.solver.norm_tolerance,
            },
            "sweep": {
                "velocities": list(self.sweep.velocities),
                "bg_mode": self.sweep.bg_mode,
                "rho": self.sweep.rho,
                "mu": self.sweep.mu,
                "bg_strength": self.sweep.bg_strength,
                "target_phi": self.sweep.target_phi,
                "resolution_tier": self.sweep.resolution_tier,
            },
            "output": {
                "directory": self.output.directory,
                "snapshot_cadence": self.output.snapshot_cadence,
                "deterministic": self.output.deterministic,
            },
        }

    def config_hash(self) -> str:
        payload = json.dumps(self.to_mapping(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


def default_config() -> RunConfig:
    cfg = RunConfig()
    cfg.validate()
    return cfg


_FLOAT_KEYS = {
    "run": ("mass",),
    "geometry": ("inner_halfwidth", "outer_halfwidth", "length", "flat_radius"),
    "grid": ("absorber_width",),
    "pulse": ("half_support", "target_phi"),
    "pulse_region": ("taper_inner", "taper_outer"),
    "background": ("strength", "rho", "mu"),
    "envelope": ("radius", "normalization"),
    "solver": ("cap_strength", "start_distance", "stop_distance", "phase_cap",
               "points_per_wavelength", "dt", "norm_tolerance"),
    "sweep": ("rho", "mu", "bg_strength", "target_phi"),
}

_KNOWN_KEYS = {
    "run": {"mass"},
    "geometry": {"inner_halfwidth", "outer_halfwidth", "length", "flat_radius"},
    "grid": {"extent", "points", "absorber_width"},
    "pulse": {"shape", "half_support", "target_phi"},
    "pulse_region": {"taper_inner", "taper_outer"},
    "background": {"enabled", "strength", "rho", "mu"},
    "envelope": {"radius", "kind", "normalization"},
    "solver": {"scheme", "cap_strength", "start_distance", "stop_distance",
               "probe_count", "phase_cap", "points_per_wavelength", "dt",
               "norm_tolerance"},
    "sweep": {"velocities", "bg_mode", "rho", "mu", "bg_strength", "target_phi",
              "resolution_tier"},
    "output": {"directory", "snapshot_cadence", "deterministic"},
}


class _SectionReader:
    def __init__(self, parser: configparser.ConfigParser, section: str):
        self.section = section
        self.present = parser.has_section(section)
        self.raw = dict(parser[section]) if self.present else {}
        unknown = set(self.raw) - _KNOWN_KEYS.get(section, set())
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")

    def fget(self, key: str, default: float | None) -> float | None:
        if key not in self.raw:
            return default
        try:
            return float(self.raw[key])
        except ValueError as exc:
            raise ConfigError(f"[{self.section}] {key}: not a number: {self.raw[key]!r}") from exc

    def iget(self, key: str, default: int) -> int:
        if key not in self.raw:
            return default
        try:
            return int(self.raw[key])
        except ValueError as exc:
            raise ConfigError(f"[{self.section}] {key}: not an integer: {self.raw[key]!r}") from exc

    def sget(self, key: str, default: str) -> str:
        return self.raw.get(key, default)

    def bget(self, key: str, default: bool) -> bool:
        if key not in self.raw:
            return default
        val = self.raw[key].strip().lower()
        if val in ("true", "yes", "on", "1"):
            return True
        if val in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"[{self.section}] {key}: not a boolean: {self.raw[key]!r}")

    def pair(self, key: str, default: tuple, cast) -> tuple:
        if key not in self.raw:
            return default
        parts = [p.strip() for p in self.raw[key].split(",")]
        if len(parts) != 2:
            raise ConfigError(f"[{self.section}] {key}: expected two comma-separated values")
        try:
            return (cast(parts[0]), cast(parts[1]))
        except ValueError as exc:
            raise ConfigError(f"[{self.section}] {key}: bad value: {self.raw[key]!r}") from exc

    def float_list(self, key: str, default: tuple) -> tuple:
        if key not in self.raw:
            return default
        try:
            return tuple(float(p) for p in self.raw[key].split(",") if p.strip())
        except ValueError as exc:
            raise ConfigError(f"[{self.section}] {key}: bad list: {self.raw[key]!r}") from exc


def parse_config(path: str) -> RunConfig:
    """Read, default-fill, and validate a run configuration file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as handle:
            parser.read_file(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from exc

    known_sections = set(_KNOWN_KEYS)
    unknown = set(parser.sections()) - known_sections
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    base = RunConfig()
    try:
        run = _SectionReader(parser, "run")
        geo = _SectionReader(parser, "geometry")
        grd = _SectionReader(parser, "grid")
        pul = _SectionReader(parser, "pulse")
        reg = _SectionReader(parser, "pulse_region")
        bgr = _SectionReader(parser, "background")
        env = _SectionReader(parser, "envelope")
        sol = _SectionReader(parser, "solver")
        swp = _SectionReader(parser, "sweep")
        out = _SectionReader(parser, "output")

        tube = TubeSpec(
            inner_halfwidth=geo.fget("inner_halfwidth", base.tube.inner_halfwidth),
            outer_halfwidth=geo.fget("outer_halfwidth", base.tube.outer_halfwidth),
            length=geo.fget("length", base.tube.length),
            flat_radius=geo.fget("flat_radius", base.tube.flat_radius),
        )
        grid = GridSpec(
            extent=grd.pair("extent", base.grid.extent, float),
            points=grd.pair("points", base.grid.points, int),
            absorber_width=grd.fget("absorber_width", base.grid.absorber_width),
        )
        region = None
        if reg.present:
            region = PulseRegionSpec(
                taper_inner=reg.fget("taper_inner", tube.flat_radius),
                taper_outer=reg.fget("taper_outer", min(tube.inner_halfwidth, tube.length / 2)
                                      - grid.spacing[0]),
            )
        background = BackgroundSpec(
            strength=bgr.fget("strength", base.background.strength),
            rho=bgr.fget("rho", base.background.rho),
            mu=bgr.fget("mu", base.background.mu),
            enabled=bgr.bget("enabled", base.background.enabled),
        )
        solver = SolverParams(
            scheme=sol.sget("scheme", base.solver.scheme),
            cap_strength=sol.fget("cap_strength", base.solver.cap_strength),
            start_distance=sol.fget("start_distance", base.solver.start_distance),
            stop_distance=sol.fget("stop_distance", base.solver.stop_distance),
            probe_count=sol.iget("probe_count", base.solver.probe_count),
            phase_cap=sol.fget("phase_cap", base.solver.phase_cap),
            points_per_wavelength=sol.fget("points_per_wavelength",
                                           base.solver.points_per_wavelength),
            dt=sol.fget("dt", base.solver.dt),
            norm_tolerance=sol.fget("norm_tolerance", base.solver.norm_tolerance),
        )
        sweep = SweepConfig(
            velocities=swp.float_list("velocities", base.sweep.velocities),
            bg_mode=swp.sget("bg_mode", base.sweep.bg_mode),
            rho=swp.fget("rho", base.sweep.rho),
            mu=swp.fget("mu", base.sweep.mu),
            bg_strength=swp.fget("bg_strength", base.sweep.bg_strength),
            target_phi=swp.fget("target_phi", base.sweep.target_phi),
            resolution_tier=swp.sget("resolution_tier", base.sweep.resolution_tier),
        )
        output = OutputSpec(
            directory=out.sget("directory", base.output.directory),
            snapshot_cadence=out.sget("snapshot_cadence", base.output.snapshot_cadence),
            deterministic=out.bget("deterministic", base.output.deterministic),
        )
        cfg = RunConfig(
            mass=run.fget("mass", base.mass),
            tube=tube,
            grid=grid,
            pulse_shape=pul.sget("shape", base.pulse_shape),
            pulse_half_support=pul.fget("half_support", base.pulse_half_support),
            target_phi=pul.fget("target_phi", base.target_phi),
            region=region,
            background=background,
            envelope_radius=env.fget("radius", base.envelope_radius),
            envelope_kind=env.sget("kind", base.envelope_kind),
            envelope_normalization=env.fget("normalization", base.envelope_normalization),
            solver=solver,
            sweep=sweep,
            output=output,
        )
    except ConfigError:
        raise
    except (ValueError, SolverError) as exc:
        raise ConfigError(str(exc)) from exc

    try:
        cfg.validate()
    except (ValueError, SolverError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg
