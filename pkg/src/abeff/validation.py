"""Runtime invariant suite behind the `validate` subcommand.

Fast structural and exact-identity checks: mask partition, line-of-sight
monotonicity, norm axioms, pulse support and phase algebra, the
translation/boost identity, Parseval, the constant-potential gauge
property, per-step unitarity, cutoff idempotence, and absorber
monotonicity.  Everything runs on small internal grids in a few seconds;
failures carry the offending values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .experiments import fit_rate, model_error_envelope
from .geometry import GridSpec, TubeSpec, build_masks, clear_line_of_sight, l2_norm, l2_norm_on_domain
from .potentials import (
    BackgroundSpec,
    PulseProfile,
    PulseRegionSpec,
    accumulated_phase,
    eval_pulse,
    remaining_phase,
    total_phase,
)
from .propagation import PotentialContext, SolverParams, run_interacting, verify_boost_identity
from .spectral import fft2
from .states import boost, commensurate_velocity, make_envelope, momentum_cutoff

__all__ = ["InvariantError", "CheckResult", "run_invariant_suite"]


class InvariantError(RuntimeError):
    """One or more runtime invariants failed."""


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def _small_grid() -> GridSpec:
    return GridSpec(extent=(12.8, 12.8), points=(128, 128), absorber_width=1.5)


def _small_tube() -> TubeSpec:
    return TubeSpec(inner_halfwidth=3.0, outer_halfwidth=4.5, length=6.0, flat_radius=2.0)


def _check_mask_partition() -> CheckResult:
    grid, tube = _small_grid(), _small_tube()
    masks = build_masks(grid, tube, 0.0)
    both = np.logical_and(masks.obstacle, masks.interior)
    either = np.logical_or(masks.obstacle, masks.interior)
    ok = not both.any() and either.all()
    return CheckResult("mask_partition", ok, f"overlap={int(both.sum())}, gaps={int((~either).sum())}")


def _check_mask_symmetry() -> CheckResult:
    grid, tube = _small_grid(), _small_tube()
    obst = build_masks(grid, tube, 0.0).obstacle
    sym1 = np.array_equal(obst, np.roll(obst[::-1, :], 1, axis=0))
    sym2 = np.array_equal(obst, np.roll(obst[:, ::-1], 1, axis=1))
    return CheckResult("mask_symmetry", sym1 and sym2, f"x1_mirror={sym1}, x2_mirror={sym2}")


def _check_clearance() -> CheckResult:
    tube = _small_tube()
    axis_ok = clear_line_of_sight(tube, (0.0, 1.0), tube.inner_halfwidth * 0.9)
    axis_edge = not clear_line_of_sight(tube, (0.0, 1.0), tube.inner_halfwidth)
    across = not clear_line_of_sight(tube, (1.0, 0.0), 0.5)
    mono = all(
        clear_line_of_sight(tube, (0.0, 1.0), r)
        for r in (0.1, 0.5, 1.0, 2.0, tube.inner_halfwidth * 0.9)
    )
    ok = axis_ok and axis_edge and across and mono
    return CheckResult("line_of_sight", ok,
                       f"axis={axis_ok}, edge_excluded={axis_edge}, across_blocked={across}, monotone={mono}")


def _check_norm_axioms() -> CheckResult:
    grid, tube = _small_grid(), _small_tube()
    masks = build_masks(grid, tube, 0.0)
    rng = np.random.default_rng(20240811)
    f = rng.standard_normal(grid.points) + 1j * rng.standard_normal(grid.points)
    g = rng.standard_normal(grid.points) + 1j * rng.standard_normal(grid.points)
    c = 2.0 - 3.0j
    homo = abs(l2_norm_on_domain(c * f, masks) - abs(c) * l2_norm_on_domain(f, masks))
    tri = l2_norm_on_domain(f + g, masks) - (l2_norm_on_domain(f, masks) + l2_norm_on_domain(g, masks))
    ok = homo < 1e-10 and tri < 1e-12
    return CheckResult("norm_axioms", ok, f"homogeneity={homo:.2e}, triangle_excess={tri:.2e}")


def _check_pulse_algebra() -> CheckResult:
    details = []
    ok = True
    for shape in ("quartic_bump", "smooth_plateau"):
        prof = PulseProfile(amplitude=1.3, half_support=1.7, shape=shape)
        phi = total_phase(prof)
        edge = max(abs(float(eval_pulse(prof, z))) for z in
                   (prof.half_support, -prof.half_support, 2 * prof.half_support))
        comp = max(
            abs(float(accumulated_phase(t, 3.0, prof)) + float(remaining_phase(t, 3.0, prof)) - phi)
            for t in np.linspace(-1.0, 1.0, 41)
        )
        ok = ok and edge == 0.0 and comp < 1e-12
        details.append(f"{shape}: edge={edge:.1e}, complement={comp:.2e}")
    quartic = PulseProfile(amplitude=1.0, half_support=1.0, shape="quartic_bump")
    flux_dev = abs(total_phase(quartic) - 16.0 / 15.0)
    ok = ok and flux_dev < 1e-10
    details.append(f"quartic_flux_dev={flux_dev:.2e}")
    return CheckResult("pulse_algebra", ok, "; ".join(details))


def _check_background_bound() -> CheckResult:
    try:
        BackgroundSpec(strength=1.0, rho=1.0, mu=0.5, enabled=True)
        rejected = False
    except ValueError:
        rejected = True
    bg = BackgroundSpec(strength=0.7, rho=1.5, mu=-0.25, enabled=True)
    from .potentials import eval_background
    vals_ok = True
    for t in (0.0, 1.5, -2.0):
        for r in (0.0, 3.0, 10.0):
            expect = 0.7 * (1 + abs(t)) ** (-0.25) * (1 + r) ** (-1.5)
            vals_ok = vals_ok and abs(float(eval_background(t, r, bg)) - expect) < 1e-14
    return CheckResult("background_bound", rejected and vals_ok,
                       f"constructor_rejects={rejected}, envelope_equality={vals_ok}")


def _check_boost_identity() -> CheckResult:
    grid = _small_grid()
    env = make_envelope(1.5, grid)
    v = commensurate_velocity(3.0, 1.0, grid)
    dev = max(verify_boost_identity(env, 1.0, v, t) for t in (0.0, 0.37, 1.4))
    return CheckResult("boost_identity", dev <= 1e-12, f"max_deviation={dev:.2e}")


def _check_parseval() -> CheckResult:
    grid = _small_grid()
    env = make_envelope(1.5, grid)
    space = l2_norm(env.samples, grid.cell_area())
    n_total = grid.points[0] * grid.points[1]
    spec = math.sqrt(float(np.sum(np.abs(fft2(env.samples)) ** 2)) * grid.cell_area() / n_total)
    rel = abs(space - spec) / space
    return CheckResult("parseval", rel <= 1e-12, f"relative_mismatch={rel:.2e}")


def _check_gauge_property() -> CheckResult:
    grid, tube = _small_grid(), _small_tube()
    masks = build_masks(grid, tube, 0.0)
    env = make_envelope(1.2, grid)
    v = commensurate_velocity(3.0, 1.0, grid)
    psi0 = boost(env, 1.0, v)
    psi0[masks.obstacle] = 0.0
    prof = PulseProfile(amplitude=0.9, half_support=0.8)
    region = PulseRegionSpec(taper_inner=tube.flat_radius, taper_outer=2.8)
    params = SolverParams(start_distance=2.2, stop_distance=2.2, probe_count=3,
                          norm_tolerance=1e-2)
    uniform = lambda t0, t1: 0.8 * (t1 - t0) + 0.3 * (t1**2 - t0**2)  # integral of 0.8 + 0.6 t

    base = run_interacting(
        psi0, -0.5, 0.5,
        PotentialContext(grid, tube, prof, region, BackgroundSpec(enabled=False), v, 1.0),
        masks, params,
    ).final
    shifted = run_interacting(
        psi0, -0.5, 0.5,
        PotentialContext(grid, tube, prof, region, BackgroundSpec(enabled=False), v, 1.0,
                         uniform_extra_integral=uniform),
        masks, params,
    ).final
    expected_phase = uniform(-0.5, 0.5)
    dev = float(np.max(np.abs(shifted * np.exp(1j * expected_phase) - base)))
    return CheckResult("gauge_property", dev <= 1e-12, f"max_node_deviation={dev:.2e}")


def _check_unitarity() -> CheckResult:
    grid, tube = _small_grid(), _small_tube()
    masks = build_masks(grid, tube, 0.0)
    env = make_envelope(1.2, grid)
    v = commensurate_velocity(2.0, 1.0, grid)
    psi = boost(env, 1.0, v)
    psi[masks.obstacle] = 0.0
    ctx = PotentialContext(grid, tube, PulseProfile(amplitude=0.5, half_support=0.6),
                           PulseRegionSpec(taper_inner=2.0, taper_outer=2.8),
                           BackgroundSpec(enabled=False), v, 1.0)
    from .propagation import step_interacting
    n0 = l2_norm(psi, grid.cell_area())
    worst = 0.0
    prev = n0
    t, dt = -0.5, 1e-3
    for _ in range(1000):
        psi = step_interacting(psi, t, dt, ctx, masks)
        t += dt
        n = l2_norm(psi, grid.cell_area())
        worst = max(worst, abs(n - prev))
        prev = n
    return CheckResult("unitarity_drift", worst <= 1e-10 * n0, f"max_step_drift={worst:.2e}")


def _check_cutoff_projection() -> CheckResult:
    grid = _small_grid()
    env = make_envelope(1.5, grid)
    v, m = 6.0, 1.0
    once = momentum_cutoff(env.samples, v, m, grid)
    twice = momentum_cutoff(once, v, m, grid)
    idem = float(np.max(np.abs(twice - once)))
    contraction = l2_norm(once, grid.cell_area()) <= l2_norm(env.samples, grid.cell_area()) + 1e-14
    return CheckResult("cutoff_projection", idem <= 1e-14 and contraction,
                       f"idempotence={idem:.2e}, contraction={contraction}")


def _check_absorber_monotone() -> CheckResult:
    grid, tube = _small_grid(), _small_tube()
    masks = build_masks(grid, tube, cap_strength=4.0)
    env = make_envelope(1.2, grid)
    v = commensurate_velocity(3.0, 1.0, grid)
    psi0 = boost(env, 1.0, v)
    psi0[masks.obstacle] = 0.0
    ctx = PotentialContext(grid, tube, None, PulseRegionSpec(2.0, 2.8),
                           BackgroundSpec(enabled=False), v, 1.0)
    params = SolverParams(start_distance=2.0, stop_distance=2.0, probe_count=9,
                          cap_strength=4.0)
    traj = run_interacting(psi0, -0.6, 0.6, ctx, masks, params)
    diffs = np.diff(traj.norms)
    ok = bool(np.all(diffs <= 1e-12))
    return CheckResult("absorber_monotone", ok, f"max_norm_increase={float(diffs.max()):.2e}")


def _check_rate_oracle() -> CheckResult:
    v = np.array([4.0, 5.66, 8.0, 11.31, 16.0])
    worst = 0.0
    for expo in (-0.5, -1.0, -2.0):
        fit = fit_rate(v, 3.7 * v**expo)
        worst = max(worst, abs(fit.slope - expo))
    env_vals = (
        abs(model_error_envelope(4.0, 2.0) - 0.25),
        abs(model_error_envelope(math.e, 1.0) - 1.0 / math.e),
        abs(model_error_envelope(100.0, 0.5) - 0.1),
    )
    ok = worst <= 1e-3 and max(env_vals) <= 1e-12
    return CheckResult("rate_oracle", ok, f"slope_dev={worst:.2e}, envelope_dev={max(env_vals):.2e}")


_CHECKS = (
    _check_mask_partition,
    _check_mask_symmetry,
    _check_clearance,
    _check_norm_axioms,
    _check_pulse_algebra,
    _check_background_bound,
    _check_boost_identity,
    _check_parseval,
    _check_gauge_property,
    _check_unitarity,
    _check_cutoff_projection,
    _check_absorber_monotone,
    _check_rate_oracle,
)


def run_invariant_suite(verbose: bool = True) -> list[CheckResult]:
    """Run every invariant check; raise InvariantError if any fails."""
    results = [check() for check in _CHECKS]
    if verbose:
        for r in results:
            print(f"[{'PASS' if r.ok else 'FAIL'}] {r.name}: {r.detail}")
    failures = [r for r in results if not r.ok]
    if failures:
        raise InvariantError(
            "invariant failures: " + ", ".join(f"{r.name} ({r.detail})" for r in failures)
        )
    return results
