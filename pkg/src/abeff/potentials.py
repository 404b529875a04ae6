"""Time-dependent electric potential: velocity-scaled pulse plus decaying background.

The pulse profile Q0(z) is a C1 bump in the travelled-distance variable
z = v*t, active only for |z| < half_support.  Inside the channel it is
extended spatially by a radial C1 taper that equals 1 on the flat ball and
falls to 0 before the channel walls, so the full potential

    V(t, x) = v * Q0(v t) * w(|x|) + V0(t, x)

is spatially constant over the wave packet while the pulse fires.  The
phases are the running integrals of Q0: the accumulated phase saturates at
the total phase once the pulse has passed, and the remaining phase is its
complement.  All pulse integrals use exact piecewise-polynomial
antiderivatives (well below the 1e-12 tolerance the rest of the code
assumes).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "PulseProfile",
    "PulseRegionSpec",
    "BackgroundSpec",
    "eval_pulse",
    "pulse_primitive",
    "total_phase",
    "accumulated_phase",
    "remaining_phase",
    "calibrate_amplitude_for_phase",
    "eval_pulse_weight",
    "eval_background",
    "background_time_integral",
    "eval_potential",
]

PULSE_SHAPES = ("quartic_bump", "smooth_plateau")


class PotentialError(ValueError):
    """Invalid potential parameters."""


@dataclass(frozen=True)
class PulseProfile:
    """C1 pulse in the travelled-distance variable z.

    quartic_bump:   A * (1 - (z/h)^2)^2            for |z| < h
    smooth_plateau: A * s(2 + 2z/h) * s(2 - 2z/h)  with s the cubic smoothstep,
                    flat top A on |z| <= h/2
    Both vanish identically for |z| >= h (h = half_support) and have zero
    slope at the support edge.
    """

    amplitude: float = 1.0
    half_support: float = 2.0
    shape: str = "quartic_bump"

    def __post_init__(self):
        if self.half_support <= 0.0:
            raise PotentialError(f"half_support must be positive, got {self.half_support}")
        if self.shape not in PULSE_SHAPES:
            raise PotentialError(f"unknown pulse shape {self.shape!r}, expected one of {PULSE_SHAPES}")


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _smoothstep_primitive(u):
    # integral of the cubic smoothstep from 0, saturating outside [0, 1]
    u = np.asarray(u, dtype=float)
    return np.where(u >= 1.0, 0.5, np.where(u <= 0.0, 0.0, u**3 - 0.5 * u**4))


def eval_pulse(profile: PulseProfile, z):
    """Pulse value Q0(z); exact zero outside the open support."""
    z = np.asarray(z, dtype=float)
    u = z / profile.half_support
    inside = np.abs(u) < 1.0
    if profile.shape == "quartic_bump":
        vals = profile.amplitude * (1.0 - u**2) ** 2
    else:
        vals = profile.amplitude * _smoothstep(2.0 + 2.0 * u) * _smoothstep(2.0 - 2.0 * u)
    out = np.where(inside, vals, 0.0)
    return out if out.ndim else float(out)


def pulse_primitive(profile: PulseProfile, z):
    """Integral of the pulse from the left support edge up to z (exact)."""
    z = np.asarray(z, dtype=float)
    h, A = profile.half_support, profile.amplitude
    u = np.clip(z / h, -1.0, 1.0)
    if profile.shape == "quartic_bump":
        vals = A * h * ((u - 2.0 * u**3 / 3.0 + u**5 / 5.0) + 8.0 / 15.0)
    else:
        lo = A * h / 2.0 * _smoothstep_primitive(2.0 + 2.0 * u)
        mid = A * h / 4.0 + A * h * (u + 0.5)
        hi = 5.0 * A * h / 4.0 + A * h / 2.0 * (0.5 - _smoothstep_primitive(2.0 - 2.0 * u))
        vals = np.where(u <= -0.5, lo, np.where(u < 0.5, mid, hi))
    return vals if vals.ndim else float(vals)


def total_phase(profile: PulseProfile) -> float:
    """Integral of the pulse over its full support (the imprinted flux phase)."""
    return float(pulse_primitive(profile, profile.half_support))


def accumulated_phase(t, v: float, profile: PulseProfile):
    """Phase collected by time t: v * integral_{-inf}^{t} Q0(v s) ds.

    Substituting z = v s this is the pulse primitive at z = v t; it vanishes
    before the pulse starts and saturates at the total phase after it ends.
    """
    if v <= 0.0:
        raise PotentialError(f"velocity must be positive, got {v}")
    return pulse_primitive(profile, np.asarray(t, dtype=float) * v)


def remaining_phase(t, v: float, profile: PulseProfile):
    """Phase still to come after time t; complements accumulated_phase to the total."""
    if v <= 0.0:
        raise PotentialError(f"velocity must be positive, got {v}")
    return total_phase(profile) - pulse_primitive(profile, np.asarray(t, dtype=float) * v)


def calibrate_amplitude_for_phase(target_phase: float, profile: PulseProfile) -> PulseProfile:
    """Rescale the amplitude so the total phase equals the target (flux is
    linear in amplitude)."""
    unit = total_phase(replace(profile, amplitude=1.0))
    if unit == 0.0:
        raise PotentialError("unit-amplitude pulse has zero flux; cannot calibrate")
    return replace(profile, amplitude=target_phase / unit)


@dataclass(frozen=True)
class PulseRegionSpec:
    """Radial C1 taper extending the pulse from the flat ball to zero.

    weight(r) = 1 for r <= taper_inner, 0 for r >= taper_outer, descending
    smoothstep between.  taper_outer must keep the support inside the channel
    (checked against the tube at configuration time).
    """

    taper_inner: float = 5.0
    taper_outer: float = 5.9

    def __post_init__(self):
        if not 0.0 < self.taper_inner < self.taper_outer:
            raise PotentialError(
                f"0 < taper_inner < taper_outer violated: {self.taper_inner} vs {self.taper_outer}"
            )


def eval_pulse_weight(region: PulseRegionSpec, r):
    """Spatial weight of the pulse at radius r from the origin."""
    r = np.asarray(r, dtype=float)
    u = (r - region.taper_inner) / (region.taper_outer - region.taper_inner)
    out = 1.0 - _smoothstep(u)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class BackgroundSpec:
    """Separable decaying background C * (1+|t|)^mu * (1+|x|)^(-rho).

    The family saturates its own envelope bound with equality, which makes
    the velocity-decay regimes of the error model sharp.  Requires rho > 0
    and rho - mu > 1 so the potential is short range along the trajectory.
    """

    strength: float = 0.0
    rho: float = 2.0
    mu: float = 0.0
    enabled: bool = False

    def __post_init__(self):
        if self.rho <= 0.0:
            raise PotentialError(f"rho must be positive, got {self.rho}")
        if self.rho - self.mu <= 1.0:
            raise PotentialError(
                f"rho - mu > 1 violated: {self.rho} - {self.mu} = {self.rho - self.mu} <= 1"
            )


def eval_background(t, x_norm, bg: BackgroundSpec):
    """Background value at time t and distance |x| from the origin."""
    if not bg.enabled:
        return np.zeros_like(np.asarray(x_norm, dtype=float)) if np.ndim(x_norm) else 0.0
    t = np.asarray(t, dtype=float)
    r = np.asarray(x_norm, dtype=float)
    out = bg.strength * (1.0 + np.abs(t)) ** bg.mu * (1.0 + r) ** (-bg.rho)
    return out if out.ndim else float(out)


def _time_weight_primitive(t, mu: float):
    """Antiderivative of (1+|t|)^mu, odd in t, zero at t = 0."""
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    if mu == -1.0:
        mag = np.log1p(a)
    else:
        mag = ((1.0 + a) ** (mu + 1.0) - 1.0) / (mu + 1.0)
    return np.sign(t) * mag


def background_time_integral(t0: float, t1: float, bg: BackgroundSpec) -> float:
    """Exact integral of the background's time factor over [t0, t1]."""
    if not bg.enabled:
        return 0.0
    return float(
        bg.strength * (_time_weight_primitive(t1, bg.mu) - _time_weight_primitive(t0, bg.mu))
    )


def eval_potential(
    t,
    x,
    v: float,
    profile: PulseProfile,
    region: PulseRegionSpec,
    bg: BackgroundSpec,
):
    """Full potential value at time t and points x (shape (..., 2)).

    The pulse contributes v * Q0(v t) times the radial weight; the taper
    support keeps it inside the channel, so no explicit channel indicator is
    needed once the region spec has been validated against the tube.
    """
    if v <= 0.0:
        raise PotentialError(f"velocity must be positive, got {v}")
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x**2, axis=-1))
    out = v * eval_pulse(profile, v * np.asarray(t, dtype=float)) * eval_pulse_weight(region, r)
    if bg.enabled:
        out = out + eval_background(t, r, bg)
    return out if np.ndim(out) else float(out)
