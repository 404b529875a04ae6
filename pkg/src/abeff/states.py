"""Wave-packet envelopes, boosted states, and spectral norms.

The envelope is a compactly supported C2 bump normalized in the grid L2
norm; boosting multiplies by a plane wave whose momentum must be
commensurate with the periodic box so the spectral free propagator stays
exact.  The momentum cutoff realizes the low-pass regularization used in
the high-velocity analysis: a radial plateau window that passes |p| below
mass*v/32 untouched and removes everything above mass*v/16.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import GridSpec, l2_norm
from .spectral import fft2, ifft2, momentum_grids, momentum_sq

__all__ = [
    "Envelope",
    "make_envelope",
    "commensurate_velocity",
    "boost",
    "momentum_cutoff",
    "h2_norm",
    "StateError",
]

ENVELOPE_KINDS = ("bump_c2",)


class StateError(ValueError):
    """Invalid envelope or boost parameters."""


@dataclass(frozen=True)
class Envelope:
    """Grid realization of a compact-support envelope centered at the origin."""

    radius: float
    kind: str
    normalization: float
    samples: np.ndarray
    grid: GridSpec


def make_envelope(
    radius: float,
    grid: GridSpec,
    kind: str = "bump_c2",
    normalization: float = 1.0,
    support_limit: float | None = None,
) -> Envelope:
    """Sample the bump (1 - |x|^2/radius^2)^3 on the grid and normalize.

    The cubic contact at the support edge makes the bump piecewise C2, so it
    has a finite spectral H2 norm while staying exactly zero outside the
    support ball.  support_limit, when given, is the largest admissible
    radius (strict); the propagation preconditions use it to enforce that the
    packet plus the pulse width fit inside the flat ball.
    """
    if kind not in ENVELOPE_KINDS:
        raise StateError(f"unknown envelope kind {kind!r}, expected one of {ENVELOPE_KINDS}")
    if radius <= 0.0:
        raise StateError(f"envelope radius must be positive, got {radius}")
    if support_limit is not None and not radius < support_limit:
        raise StateError(
            f"envelope radius < support limit violated: {radius} >= {support_limit}"
        )
    dx1, dx2 = grid.spacing
    if radius / max(dx1, dx2) < 16.0:
        raise StateError(
            f"envelope radius {radius} resolved by fewer than 16 cells (dx = {max(dx1, dx2)})"
        )

    X1g, X2g = grid.mesh()
    r2 = (X1g**2 + X2g**2) / radius**2
    core = np.where(r2 < 1.0, (1.0 - np.minimum(r2, 1.0)) ** 3, 0.0)
    nrm = l2_norm(core, grid.cell_area())
    samples = (normalization / nrm) * core.astype(np.complex128)
    return Envelope(radius=radius, kind=kind, normalization=normalization,
                    samples=samples, grid=grid)


def commensurate_velocity(v: float, mass: float, grid: GridSpec) -> float:
    """Round a requested beam velocity to the nearest value whose boost phase
    is exactly periodic on the box (mass*v a multiple of 2*pi/X2)."""
    if v <= 0.0:
        raise StateError(f"velocity must be positive, got {v}")
    quantum = 2.0 * np.pi / (mass * grid.extent[1])
    k = max(1, round(v / quantum))
    return k * quantum


def _check_commensurate(v: float, mass: float, grid: GridSpec) -> None:
    quantum = 2.0 * np.pi / (mass * grid.extent[1])
    k = v / quantum
    if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)):
        raise StateError(
            f"velocity {v} is not commensurate with the box "
            f"(mass*v*X2/2pi = {k}); round with commensurate_velocity first"
        )


def boost(envelope: Envelope, mass: float, v: float) -> np.ndarray:
    """Multiply by the beam-axis plane wave exp(i*mass*v*x2).

    v = 0 returns the raw samples; nonzero v must be commensurate with the
    box, otherwise the spectral free propagator would alias the packet.
    """
    if v == 0.0:
        return envelope.samples.copy()
    if v < 0.0:
        raise StateError(f"boost velocity must be >= 0 along the beam axis, got {v}")
    grid = envelope.grid
    _check_commensurate(v, mass, grid)
    _, x2 = grid.axes()
    return envelope.samples * np.exp(1j * mass * v * x2)[None, :]


def _plateau_window(p_abs: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """Radial window: 1 below inner, 0 above outer, quintic smoothstep between."""
    u = np.clip((p_abs - inner) / (outer - inner), 0.0, 1.0)
    return 1.0 - u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def momentum_cutoff(field: np.ndarray, v: float, mass: float, grid: GridSpec) -> np.ndarray:
    """Low-pass the field through the scaled plateau window g(p/v).

    Passes |p| <= mass*v/32 exactly, removes |p| >= mass*v/16.  Acts as a
    spectral multiplier, hence an idempotent-up-to-roundoff contraction.
    """
    if v <= 0.0:
        raise StateError(f"velocity must be positive, got {v}")
    p1, p2 = momentum_grids(grid)
    p_abs = np.sqrt(p1**2 + p2**2)
    window = _plateau_window(p_abs, mass * v / 32.0, mass * v / 16.0)
    return ifft2(window * fft2(field))


def h2_norm(field: np.ndarray, grid: GridSpec) -> float:
    """Spectral Sobolev norm ||(1 + |p|^2) * field_hat||_L2."""
    fhat = fft2(field)
    weight = 1.0 + momentum_sq(grid)
    # Parseval on the discrete transform: cell_area / (N1*N2) converts the
    # plain FFT sum to the grid L2 quadrature
    n_total = grid.points[0] * grid.points[1]
    acc = np.sum(np.abs(weight * fhat) ** 2) * grid.cell_area() / n_total
    return float(np.sqrt(acc))
