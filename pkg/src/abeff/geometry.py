"""Obstacle geometry, computational grid, and domain masks.

The obstacle is a straight two-wall "tube" aligned with the beam axis x2:
two rectangular slabs at inner_halfwidth <= |x1| <= outer_halfwidth,
|x2| <= length/2, with an open channel between them.  The wave function
lives on a periodic rectangular box discretized for spectral transforms;
the walls are imposed as a node mask, and an optional absorbing ramp sits
at the +-x2 box ends.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TubeSpec",
    "GridSpec",
    "DomainMasks",
    "in_tube_wall",
    "in_tube_channel",
    "build_masks",
    "clear_line_of_sight",
    "l2_norm_on_domain",
]


class GeometryError(ValueError):
    """Inconsistent obstacle/grid geometry."""


@dataclass(frozen=True)
class TubeSpec:
    """Two-slab tube obstacle with an open channel along x2.

    inner_halfwidth / outer_halfwidth bound the walls in |x1|; length is the
    extent along the beam axis; flat_radius is the radius of the ball around
    the origin where the pulse potential is spatially flat (must fit strictly
    inside the channel).
    """

    inner_halfwidth: float = 6.0
    outer_halfwidth: float = 8.0
    length: float = 24.0
    flat_radius: float = 5.0

    def __post_init__(self):
        if not 0.0 < self.inner_halfwidth < self.outer_halfwidth:
            raise GeometryError(
                "0 < inner_halfwidth < outer_halfwidth violated: "
                f"{self.inner_halfwidth} vs {self.outer_halfwidth}"
            )
        if self.length <= 0.0:
            raise GeometryError(f"length must be positive, got {self.length}")
        if not (self.flat_radius < self.inner_halfwidth and self.flat_radius < self.length / 2):
            raise GeometryError(
                "flat ball must fit inside the channel: flat_radius "
                f"{self.flat_radius} vs inner_halfwidth {self.inner_halfwidth}, "
                f"length/2 {self.length / 2}"
            )


@dataclass(frozen=True)
class GridSpec:
    """Periodic box [-X1/2, X1/2) x [-X2/2, X2/2) sampled on N1 x N2 nodes."""

    extent: tuple[float, float] = (22.4, 19.2)
    points: tuple[int, int] = (256, 1024)
    absorber_width: float = 3.0

    def __post_init__(self):
        for n in self.points:
            if n < 2 or (n & (n - 1)) != 0:
                raise GeometryError(f"grid point counts must be powers of two, got {self.points}")
        if min(self.extent) <= 0.0:
            raise GeometryError(f"box extent must be positive, got {self.extent}")
        if not 0.0 <= self.absorber_width < self.extent[1] / 2:
            raise GeometryError(
                f"absorber_width {self.absorber_width} must lie in [0, X2/2)"
            )

    @property
    def spacing(self) -> tuple[float, float]:
        return (self.extent[0] / self.points[0], self.extent[1] / self.points[1])

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates along each axis (periodic convention, no +X/2 node)."""
        dx1, dx2 = self.spacing
        x1 = -self.extent[0] / 2 + dx1 * np.arange(self.points[0])
        x2 = -self.extent[1] / 2 + dx2 * np.arange(self.points[1])
        return x1, x2

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        x1, x2 = self.axes()
        return np.meshgrid(x1, x2, indexing="ij")

    def momenta(self) -> tuple[np.ndarray, np.ndarray]:
        """Angular spectral frequencies along each axis."""
        dx1, dx2 = self.spacing
        p1 = 2 * np.pi * np.fft.fftfreq(self.points[0], d=dx1)
        p2 = 2 * np.pi * np.fft.fftfreq(self.points[1], d=dx2)
        return p1, p2

    def cell_area(self) -> float:
        dx1, dx2 = self.spacing
        return dx1 * dx2

    def max_resolved_velocity(self, mass: float, points_per_wavelength: float = 10.0) -> float:
        """Largest beam velocity whose de Broglie wavelength keeps >= the
        requested number of nodes per period along x2."""
        return 2 * np.pi / (points_per_wavelength * mass * self.spacing[1])


@dataclass(frozen=True)
class DomainMasks:
    """Node classification plus absorbing-layer strength.

    obstacle and interior partition the grid; absorber is zero throughout the
    physics region and ramps quadratically inside the two x2 end layers.
    """

    obstacle: np.ndarray
    interior: np.ndarray
    absorber: np.ndarray
    cell_area: float = field(default=1.0)


def in_tube_wall(x, tube: TubeSpec):
    """True where the point lies in the closed wall slabs."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    radial = (np.abs(x1) >= tube.inner_halfwidth) & (np.abs(x1) <= tube.outer_halfwidth)
    return radial & (np.abs(x2) <= tube.length / 2)


def in_tube_channel(x, tube: TubeSpec):
    """True where the point lies in the open channel between the walls."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return (np.abs(x1) < tube.inner_halfwidth) & (np.abs(x2) <= tube.length / 2)


def build_masks(grid: GridSpec, tube: TubeSpec, cap_strength: float = 0.0) -> DomainMasks:
    """Classify grid nodes against the tube and build the absorbing ramp.

    A node belongs to the obstacle iff its cell center lies in a wall slab
    (staircase Dirichlet).  Fails if the tube pokes into the absorbing layer
    or outside the box.
    """
    if cap_strength < 0.0:
        raise GeometryError(f"cap_strength must be >= 0, got {cap_strength}")
    X1, X2 = grid.extent
    if tube.outer_halfwidth >= X1 / 2:
        raise GeometryError(
            f"tube walls (|x1| <= {tube.outer_halfwidth}) do not fit in the box (X1/2 = {X1 / 2})"
        )
    ramp_start = X2 / 2 - grid.absorber_width
    if cap_strength > 0.0 and tube.length / 2 >= ramp_start:
        raise GeometryError(
            f"tube end (|x2| = {tube.length / 2}) intersects the absorbing layer "
            f"(starts at |x2| = {ramp_start})"
        )
    if tube.length / 2 >= X2 / 2:
        raise GeometryError(
            f"tube length {tube.length} does not fit in the box (X2 = {X2})"
        )

    X1g, X2g = grid.mesh()
    pts = np.stack([X1g, X2g], axis=-1)
    obstacle = in_tube_wall(pts, tube)

    absorber = np.zeros(grid.points, dtype=float)
    if cap_strength > 0.0 and grid.absorber_width > 0.0:
        depth = np.abs(X2g) - ramp_start
        inside = depth > 0.0
        absorber[inside] = cap_strength * (depth[inside] / grid.absorber_width) ** 2

    return DomainMasks(
        obstacle=obstacle,
        interior=~obstacle,
        absorber=absorber,
        cell_area=grid.cell_area(),
    )


def _segment_hits_slab(p0, direction, x1_lo, x1_hi, x2_half) -> bool:
    """Does the full line p0 + tau*direction intersect the closed rectangle
    [x1_lo, x1_hi] x [-x2_half, x2_half]?"""
    d1, d2 = direction
    lo, hi = -np.inf, np.inf
    for start, d, a, b in ((p0[0], d1, x1_lo, x1_hi), (p0[1], d2, -x2_half, x2_half)):
        if abs(d) < 1e-15:
            if not (a <= start <= b):
                return False
        else:
            t0, t1 = (a - start) / d, (b - start) / d
            if t0 > t1:
                t0, t1 = t1, t0
            lo, hi = max(lo, t0), min(hi, t1)
    return lo <= hi


def clear_line_of_sight(
    tube: TubeSpec,
    direction: tuple[float, float],
    ball_radius: float,
    boundary_samples: int = 720,
) -> bool:
    """True iff every full line through the closed ball B_r(0) along the given
    unit direction misses the tube walls.

    The beam-axis cases +-e2 reduce analytically to ball_radius <
    inner_halfwidth; any other direction is checked by sampling the ball
    boundary densely and intersecting each line with both wall slabs.
    """
    d = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise GeometryError(f"direction must be a unit vector, got {direction}")
    if ball_radius < 0.0:
        raise GeometryError(f"ball_radius must be >= 0, got {ball_radius}")

    if abs(d[0]) < 1e-12:  # along the channel: lines at fixed x1
        return ball_radius < tube.inner_halfwidth

    slabs = (
        (tube.inner_halfwidth, tube.outer_halfwidth),
        (-tube.outer_halfwidth, -tube.inner_halfwidth),
    )
    theta = np.linspace(0.0, 2 * np.pi, boundary_samples, endpoint=False)
    for c, s in zip(np.cos(theta), np.sin(theta)):
        p0 = (ball_radius * c, ball_radius * s)
        for lo, hi in slabs:
            if _segment_hits_slab(p0, d, lo, hi, tube.length / 2):
                return False
    return True


def l2_norm_on_domain(psi: np.ndarray, masks: DomainMasks) -> float:
    """Grid L2 norm over the exterior domain (obstacle nodes excluded)."""
    acc = np.sum(np.abs(psi[masks.interior]) ** 2)
    return float(np.sqrt(acc * masks.cell_area))


def l2_norm(psi: np.ndarray, cell_area: float) -> float:
    """Grid L2 norm over the full periodic box."""
    return float(np.sqrt(np.sum(np.abs(psi) ** 2) * cell_area))
