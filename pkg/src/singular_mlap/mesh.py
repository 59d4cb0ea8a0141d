"""Graded meshes on the unit interval and the radial unit ball.

Nodes are stored as a single increasing array from 0 to 1.  On the interval
both endpoints are Dirichlet nodes; on the ball only rho = 1 is, while rho = 0
is the symmetry axis and stays a free unknown.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

INTERVAL = "interval"
RADIAL_BALL = "radial_ball"


@dataclass(frozen=True)
class DomainSpec:
    kind: str = INTERVAL
    space_dim: int = 1

    def __post_init__(self):
        if self.kind not in (INTERVAL, RADIAL_BALL):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.space_dim < 1:
            raise ValueError("space_dim must be >= 1")

    @property
    def diameter(self) -> float:
        return 1.0 if self.kind == INTERVAL else 2.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "space_dim": self.space_dim}


@dataclass(frozen=True, eq=False)
class Mesh:
    """Node set plus the finite-volume geometry derived from it."""

    domain: DomainSpec
    nodes: np.ndarray
    grading: float = 1.0
    level: int = 0

    @property
    def n(self) -> int:
        """Number of cells."""
        return len(self.nodes) - 1

    @property
    def is_ball(self) -> bool:
        return self.domain.kind == RADIAL_BALL

    @cached_property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @cached_property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    @cached_property
    def free(self) -> np.ndarray:
        """Indices of the unknowns (everything except Dirichlet nodes)."""
        start = 0 if self.is_ball else 1
        return np.arange(start, self.n)

    @cached_property
    def dirichlet(self) -> np.ndarray:
        return np.array([self.n]) if self.is_ball else np.array([0, self.n])

    @cached_property
    def face_weight(self) -> np.ndarray:
        """Radial measure rho^(N-1) at cell midpoints (ones on the interval)."""
        if not self.is_ball or self.domain.space_dim == 1:
            return np.ones(self.n)
        return self.midpoints ** (self.domain.space_dim - 1)

    @cached_property
    def cell_measure(self) -> np.ndarray:
        """Dual-cell measure attached to every node.

        Interior nodes get rho_i^(N-1) times the dual length; the ball axis
        gets the exact volume (h/2)^N / N of its half cell, which is what the
        mirrored ghost node produces in the limit rho -> 0.
        """
        h = self.h
        vol = np.empty(self.n + 1)
        vol[1:-1] = 0.5 * (h[:-1] + h[1:])
        vol[0] = 0.5 * h[0]
        vol[-1] = 0.5 * h[-1]
        if self.is_ball:
            dim = self.domain.space_dim
            vol[1:] *= self.nodes[1:] ** (dim - 1)
            vol[0] = (0.5 * h[0]) ** dim / dim
        return vol

    @cached_property
    def delta(self) -> np.ndarray:
        return distance_function(self)

    @cached_property
    def phi(self) -> np.ndarray:
        return boundary_profile(self)

    @property
    def h_min(self) -> float:
        return float(self.h.min())

    def boundary_layer(self) -> np.ndarray:
        """Indices of the half of the mesh next to one Dirichlet end, ordered
        from the boundary inwards."""
        if self.is_ball:
            return np.arange(self.n, -1, -1)
        return np.arange(0, self.n // 2 + 1)

    def refine(self) -> "Mesh":
        return build_graded_mesh(self.domain, 2 * self.n, self.grading, self.level + 1)


def build_graded_mesh(domain: DomainSpec | str, n: int, grading: float = 1.0,
                      level: int = 0) -> Mesh:
    """Build a mesh with n cells whose spacing near the Dirichlet boundary
    shrinks like (1/n)**grading.

    Interval nodes are ``(2i/n)**grading / 2`` for ``i <= n/2`` mirrored about
    1/2; ball nodes are ``1 - (1 - i/n)**grading``.
    """
    if isinstance(domain, str):
        domain = DomainSpec(domain)
    if n < 2 or n % 2:
        raise ValueError(f"node count n must be even and >= 2, got {n}")
    if not grading >= 1.0:
        raise ValueError(f"grading must be >= 1, got {grading}")
    if domain.kind == INTERVAL:
        half = (2.0 * np.arange(n // 2 + 1) / n) ** grading / 2.0
        nodes = np.concatenate([half, 1.0 - half[-2::-1]])
        nodes[n // 2] = 0.5
    else:
        nodes = 1.0 - (1.0 - np.arange(n + 1) / n) ** grading
    nodes[0], nodes[-1] = 0.0, 1.0
    if np.any(np.diff(nodes) <= 0):
        raise ValueError("degenerate mesh: grading too strong for n")
    return Mesh(domain, nodes, float(grading), level)


def default_grading(min_power: float) -> float:
    """Grading needed to resolve a delta**alpha layer with second differences."""
    return max(1.0, 2.0 / min_power)


def distance_function(mesh: Mesh) -> np.ndarray:
    x = mesh.nodes
    if mesh.is_ball:
        d = 1.0 - x
        d[-1] = 0.0
        return d
    d = np.minimum(x, 1.0 - x)
    d[0] = d[-1] = 0.0
    return d


def boundary_profile(mesh: Mesh) -> np.ndarray:
    """Smooth unit-max profile comparable to delta, used to seed barriers.

    sin(pi x) on the interval and cos(pi rho / 2) on the ball; both vanish
    only at Dirichlet nodes.
    """
    x = mesh.nodes
    if mesh.is_ball:
        phi = np.cos(0.5 * math.pi * x)
        phi[-1] = 0.0
    else:
        phi = np.sin(math.pi * x)
        phi[0] = phi[-1] = 0.0
    return phi


def write_csv(path: str | Path, mesh: Mesh, values: np.ndarray, header=("coordinate", "value")):
    """Dump nodal values as a two-column CSV."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for x, v in zip(mesh.nodes, values):
            writer.writerow([repr(float(x)), repr(float(v))])


def read_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a (coordinate, value) CSV written by :func:`write_csv`."""
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]
