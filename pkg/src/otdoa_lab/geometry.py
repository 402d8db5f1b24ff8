"""Hexagonal 7-cell network layout, UE sampling and distance differences.

The serving BS sits at the origin and the neighbours sit on the first ring of
a triangular lattice with spacing ``d_cell``.  Each BS owns the hexagonal
Voronoi cell of that lattice (apothem ``d_cell / 2``, flat sides facing the
six neighbours).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

VALID_N_BS = (4, 5, 6, 7)

# Unit normals of the three pairs of hexagon sides (towards 0, 60, 120 deg).
_SIDE_NORMALS = np.array(
    [[np.cos(a), np.sin(a)] for a in np.deg2rad([0.0, 60.0, 120.0])]
)


@dataclass(frozen=True)
class BsLayout:
    """Base-station coordinates in meters; index 0 is the serving BS."""

    d_cell: float
    positions: np.ndarray

    @property
    def n_bs(self) -> int:
        return len(self.positions)

    @property
    def neighbors(self) -> np.ndarray:
        return self.positions[1:]


def build_layout(d_cell: float, n_bs: int = 7) -> BsLayout:
    """Serving BS at the origin plus ``n_bs - 1`` ring neighbours at 0, 60, 120, ... deg."""
    if not np.isfinite(d_cell) or d_cell <= 0:
        raise DomainError(f"d_cell must be a positive finite length, got {d_cell!r}")
    if n_bs not in VALID_N_BS:
        raise DomainError(f"n_bs must be one of {VALID_N_BS}, got {n_bs!r}")
    angles = np.deg2rad(60.0 * np.arange(n_bs - 1))
    ring = d_cell * np.column_stack([np.cos(angles), np.sin(angles)])
    positions = np.vstack([np.zeros((1, 2)), ring])
    positions.setflags(write=False)
    return BsLayout(float(d_cell), positions)


def in_hexagon(offsets, d_cell: float) -> np.ndarray:
    """True where ``offsets`` (relative to a cell centre) lie inside that hexagonal cell."""
    offsets = np.asarray(offsets, dtype=float)
    proj = offsets @ _SIDE_NORMALS.T
    return np.all(np.abs(proj) <= d_cell / 2.0, axis=-1)


def in_region(points, layout: BsLayout) -> np.ndarray:
    """Membership in the union of the layout's cells."""
    points = np.asarray(points, dtype=float)
    rel = points[..., None, :] - layout.positions
    return np.any(in_hexagon(rel, layout.d_cell), axis=-1)


def sample_ues(layout: BsLayout, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` UE positions uniformly over the union of the layout's cells.

    A cell is chosen uniformly (all cells have equal area), then a point is
    rejection-sampled from the hexagon's bounding box.
    """
    if n < 0:
        raise DomainError("n must be non-negative")
    half_w = layout.d_cell / 2.0
    half_h = layout.d_cell / np.sqrt(3.0)
    cells = rng.integers(0, layout.n_bs, size=n)
    out = np.empty((n, 2))
    todo = np.arange(n)
    while todo.size:
        cand = rng.uniform([-half_w, -half_h], [half_w, half_h], size=(todo.size, 2))
        ok = in_hexagon(cand, layout.d_cell)
        idx = todo[ok]
        out[idx] = cand[ok] + layout.positions[cells[idx]]
        todo = todo[~ok]
    return out


def sample_ue(layout: BsLayout, rng: np.random.Generator) -> np.ndarray:
    """Draw a single UE position; see :func:`sample_ues`."""
    return sample_ues(layout, rng, 1)[0]


def distance_diffs(points, anchors) -> np.ndarray:
    """All distance differences ``|p - p_i| - |p - p_0|`` for i >= 1.

    ``points`` has shape (..., 2); ``anchors`` is a layout or an (n, 2) array.
    The result has shape (..., n - 1).
    """
    anchors = anchors.positions if isinstance(anchors, BsLayout) else np.asarray(anchors, float)
    points = np.asarray(points, dtype=float)
    dist = np.linalg.norm(points[..., None, :] - anchors, axis=-1)
    return dist[..., 1:] - dist[..., :1]


def distance_diff(p, layout: BsLayout, i: int) -> float:
    """Distance difference to neighbour ``i`` relative to the serving BS."""
    if not 1 <= i < layout.n_bs:
        raise DomainError(f"BS index must be in [1, {layout.n_bs - 1}], got {i}")
    p = np.asarray(p, dtype=float)
    return float(np.linalg.norm(p - layout.positions[i]) - np.linalg.norm(p - layout.positions[0]))
