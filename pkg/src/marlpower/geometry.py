"""Hexagonal cell layout, link placement and large-scale fading."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

SHADOWING_STD_DB = 8.0

# axial-coordinate neighbour directions, walked in order to trace a ring
_HEX_DIRS = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]


@dataclass
class NetworkLayout:
    """Cells and link endpoints. Positions are in meters."""

    n_cells: int
    R: float
    r: float
    links_per_cell: int | tuple[int, int]
    cell_centers: np.ndarray
    tx_positions: np.ndarray
    rx_positions: np.ndarray
    cell_of_link: np.ndarray
    seed: int | None = None

    @property
    def n_links(self) -> int:
        return len(self.cell_of_link)

    def distances_km(self) -> np.ndarray:
        """d[i, j]: distance from transmitter i to receiver j in km."""
        diff = self.tx_positions[:, None, :] - self.rx_positions[None, :, :]
        return np.linalg.norm(diff, axis=-1) / 1000.0

    def to_dict(self) -> dict:
        lpc = self.links_per_cell
        return {
            "n_cells": self.n_cells,
            "R": self.R,
            "r": self.r,
            "links_per_cell": list(lpc) if isinstance(lpc, tuple) else lpc,
            "seed": self.seed,
            "cell_centers": self.cell_centers.tolist(),
            "tx_positions": self.tx_positions.tolist(),
            "rx_positions": self.rx_positions.tolist(),
            "cell_of_link": self.cell_of_link.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkLayout":
        lpc = d["links_per_cell"]
        return cls(
            n_cells=d["n_cells"],
            R=d["R"],
            r=d["r"],
            links_per_cell=tuple(lpc) if isinstance(lpc, list) else lpc,
            cell_centers=np.asarray(d["cell_centers"], dtype=float).reshape(-1, 2),
            tx_positions=np.asarray(d["tx_positions"], dtype=float).reshape(-1, 2),
            rx_positions=np.asarray(d["rx_positions"], dtype=float).reshape(-1, 2),
            cell_of_link=np.asarray(d["cell_of_link"], dtype=int),
            seed=d.get("seed"),
        )


@dataclass
class LargeScaleGains:
    """alpha[i, j] is the linear gain from transmitter i to receiver j."""

    alpha: np.ndarray
    shadow_db: np.ndarray = field(repr=False)


def build_hex_layout(n_cells: int, R: float) -> np.ndarray:
    """Centers of ``n_cells`` hexagonal cells, filled ring by ring from the origin.

    Adjacent centers are ``2R`` apart. Counts that do not complete a ring are
    truncated in spiral order.
    """
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    if R <= 0:
        raise ValueError("R must be positive")
    axial = [(0, 0)]
    ring = 1
    while len(axial) < n_cells:
        q, s = 0, -ring
        for dq, ds in _HEX_DIRS:
            for _ in range(ring):
                axial.append((q, s))
                q, s = q + dq, s + ds
        ring += 1
    axial = np.array(axial[:n_cells], dtype=float)
    # axial basis vectors of length 2R, 60 degrees apart
    b1 = np.array([2 * R, 0.0])
    b2 = np.array([R, math.sqrt(3) * R])
    return axial[:, :1] * b1 + axial[:, 1:] * b2


def in_hexagon(points: np.ndarray, R: float) -> np.ndarray:
    """Membership in the cell of apothem R centred at the origin.

    The cell is the Voronoi region of the lattice built by build_hex_layout, so
    its edges are perpendicular to the 0, 60 and 120 degree directions.
    """
    pts = np.atleast_2d(points)
    inside = np.ones(len(pts), dtype=bool)
    for ang in (0.0, math.pi / 3, 2 * math.pi / 3):
        u = np.array([math.cos(ang), math.sin(ang)])
        inside &= np.abs(pts @ u) <= R
    return inside


def _sample_receiver(R: float, r: float, rng: np.random.Generator, max_tries: int) -> np.ndarray:
    half_h = 2 * R / math.sqrt(3)
    for _ in range(max_tries):
        pt = np.array([rng.uniform(-R, R), rng.uniform(-half_h, half_h)])
        if in_hexagon(pt, R)[0] and np.hypot(*pt) >= r:
            return pt
    raise RuntimeError(
        f"rejection sampling failed after {max_tries} attempts (r={r} too close to cell size R={R})"
    )


def place_links(
    centers: np.ndarray,
    R: float,
    r: float,
    links_per_cell: int | tuple[int, int],
    rng: np.random.Generator,
    max_tries: int = 10_000,
    seed: int | None = None,
) -> NetworkLayout:
    """Put transmitters at cell centers and drop receivers uniformly in each cell.

    ``links_per_cell`` is either a fixed count or a ``(1, k_max)`` range, in
    which case each cell draws its own count uniformly. Receivers avoid the disk
    of radius ``r`` around the center.
    """
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    if not 0 <= r < R:
        raise ValueError(f"need 0 <= r < R (cell inradius); got r={r}, R={R}")
    n_cells = len(centers)
    if isinstance(links_per_cell, tuple):
        lo, hi = links_per_cell
        counts = rng.integers(lo, hi + 1, size=n_cells)
    else:
        if links_per_cell < 1:
            raise ValueError("links_per_cell must be >= 1")
        counts = np.full(n_cells, links_per_cell)
    tx, rx, cell = [], [], []
    for c, k in enumerate(counts):
        for _ in range(int(k)):
            tx.append(centers[c])
            rx.append(centers[c] + _sample_receiver(R, r, rng, max_tries))
            cell.append(c)
    return NetworkLayout(
        n_cells=n_cells,
        R=R,
        r=r,
        links_per_cell=links_per_cell,
        cell_centers=centers,
        tx_positions=np.array(tx),
        rx_positions=np.array(rx),
        cell_of_link=np.array(cell, dtype=int),
        seed=seed,
    )


def make_layout(n_cells: int, R: float, r: float, links_per_cell, seed: int) -> NetworkLayout:
    """Pure function of its arguments: same inputs, same layout."""
    rng = np.random.default_rng(seed)
    return place_links(build_hex_layout(n_cells, R), R, r, links_per_cell, rng, seed=seed)


def path_loss_db(d_km):
    """Distance-dependent path loss in dB, ``d_km`` in kilometres."""
    d = np.asarray(d_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = 120.9 + 37.6 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def compose_large_scale(
    layout: NetworkLayout, rng: np.random.Generator, shadow_std_db: float = SHADOWING_STD_DB
) -> LargeScaleGains:
    """Path loss plus i.i.d. log-normal shadowing per ordered (tx, rx) pair."""
    pl = path_loss_db(layout.distances_km())
    shadow = rng.normal(0.0, shadow_std_db, size=pl.shape)
    return LargeScaleGains(alpha=10.0 ** (-(pl + shadow) / 10.0), shadow_db=shadow)
