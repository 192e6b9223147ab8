"""Polar waypoint heatmaps: 120 angular x 12 radial bins around a pose.

Angle bin ``a`` covers ``[3a, 3(a+1))`` degrees relative to the reference
heading; distance ring ``d`` is centered at ``0.25 * (d + 1)`` meters, so the
rings run 0.25 m to 3.00 m. Ground-truth targets place an anisotropic
Gaussian at each waypoint (max-combined so peaks stay at 1), and greedy
non-maximum suppression extracts up to five waypoints back out.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import EmptyPatch, OutOfRange

N_ANGLES = 120
N_DISTS = 12
ANGLE_BIN_DEG = 3.0
DIST_STEP = 0.25
DIST_MIN = 0.25
DIST_MAX = 3.00
# half a ring of slack on both sides of the ring centers
DIST_COVER_LO = DIST_MIN - DIST_STEP / 2
DIST_COVER_HI = DIST_MAX + DIST_STEP / 2

ANGLE_CENTERS_DEG = (np.arange(N_ANGLES) + 0.5) * ANGLE_BIN_DEG
DIST_CENTERS = DIST_STEP * (np.arange(N_DISTS) + 1)

PWHM_MAGIC = b"PWHM"


@dataclass
class GaussianSpec:
    """Anisotropic Gaussian target shape (standard deviations)."""

    sigma_dist: float = 1.75   # meters
    sigma_angle: float = 15.0  # degrees

    def __post_init__(self):
        if self.sigma_dist <= 0 or self.sigma_angle <= 0:
            raise ValueError("Gaussian sigmas must be positive")


@dataclass
class NmsConfig:
    """Peak extraction parameters.

    Note: the window must cover every bin where a single target Gaussian
    still exceeds the threshold, otherwise extraction invents peaks out of
    tails. With the default sigmas that forces suppress_angle >= 21 degrees
    and full-column radial suppression.
    """

    k_max: int = 5
    suppress_angle: float = 21.0   # degrees
    suppress_dist: float = 2.75    # meters
    threshold_frac: float = 0.35   # relative to the grid max


@dataclass(frozen=True)
class Waypoint:
    """One extracted waypoint: polar offset from the reference heading."""

    angle: float      # radians
    distance: float   # meters
    score: float = 1.0

    def bin(self):
        return bin_of(self.angle, self.distance)

    def to_world(self, origin, heading: float = 0.0) -> np.ndarray:
        a = heading + self.angle
        return np.asarray(origin, float) + self.distance * np.array(
            [math.cos(a), math.sin(a)])


class PolarGrid:
    """Non-negative score grid over the (angle, distance) bins."""

    def __init__(self, values=None):
        if values is None:
            values = np.zeros((N_ANGLES, N_DISTS))
        values = np.asarray(values, dtype=float)
        if values.shape != (N_ANGLES, N_DISTS):
            raise ValueError(f"expected {(N_ANGLES, N_DISTS)} grid, got {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("grid values must be finite and non-negative")
        self.values = values

    def max(self) -> float:
        return float(self.values.max())

    def copy(self) -> "PolarGrid":
        return PolarGrid(self.values.copy())

    @staticmethod
    def bin_center(a: int, d: int):
        """(angle radians, distance meters) of a bin center."""
        return math.radians(ANGLE_CENTERS_DEG[a]), float(DIST_CENTERS[d])

    # -------------------------------------------------------------- binary io

    def to_bytes(self) -> bytes:
        head = PWHM_MAGIC + struct.pack("<II", N_ANGLES, N_DISTS)
        return head + self.values.astype("<f4").tobytes(order="C")

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PolarGrid":
        if blob[:4] != PWHM_MAGIC:
            raise ValueError("bad heatmap magic")
        na, nd = struct.unpack("<II", blob[4:12])
        if (na, nd) != (N_ANGLES, N_DISTS):
            raise ValueError(f"unsupported heatmap shape {(na, nd)}")
        vals = np.frombuffer(blob[12:12 + 4 * na * nd], dtype="<f4").astype(float)
        return cls(vals.reshape(na, nd))

    def to_json(self) -> str:
        return json.dumps({"n_angles": N_ANGLES, "n_dists": N_DISTS,
                           "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "PolarGrid":
        d = json.loads(text)
        return cls(np.asarray(d["values"]))


def bin_of(angle: float, distance: float):
    """Map a polar offset to its (angle, distance) bin indices."""
    if not (DIST_COVER_LO <= distance < DIST_COVER_HI):
        raise OutOfRange(f"distance {distance} outside [{DIST_COVER_LO}, {DIST_COVER_HI})")
    deg = math.degrees(angle) % 360.0
    a = int(deg // ANGLE_BIN_DEG) % N_ANGLES
    d = int(math.floor(distance / DIST_STEP + 0.5)) - 1
    return a, min(max(d, 0), N_DISTS - 1)


def _circular_deg_diff(a_deg: np.ndarray, b_deg: float) -> np.ndarray:
    d = (a_deg - b_deg) % 360.0
    return np.where(d > 180.0, d - 360.0, d)


def make_target(waypoints, spec: GaussianSpec | None = None) -> PolarGrid:
    """Gaussian ground-truth heatmap for a set of waypoints (max-combined)."""
    spec = spec or GaussianSpec()
    values = np.zeros((N_ANGLES, N_DISTS))
    for wp in waypoints:
        angle, distance = (wp.angle, wp.distance) if isinstance(wp, Waypoint) else wp[:2]
        bin_of(angle, distance)  # coverage check; raises OutOfRange
        d_ang = _circular_deg_diff(ANGLE_CENTERS_DEG, math.degrees(angle) % 360.0)
        d_dst = DIST_CENTERS - distance
        g = np.exp(
            -(d_dst[None, :] ** 2) / (2 * spec.sigma_dist ** 2)
            - (d_ang[:, None] ** 2) / (2 * spec.sigma_angle ** 2)
        )
        np.maximum(values, g, out=values)
    return PolarGrid(values)


def nms(grid: PolarGrid, cfg: NmsConfig | None = None) -> list[Waypoint]:
    """Greedy peak extraction; returns waypoints ordered by descending score.

    Ties break toward the lower angle index, then lower distance index.
    Returns an empty list for an all-zero grid.
    """
    cfg = cfg or NmsConfig()
    vals = grid.values.copy()
    top = vals.max()
    if top <= 0:
        return []
    threshold = cfg.threshold_frac * top
    out: list[Waypoint] = []
    while len(out) < cfg.k_max:
        flat = int(np.argmax(vals))
        a, d = divmod(flat, N_DISTS)
        score = float(vals[a, d])
        if score < threshold or score <= 0:
            break
        angle, distance = PolarGrid.bin_center(a, d)
        out.append(Waypoint(angle=angle, distance=distance, score=score))
        da = np.abs(_circular_deg_diff(ANGLE_CENTERS_DEG, ANGLE_CENTERS_DEG[a]))
        dd = np.abs(DIST_CENTERS - DIST_CENTERS[d])
        window = (da[:, None] <= cfg.suppress_angle + 1e-9) & (
            dd[None, :] <= cfg.suppress_dist + 1e-9)
        vals[window] = 0.0
    return out


def sample_patch(grid: PolarGrid, selected_angle: float, rng_seed: int) -> Waypoint:
    """Sample a waypoint from the 30-degree patch around ``selected_angle``.

    The patch is the 10 angular bins of one camera view times all 12 rings;
    bins are drawn with probability proportional to their score. Raises
    :class:`EmptyPatch` when the patch carries no mass.
    """
    a0 = int((math.degrees(selected_angle) % 360.0) // ANGLE_BIN_DEG) % N_ANGLES
    cols = (a0 + np.arange(-4, 6)) % N_ANGLES
    patch = grid.values[cols, :]
    total = patch.sum()
    if total <= 0:
        raise EmptyPatch(f"no mass within 15 degrees of {selected_angle:.3f} rad")
    probs = (patch / total).ravel()
    rng = np.random.default_rng(rng_seed)
    flat = int(rng.choice(len(probs), p=probs))
    a = int(cols[flat // N_DISTS])
    d = flat % N_DISTS
    angle, distance = PolarGrid.bin_center(a, d)
    return Waypoint(angle=angle, distance=distance, score=float(grid.values[a, d]))
