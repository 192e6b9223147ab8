"""Candidate-waypoint predictors sharing the polar-heatmap output contract.

Three predictors:

* ``oracle_predict`` reads adjacent nodes straight off a refined graph (the
  training-target generator and the upper-bound predictor),
* ``geometric_predict`` scores reachable rings from a 120-ray range scan (a
  deterministic non-learned baseline),
* :class:`WaypointRegressor`, a small trainable regressor that maps the scan
  of each 30-degree sector (plus one neighbor sector per side) to the 12 ring
  scores of its central 3-degree bin. The restricted receptive field mirrors
  the neighbor-constrained mixing of the reference pipeline.

Scans are always taken with heading 0 (world frame); rotational equivariance
comes from rotating grids, never from re-scanning.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .environment import Environment
from .errors import AlignmentError, Diverged
from .heatmap import (
    DIST_CENTERS,
    N_ANGLES,
    N_DISTS,
    GaussianSpec,
    PolarGrid,
    Waypoint,
    make_target,
)
from .navgraph import NavGraph

SCAN_MAX_RANGE = 3.25
SECTOR_RAYS = 10          # one 30-degree camera view
FEATURES_PER_SECTOR = 16  # 10 rays + min/mean/max + 3 coarse first differences
WINDOW_SECTORS = 3        # own sector plus one neighbor each side


def range_scan(env: Environment, position, max_range: float = SCAN_MAX_RANGE) -> np.ndarray:
    """120-ray world-frame range scan at ``position`` (one ray per 3-degree bin)."""
    return env.scan(position, n_rays=N_ANGLES, max_range=max_range, heading=0.0)


# ------------------------------------------------------------------ oracle


def oracle_predict(graph: NavGraph, node_id: int,
                   spec: GaussianSpec | None = None) -> PolarGrid:
    """Gaussian heatmap of the node's graph neighbors (world frame).

    Neighbors beyond the outermost ring are clipped to it along their
    direction; an isolated node yields an all-zero grid.
    """
    center = graph.nodes[node_id]
    wps = []
    for nb in graph.neighbors(node_id):
        rel = graph.nodes[nb] - center
        dist = float(np.linalg.norm(rel))
        if dist < 1e-9:
            continue
        angle = math.atan2(rel[1], rel[0])
        wps.append((angle, min(dist, float(DIST_CENTERS[-1]))))
    return make_target(wps, spec)


# --------------------------------------------------------------- geometric


_DELTA = None


def _ray_delta_tables():
    """cos/sin of the circular angle between every (bin, ray) pair."""
    global _DELTA
    if _DELTA is None:
        step = 2.0 * math.pi / N_ANGLES
        d = (np.arange(N_ANGLES)[None, :] - np.arange(N_ANGLES)[:, None]) * step
        _DELTA = (np.cos(d), np.abs(np.sin(d)))
    return _DELTA


def geometric_predict(scan: np.ndarray, agent_radius: float = 0.10,
                      margin: float = 0.05,
                      max_range: float = SCAN_MAX_RANGE) -> PolarGrid:
    """Range-scan baseline: score rings below the locally reachable range.

    reachable(a) starts from the min of the scan over a +-3-bin window minus
    the agent radius and a safety margin, then every actual scan hit is
    treated as obstacle evidence: travel along bin ``a`` is shortened so the
    swept capsule keeps ``agent_radius + margin`` clearance from each hit
    point (the fixed window alone cannot protect long segments against
    close off-axis obstacles). Rings at or below reachable score
    proportionally to their radius; an openness factor (local max of
    reachable over a +-5-bin window, normalized) boosts corridor and
    doorway axes; the output is normalized to peak 1.
    """
    scan = np.asarray(scan, float)
    if scan.shape != (N_ANGLES,):
        raise ValueError(f"expected ({N_ANGLES},) scan, got {scan.shape}")
    pad = agent_radius + margin
    windowed = np.min(np.stack([np.roll(scan, k) for k in range(-3, 4)]), axis=0)
    reachable = windowed - pad
    cos_d, abs_sin_d = _ray_delta_tables()
    hit = scan < max_range - 1e-9
    if hit.any():
        s = scan[None, :]                      # (bin, ray) broadcast
        x = s * cos_d                          # along-track offset of each hit
        y = s * abs_sin_d                      # cross-track offset
        constrains = hit[None, :] & (x > 0) & (y < pad)
        with np.errstate(invalid="ignore"):
            bound = x - np.sqrt(np.maximum(pad * pad - y * y, 0.0))
        bound = np.where(constrains, bound, np.inf)
        reachable = np.minimum(reachable, bound.min(axis=1))
    score = np.where(DIST_CENTERS[None, :] <= reachable[:, None],
                     DIST_CENTERS[None, :] / DIST_CENTERS[-1], 0.0)
    local_max = np.max(np.stack([np.roll(reachable, k) for k in range(-5, 6)]), axis=0)
    top = local_max.max()
    if top > 0:
        score = score * np.clip(local_max[:, None] / top, 0.0, 1.0)
    peak = score.max()
    if peak > 0:
        score = score / peak
    return PolarGrid(score)


# ----------------------------------------------------------------- dataset


@dataclass
class ScanDataset:
    """Aligned (scan, target grid) samples with their world origins."""

    scans: np.ndarray        # (N, 120)
    targets: np.ndarray      # (N, 120, 12)
    origins: np.ndarray      # (N, 2)
    env_seeds: np.ndarray    # (N,)
    node_ids: np.ndarray     # (N,)

    def __len__(self):
        return len(self.scans)

    def subset(self, mask) -> "ScanDataset":
        return ScanDataset(self.scans[mask], self.targets[mask], self.origins[mask],
                           self.env_seeds[mask], self.node_ids[mask])

    def split_by_seeds(self, train_seeds, val_seeds):
        train_seeds = set(int(s) for s in train_seeds)
        val_seeds = set(int(s) for s in val_seeds)
        if train_seeds & val_seeds:
            raise ValueError("train/val environment seed lists overlap")
        tr = np.array([s in train_seeds for s in self.env_seeds])
        va = np.array([s in val_seeds for s in self.env_seeds])
        return self.subset(tr), self.subset(va)

    @staticmethod
    def concatenate(parts: list["ScanDataset"]) -> "ScanDataset":
        return ScanDataset(
            np.concatenate([p.scans for p in parts]),
            np.concatenate([p.targets for p in parts]),
            np.concatenate([p.origins for p in parts]),
            np.concatenate([p.env_seeds for p in parts]),
            np.concatenate([p.node_ids for p in parts]),
        )

    # record file: per sample a raw f32 scan block then a PWHM grid block
    def save(self, records_path, index_path):
        with open(records_path, "wb") as f:
            for k in range(len(self)):
                f.write(self.scans[k].astype("<f4").tobytes())
                f.write(PolarGrid(self.targets[k]).to_bytes())
        index = {
            "n": len(self),
            "scan_bytes": 4 * N_ANGLES,
            "grid_bytes": 12 + 4 * N_ANGLES * N_DISTS,
            "samples": [
                {"env_seed": int(self.env_seeds[k]), "node": int(self.node_ids[k]),
                 "origin": self.origins[k].tolist()}
                for k in range(len(self))
            ],
        }
        with open(index_path, "w") as f:
            json.dump(index, f)

    @classmethod
    def load(cls, records_path, index_path) -> "ScanDataset":
        with open(index_path) as f:
            index = json.load(f)
        n = index["n"]
        sb, gb = index["scan_bytes"], index["grid_bytes"]
        scans = np.zeros((n, N_ANGLES))
        targets = np.zeros((n, N_ANGLES, N_DISTS))
        with open(records_path, "rb") as f:
            blob = f.read()
        step = sb + gb
        for k in range(n):
            off = k * step
            scans[k] = np.frombuffer(blob[off:off + sb], dtype="<f4")
            targets[k] = PolarGrid.from_bytes(blob[off + sb:off + step]).values
        meta = index["samples"]
        return cls(scans, targets,
                   np.array([m["origin"] for m in meta]),
                   np.array([m["env_seed"] for m in meta]),
                   np.array([m["node"] for m in meta]))


def build_training_set(env: Environment, graph: NavGraph, env_seed: int = 0,
                       spec: GaussianSpec | None = None) -> ScanDataset:
    """One (scan, oracle target) sample per graph node, ordered by node id."""
    ids = graph.node_ids()
    scans = np.zeros((len(ids), N_ANGLES))
    targets = np.zeros((len(ids), N_ANGLES, N_DISTS))
    origins = np.zeros((len(ids), 2))
    for k, nid in enumerate(ids):
        origins[k] = graph.nodes[nid]
        scans[k] = range_scan(env, graph.nodes[nid])
        targets[k] = oracle_predict(graph, nid, spec).values
    return ScanDataset(scans, targets, origins,
                       np.full(len(ids), int(env_seed)), np.array(ids))


# --------------------------------------------------------------- regressor


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-6  # decoupled
    batch_size: int = 64
    epochs: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("training rates and sizes must be positive")


def _sector_features(rays: np.ndarray) -> np.ndarray:
    """(..., 10) sector rays -> (..., 16) features."""
    mn = rays.min(axis=-1, keepdims=True)
    mx = rays.max(axis=-1, keepdims=True)
    mean = rays.mean(axis=-1, keepdims=True)
    diffs = np.stack([rays[..., 3] - rays[..., 0],
                      rays[..., 6] - rays[..., 3],
                      rays[..., 9] - rays[..., 6]], axis=-1)
    return np.concatenate([rays, mn, mean, mx, diffs], axis=-1)


_RAY_IDX = None


def _window_ray_index() -> np.ndarray:
    """(120, 3, 10) ray indices: for each bin, its sector and both neighbors."""
    global _RAY_IDX
    if _RAY_IDX is None:
        base = np.arange(-4, 6)  # 10 rays spanning 30 degrees around the bin
        sector_offsets = np.array([-SECTOR_RAYS, 0, SECTOR_RAYS])
        a = np.arange(N_ANGLES)
        _RAY_IDX = (a[:, None, None] + sector_offsets[None, :, None]
                    + base[None, None, :]) % N_ANGLES
    return _RAY_IDX


def scan_features(scans: np.ndarray) -> np.ndarray:
    """(N, 120) scans -> (N, 120, 48) per-bin window features."""
    scans = np.atleast_2d(np.asarray(scans, float))
    rays = scans[:, _window_ray_index()]          # (N, 120, 3, 10)
    feats = _sector_features(rays)                # (N, 120, 3, 16)
    return feats.reshape(scans.shape[0], N_ANGLES, WINDOW_SECTORS * FEATURES_PER_SECTOR)


class WaypointRegressor(BaseEstimator):
    """Windowed scan-to-heatmap regressor (48 -> hidden -> 12 per bin).

    A plain two-layer perceptron evaluated at every 3-degree shift, trained
    by mini-batch gradient descent with per-parameter adaptive step scaling
    and decoupled weight decay, minimizing MSE against oracle heatmaps.
    Fully deterministic given ``seed``.
    """

    def __init__(self, hidden: int = 64, learning_rate: float = 1e-3,
                 weight_decay: float = 1e-6, batch_size: int = 64,
                 epochs: int = 300, seed: int = 0):
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    # --------------------------------------------------------------- params

    def _init_params(self, rng: np.random.Generator):
        n_in = WINDOW_SECTORS * FEATURES_PER_SECTOR
        s1 = math.sqrt(2.0 / n_in)
        s2 = math.sqrt(2.0 / self.hidden)
        self.params_ = {
            "W1": rng.normal(0.0, s1, (n_in, self.hidden)),
            "b1": np.zeros(self.hidden),
            "W2": rng.normal(0.0, s2, (self.hidden, N_DISTS)),
            "b2": np.zeros(N_DISTS),
        }

    def get_flat_params(self) -> np.ndarray:
        return np.concatenate([self.params_[k].ravel() for k in ("W1", "b1", "W2", "b2")])

    def set_flat_params(self, flat: np.ndarray):
        out = {}
        off = 0
        for k in ("W1", "b1", "W2", "b2"):
            shape = self.params_[k].shape
            size = int(np.prod(shape))
            out[k] = flat[off:off + size].reshape(shape).copy()
            off += size
        self.params_ = out

    # -------------------------------------------------------------- forward

    def _forward(self, feats: np.ndarray):
        z = feats @ self.params_["W1"] + self.params_["b1"]
        h = np.maximum(z, 0.0)
        out = h @ self.params_["W2"] + self.params_["b2"]
        return z, h, out

    def loss_and_grads(self, feats: np.ndarray, targets: np.ndarray):
        """Mean-squared-error loss and analytic parameter gradients."""
        z, h, out = self._forward(feats)
        diff = out - targets
        loss = float(np.mean(diff ** 2))
        dout = 2.0 * diff / diff.size
        flat_h = h.reshape(-1, self.hidden)
        flat_dout = dout.reshape(-1, N_DISTS)
        gW2 = flat_h.T @ flat_dout
        gb2 = flat_dout.sum(axis=0)
        dh = dout @ self.params_["W2"].T
        dz = dh * (z > 0)
        n_in = feats.shape[-1]
        gW1 = feats.reshape(-1, n_in).T @ dz.reshape(-1, self.hidden)
        gb1 = dz.reshape(-1, self.hidden).sum(axis=0)
        return loss, {"W1": gW1, "b1": gb1, "W2": gW2, "b2": gb2}

    def mse(self, scans: np.ndarray, targets: np.ndarray) -> float:
        feats = scan_features(scans)
        _, _, out = self._forward(feats)
        return float(np.mean((out - targets) ** 2))

    # ------------------------------------------------------------- training

    def fit(self, X, y, X_val=None, y_val=None):
        """Train on scans ``X`` (N, 120) against grids ``y`` (N, 120, 12).

        Stores the per-epoch loss curve on ``loss_curve_`` (list of
        (train_mse, val_mse) tuples; val is NaN without validation data).
        """
        X = np.asarray(X, float)
        y = np.asarray(y, float).reshape(len(X), N_ANGLES, N_DISTS)
        rng = np.random.default_rng(self.seed)
        self._init_params(rng)
        feats = scan_features(X)
        val_feats = None
        if X_val is not None and len(X_val):
            val_feats = scan_features(np.asarray(X_val, float))
            y_val = np.asarray(y_val, float).reshape(len(X_val), N_ANGLES, N_DISTS)
        m = {k: np.zeros_like(v) for k, v in self.params_.items()}
        v = {k: np.zeros_like(p) for k, p in self.params_.items()}
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        t = 0
        self.loss_curve_ = []
        n = len(X)
        for epoch in range(self.epochs):
            order = rng.permutation(n)
            epoch_loss = 0.0
            for start in range(0, n, self.batch_size):
                batch = order[start:start + self.batch_size]
                loss, grads = self.loss_and_grads(feats[batch], y[batch])
                if not math.isfinite(loss):
                    raise Diverged(f"non-finite loss at epoch {epoch}", epoch=epoch)
                epoch_loss += loss * len(batch)
                t += 1
                for k, p in self.params_.items():
                    g = grads[k]
                    m[k] = beta1 * m[k] + (1 - beta1) * g
                    v[k] = beta2 * v[k] + (1 - beta2) * g * g
                    m_hat = m[k] / (1 - beta1 ** t)
                    v_hat = v[k] / (1 - beta2 ** t)
                    p -= self.learning_rate * (m_hat / (np.sqrt(v_hat) + eps)
                                               + self.weight_decay * p)
            train_mse = epoch_loss / n
            if val_feats is not None:
                _, _, out = self._forward(val_feats)
                val_mse = float(np.mean((out - y_val) ** 2))
            else:
                val_mse = float("nan")
            self.loss_curve_.append((train_mse, val_mse))
        return self

    # ------------------------------------------------------------ inference

    def predict(self, X) -> np.ndarray:
        """Predicted grids (N, 120, 12), clipped to the non-negative contract."""
        feats = scan_features(np.asarray(X, float))
        _, _, out = self._forward(feats)
        return np.maximum(out, 0.0)

    def predict_grid(self, scan: np.ndarray) -> PolarGrid:
        return PolarGrid(self.predict(scan[None, :])[0])

    # ---------------------------------------------------------------- io

    def to_dict(self) -> dict:
        flat = self.get_flat_params().astype("<f4")
        return {
            "config": self.get_params(),
            "shapes": {k: list(v.shape) for k, v in self.params_.items()},
            "weights_hex": flat.tobytes().hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WaypointRegressor":
        model = cls(**d["config"])
        model._init_params(np.random.default_rng(model.seed))
        flat = np.frombuffer(bytes.fromhex(d["weights_hex"]), dtype="<f4").astype(float)
        model.set_flat_params(flat)
        return model

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path) -> "WaypointRegressor":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def train(model: WaypointRegressor, train_set: ScanDataset, cfg: TrainConfig,
          val_set: ScanDataset | None = None):
    """Train ``model`` under ``cfg``; returns (model, loss curve)."""
    if len(train_set) == 0:
        raise ValueError("empty training set")
    model.set_params(learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay,
                     batch_size=cfg.batch_size, epochs=cfg.epochs, seed=cfg.seed)
    model.fit(train_set.scans, train_set.targets,
              X_val=val_set.scans if val_set is not None and len(val_set) else None,
              y_val=val_set.targets if val_set is not None and len(val_set) else None)
    return model, list(model.loss_curve_)


# ----------------------------------------------------------------- metrics


@dataclass
class PredictorReport:
    delta_abs: float   # mean | |P| - |T| |
    pct_open: float    # percent of predictions in open space with clear sight line
    chamfer: float     # meters
    hausdorff: float   # meters
    n_samples: int = 0

    def to_dict(self):
        return {"delta_abs": self.delta_abs, "pct_open": self.pct_open,
                "chamfer": self.chamfer, "hausdorff": self.hausdorff,
                "n_samples": self.n_samples}


def _to_points(wps, origin) -> np.ndarray:
    pts = []
    for wp in wps:
        if isinstance(wp, Waypoint):
            pts.append(wp.to_world(origin))
        else:
            ang, dist = wp[:2]
            pts.append(np.asarray(origin, float)
                       + dist * np.array([math.cos(ang), math.sin(ang)]))
    return np.array(pts).reshape(-1, 2)


def evaluate_predictor(predictions, targets, env: Environment, origins) -> PredictorReport:
    """Waypoint-set quality: count error, openness, Chamfer and Hausdorff.

    ``predictions`` and ``targets`` are aligned lists of waypoint sets (polar,
    world frame) with per-sample world ``origins``. Samples where either set
    is empty are excluded from the distance means but count toward the count
    error; openness requires a free endpoint and a clear straight segment
    from the origin.
    """
    if len(predictions) != len(targets) or len(predictions) != len(origins):
        raise AlignmentError(
            f"got {len(predictions)} predictions, {len(targets)} targets, "
            f"{len(origins)} origins")
    deltas = []
    chamfers = []
    hausdorffs = []
    n_open = 0
    n_pred = 0
    for pred, targ, origin in zip(predictions, targets, origins):
        deltas.append(abs(len(pred) - len(targ)))
        p = _to_points(pred, origin)
        t = _to_points(targ, origin)
        for q in p:
            n_pred += 1
            if env.is_free(q) and env.segment_free(origin, q):
                n_open += 1
        if len(p) == 0 or len(t) == 0:
            continue
        d = np.linalg.norm(p[:, None, :] - t[None, :, :], axis=2)
        chamfers.append(0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean()))
        hausdorffs.append(max(d.min(axis=1).max(), d.min(axis=0).max()))
    return PredictorReport(
        delta_abs=float(np.mean(deltas)) if deltas else 0.0,
        pct_open=100.0 * n_open / n_pred if n_pred else 0.0,
        chamfer=float(np.mean(chamfers)) if chamfers else 0.0,
        hausdorff=float(np.mean(hausdorffs)) if hausdorffs else 0.0,
        n_samples=len(predictions),
    )
