"""Episode execution: low-level control, waypoint regimes, oracles, policies.

An episode runs as a loop of policy decisions. Depending on the regime a
decision either picks one of the four low-level actions, one of 120
directions at a fixed forward distance, or one waypoint out of the current
predictor's extracted set, which is then executed by teleporting, by
decomposing into 3-degree turns plus 0.25 m steps, or by a single step.

Collision response follows the simulator convention: with sliding enabled a
blocked forward step advances to contact and slides the remaining motion
along the blocking surface; with sliding disabled the step is all-or-nothing.
A stuck no-sliding agent (same position for three decisions) fires an escape
probe over the 120 directions.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .environment import Environment
from .errors import (
    EmptyPatch,
    InsufficientGraph,
    NoWaypoint,
    TeleportBlocked,
)
from .geometry import Pose, angle_diff, normalize_angle, resample_polyline
from .heatmap import NmsConfig, PolarGrid, Waypoint, nms, sample_patch
from .navgraph import NavGraph
from .predictor import WaypointRegressor, geometric_predict, oracle_predict, range_scan

TURN_LEFT = "turn_left"
TURN_RIGHT = "turn_right"
FORWARD = "forward"
STOP = "stop"

HIGH_REGIMES = ("high_teleport", "high_decompose", "high_step")
LOW_REGIMES = ("low_only", "low_teleport")


@dataclass
class SimConfig:
    forward_step: float = 0.25
    turn_angle: float = 15.0        # degrees, low-level agents
    decompose_turn: float = 3.0     # degrees, waypoint decomposition granularity
    allow_sliding: bool = True
    success_dist: float = 3.0
    oracle_stop_dist: float = 1.5
    max_steps_high: int = 50
    max_steps_low: int = 500
    deadlock_patience: int = 3
    reach_tol: float = 0.125        # half a forward step
    greedy_eps: float = 0.05        # min geodesic improvement for greedy policies

    def __post_init__(self):
        if self.forward_step <= 0:
            raise ValueError("forward_step must be positive")
        for angle in (self.turn_angle, self.decompose_turn):
            if angle <= 0 or abs(360.0 / angle - round(360.0 / angle)) > 1e-9:
                raise ValueError(f"turn angle {angle} must divide 360")

    def max_steps(self, regime: str) -> int:
        return self.max_steps_high if regime in ("high_teleport", "high_decompose") \
            else self.max_steps_low


@dataclass
class Episode:
    id: int
    start: Pose
    goal: np.ndarray
    gt_path: np.ndarray
    env_seed: int | None = None

    def __post_init__(self):
        self.goal = np.asarray(self.goal, float).reshape(2)
        self.gt_path = np.asarray(self.gt_path, float).reshape(-1, 2)

    def validate(self, env: Environment):
        if not env.is_free(self.start.position):
            raise ValueError(f"episode {self.id}: blocked start")
        if not env.is_free(self.goal):
            raise ValueError(f"episode {self.id}: blocked goal")
        if not (np.allclose(self.gt_path[0], self.start.position, atol=1e-6)
                and np.allclose(self.gt_path[-1], self.goal, atol=1e-6)):
            raise ValueError(f"episode {self.id}: gt_path endpoints mismatch")
        if not math.isfinite(env.geodesic_field(self.goal).at(self.start.position)):
            raise ValueError(f"episode {self.id}: start disconnected from goal")

    def to_dict(self) -> dict:
        return {"id": self.id,
                "start": [self.start.x, self.start.y, self.start.heading],
                "goal": self.goal.tolist(),
                "gt_path": self.gt_path.tolist(),
                "env_seed": self.env_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "Episode":
        x, y, h = d["start"]
        return cls(id=int(d["id"]), start=Pose(np.array([x, y]), h),
                   goal=d["goal"], gt_path=d["gt_path"],
                   env_seed=d.get("env_seed"))


def save_episodes(episodes, path):
    with open(path, "w") as f:
        for ep in episodes:
            f.write(json.dumps(ep.to_dict()) + "\n")


def load_episodes(path) -> list[Episode]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(Episode.from_dict(json.loads(line)))
    return out


@dataclass
class ActionRecord:
    kind: str
    collided: bool = False

    def to_dict(self):
        return {"kind": self.kind, "collided": self.collided}


@dataclass
class Trajectory:
    poses: list
    actions: list
    decisions: int = 0
    wall_time: float = 0.0
    timed_out: bool = False
    no_waypoints: bool = False

    @property
    def collisions(self) -> int:
        return sum(1 for a in self.actions if a.collided)

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.poses])

    def final_pose(self) -> Pose:
        return self.poses[-1]

    def to_dict(self):
        return {
            "poses": [[p.x, p.y, p.heading] for p in self.poses],
            "actions": [a.to_dict() for a in self.actions],
            "decisions": self.decisions,
            "collisions": self.collisions,
            "wall_time": self.wall_time,
            "timed_out": self.timed_out,
            "no_waypoints": self.no_waypoints,
        }


# ------------------------------------------------------------- low level


def _free_prefix(env: Environment, p: np.ndarray, d: np.ndarray) -> float:
    """Largest t in [0,1] such that the capsule p -> p + t*d is free."""
    if env.segment_free(p, p + d):
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(20):
        mid = 0.5 * (lo + hi)
        if env.segment_free(p, p + mid * d):
            lo = mid
        else:
            hi = mid
    return lo


def _blocking_tangent(env: Environment, p: np.ndarray, d: np.ndarray):
    """Unit tangent of the nearest blocking surface just ahead of ``p``."""
    probe = p + d * 1e-3
    best = None
    best_dist = math.inf
    if len(env.edges):
        dists = env.edges._dist_points_to_edges(probe[None, :])[0]
        k = int(np.argmin(dists))
        best_dist = float(dists[k])
        v = env.edges.v[k]
        best = v / max(np.linalg.norm(v), 1e-12)
    b = env.bounds
    for axis, lo_edge, hi_edge in ((0, b.x0, b.x1), (1, b.y0, b.y1)):
        for edge in (lo_edge, hi_edge):
            dist = abs(probe[axis] - edge)
            if dist < best_dist:
                best_dist = dist
                t = np.zeros(2)
                t[1 - axis] = 1.0
                best = t
    return best


def step_low(env: Environment, pose: Pose, action: str, cfg: SimConfig,
             turn_deg: float | None = None):
    """One low-level action; returns (new pose, collided flag).

    Turns rotate exactly by the configured angle. A blocked forward step
    slides along the obstacle surface when sliding is enabled, otherwise the
    agent stays put. ``collided`` is set whenever the full move was blocked.
    """
    turn = math.radians(turn_deg if turn_deg is not None else cfg.turn_angle)
    if action == TURN_LEFT:
        return Pose(pose.position, pose.heading + turn), False
    if action == TURN_RIGHT:
        return Pose(pose.position, pose.heading - turn), False
    if action != FORWARD:
        raise ValueError(f"unknown low-level action {action!r}")
    d = cfg.forward_step * pose.direction()
    if env.segment_free(pose.position, pose.position + d):
        return Pose(pose.position + d, pose.heading), False
    if not cfg.allow_sliding:
        return Pose(pose.position.copy(), pose.heading), True
    t = _free_prefix(env, pose.position, d)
    p = pose.position + t * d
    remaining = (1.0 - t) * d
    tangent = _blocking_tangent(env, p, d)
    if tangent is not None:
        slide = float(remaining @ tangent) * tangent
        if np.linalg.norm(slide) > 1e-9:
            s = _free_prefix(env, p, slide)
            p = p + s * slide
    return Pose(p, pose.heading), True


def decompose_and_walk(env: Environment, pose: Pose, target: np.ndarray,
                       cfg: SimConfig):
    """Rotate-then-walk to a world-frame target point with low-level controls.

    Heading snaps to the nearest decomposition-granularity multiple of the
    bearing, then forward steps run until the target is within reach
    tolerance or a step stops making progress. Returns (pose, poses, actions).
    """
    target = np.asarray(target, float).reshape(2)
    poses = []
    actions = []
    rel = target - pose.position
    dist = float(np.linalg.norm(rel))
    if dist > 1e-9:
        bearing = math.atan2(rel[1], rel[0])
        step = math.radians(cfg.decompose_turn)
        k = round(normalize_angle(bearing) / step) % round(2 * math.pi / step)
        target_heading = normalize_angle(k * step)
        delta = angle_diff(target_heading, pose.heading)
        n_turns = int(round(abs(delta) / step))
        kind = TURN_LEFT if delta > 0 else TURN_RIGHT
        for _ in range(n_turns):
            pose, _ = step_low(env, pose, kind, cfg, turn_deg=cfg.decompose_turn)
            poses.append(pose)
            actions.append(ActionRecord(kind))
    n_fwd = int(math.ceil(max(dist, 0.0) / cfg.forward_step - 1e-9))
    for _ in range(n_fwd):
        before = pose.position
        pose, collided = step_low(env, pose, FORWARD, cfg)
        poses.append(pose)
        actions.append(ActionRecord(FORWARD, collided))
        if np.linalg.norm(pose.position - target) <= cfg.reach_tol:
            break
        if np.linalg.norm(pose.position - before) < 1e-9:
            break  # blocked with no progress
    return pose, poses, actions


def teleport(env: Environment, pose: Pose, target: np.ndarray) -> Pose:
    """Jump straight to a free world point; heading faces the travel bearing."""
    target = np.asarray(target, float).reshape(2)
    if not env.is_free(target):
        raise TeleportBlocked(f"target {target.tolist()} is blocked")
    rel = target - pose.position
    heading = math.atan2(rel[1], rel[0]) if np.linalg.norm(rel) > 1e-12 else pose.heading
    return Pose(target, heading)


# ---------------------------------------------------------------- oracles


def oracle_action_r2r(env: Environment, pose: Pose, waypoints, goal,
                      cfg: SimConfig):
    """Supervision rule: stop near the goal, else the geodesically best waypoint.

    ``waypoints`` are world points; returns ("stop", None) or ("waypoint", i).
    """
    field = env.geodesic_field(goal)
    if field.at(pose.position) < cfg.oracle_stop_dist:
        return (STOP, None)
    if not len(waypoints):
        raise NoWaypoint("no waypoints offered away from the goal")
    dists = field.at_many(np.asarray(waypoints, float))
    return ("waypoint", int(np.argmin(dists)))


@dataclass
class RxrOracleState:
    sub_goal: np.ndarray
    arc: float = 0.0


def _ring_path_intersections(center: np.ndarray, radius: float, path: np.ndarray):
    """(arc_length, point) for every circle/path-segment intersection."""
    out = []
    arc = 0.0
    for p, q in zip(path[:-1], path[1:]):
        d = q - p
        seg = float(np.linalg.norm(d))
        if seg < 1e-12:
            continue
        f = p - center
        a = seg * seg
        b = 2.0 * float(f @ d)
        c = float(f @ f) - radius * radius
        disc = b * b - 4 * a * c
        if disc >= 0:
            root = math.sqrt(disc)
            for t in ((-b - root) / (2 * a), (-b + root) / (2 * a)):
                if 0.0 <= t <= 1.0:
                    out.append((arc + t * seg, p + t * d))
        arc += seg
    return out


def oracle_action_rxr(env: Environment, pose: Pose, waypoints, gt_path, goal,
                      state: RxrOracleState | None, cfg: SimConfig):
    """Path-following supervision: aim at the farthest 3 m ring intersection.

    Returns ((kind, index), new_state); with no current intersection the
    previous sub-goal is reused to pull the agent back to the path.
    """
    gt_path = np.asarray(gt_path, float)
    if state is None:
        state = RxrOracleState(sub_goal=gt_path[0].copy(), arc=0.0)
    hits = _ring_path_intersections(pose.position, cfg.success_dist, gt_path)
    if hits:
        arc, point = max(hits, key=lambda h: h[0])
        state = RxrOracleState(sub_goal=point, arc=arc)
    goal_field = env.geodesic_field(goal)
    if goal_field.at(pose.position) < cfg.oracle_stop_dist:
        return (STOP, None), state
    if not len(waypoints):
        raise NoWaypoint("no waypoints offered away from the goal")
    pose_field = env.geodesic_field(pose.position)
    sub_field = env.geodesic_field(state.sub_goal)
    pts = np.asarray(waypoints, float)
    cost = pose_field.at_many(pts) + sub_field.at_many(pts)
    return ("waypoint", int(np.argmin(cost))), state


# ---------------------------------------------------------------- policies


class Policy:
    """Decision maker; subclasses implement :meth:`decide`."""

    name = "policy"

    def reset(self, episode: Episode):
        pass

    def decide(self, env, pose, offers, episode, cfg, rng):
        raise NotImplementedError


class OraclePolicy(Policy):
    """Ground-truth supervision: geodesic stop rule plus best waypoint."""

    name = "oracle"

    def decide(self, env, pose, offers, episode, cfg, rng):
        kind, points = offers
        field = env.geodesic_field(episode.goal)
        if field.at(pose.position) < cfg.oracle_stop_dist:
            return (STOP, None)
        if kind == "points":
            return oracle_action_r2r(env, pose, points, episode.goal, cfg)
        return ("action", _best_low_action(env, pose, field, cfg))


class OracleRxrPolicy(Policy):
    """Path-following supervision built on the 3 m ring sub-goal rule."""

    name = "oracle_rxr"

    def __init__(self):
        self._state = None

    def reset(self, episode):
        self._state = None

    def decide(self, env, pose, offers, episode, cfg, rng):
        kind, points = offers
        if kind != "points":
            raise ValueError("rxr oracle drives waypoint regimes only")
        decision, self._state = oracle_action_rxr(
            env, pose, points, episode.gt_path, episode.goal, self._state, cfg)
        return decision


class GreedyGeodesicPolicy(Policy):
    """Oracle selection rule without the ground-truth stop.

    Stops when no offered move improves the geodesic distance to the goal by
    more than the configured epsilon.
    """

    name = "greedy"

    def decide(self, env, pose, offers, episode, cfg, rng):
        kind, points = offers
        field = env.geodesic_field(episode.goal)
        here = field.at(pose.position)
        if kind == "points":
            if not len(points):
                return (STOP, None)
            dists = field.at_many(np.asarray(points, float))
            best = int(np.argmin(dists))
            if dists[best] >= here - cfg.greedy_eps:
                return (STOP, None)
            return ("waypoint", best)
        action = _best_low_action(env, pose, field, cfg, improvement_over=here)
        if action is None:
            return (STOP, None)
        return ("action", action)


class RandomPolicy(Policy):
    """Uniform random choice; stops with small probability."""

    name = "random"

    def __init__(self, stop_prob: float = 0.02):
        self.stop_prob = stop_prob

    def decide(self, env, pose, offers, episode, cfg, rng):
        kind, points = offers
        if rng.random() < self.stop_prob:
            return (STOP, None)
        if kind == "points":
            if not len(points):
                return (STOP, None)
            return ("waypoint", int(rng.integers(len(points))))
        return ("action", [TURN_LEFT, TURN_RIGHT, FORWARD][int(rng.integers(3))])


def _best_low_action(env, pose, goal_field, cfg, improvement_over=None):
    """Pick the turn/forward whose one-step-lookahead position is best."""
    turn = math.radians(cfg.turn_angle)
    cands = []
    for action, heading in ((FORWARD, pose.heading),
                            (TURN_LEFT, pose.heading + turn),
                            (TURN_RIGHT, pose.heading - turn)):
        nxt = pose.position + cfg.forward_step * np.array(
            [math.cos(heading), math.sin(heading)])
        if env.segment_free(pose.position, nxt):
            cands.append((float(goal_field.at(nxt)), action))
        else:
            cands.append((math.inf, action))
    value, action = min(cands, key=lambda c: c[0])
    if improvement_over is not None and value >= improvement_over - cfg.greedy_eps:
        return None
    if math.isinf(value):
        return TURN_LEFT  # rotate in place until something opens up
    return action


POLICIES = {
    "oracle": OraclePolicy,
    "oracle_rxr": OracleRxrPolicy,
    "greedy": GreedyGeodesicPolicy,
    "random": RandomPolicy,
}


# ------------------------------------------------------------- predictors


class PredictorRuntime:
    """Uniform grid source for episode runs: oracle / geometric / trained."""

    def __init__(self, choice: str, graph: NavGraph | None = None,
                 model: WaypointRegressor | None = None,
                 nms_cfg: NmsConfig | None = None):
        if choice not in ("oracle", "geometric", "trained"):
            raise ValueError(f"unknown predictor {choice!r}")
        if choice == "oracle" and graph is None:
            raise ValueError("oracle predictor needs a graph")
        if choice == "trained" and model is None:
            raise ValueError("trained predictor needs a model")
        self.choice = choice
        self.graph = graph
        self.model = model
        self.nms_cfg = nms_cfg or NmsConfig()

    def predict(self, env: Environment, pose: Pose):
        """(grid, origin, waypoints, world points) at the current pose."""
        if self.choice == "oracle":
            node = self.graph.nearest_node(pose.position)
            grid = oracle_predict(self.graph, node)
            origin = self.graph.nodes[node]
        else:
            origin = pose.position
            scan = range_scan(env, origin)
            if self.choice == "geometric":
                grid = geometric_predict(scan, env.agent_radius)
            else:
                grid = self.model.predict_grid(scan)
        wps = nms(grid, self.nms_cfg)
        points = np.array([wp.to_world(origin) for wp in wps]).reshape(-1, 2)
        return grid, origin, wps, points


# ------------------------------------------------------------ run episode


def _parse_regime(regime: str):
    """'fixed_dist:D' / 'fixed_dist_noselect:D' carry the distance inline."""
    if regime.startswith("fixed_dist"):
        name, _, dist = regime.partition(":")
        if not dist:
            raise ValueError(f"regime {regime!r} needs a distance, e.g. fixed_dist:1.0")
        return name, float(dist)
    if regime not in HIGH_REGIMES + LOW_REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    return regime, None


def _snap_free(env: Environment, target: np.ndarray, max_r: float = 0.3):
    """Nearest free point to a (possibly blocked) waypoint target."""
    if env.is_free(target):
        return target
    cell = env.snap_to_free_cell(target, max_rings=int(max_r / env.cell_size) + 1)
    if cell is None:
        return None
    p = env.cell_center(cell)
    return p if np.linalg.norm(p - target) <= max_r else None


def _escape_probe(env: Environment, pose: Pose, cfg: SimConfig):
    """First free 0.25 m step over the 120 directions, nearest-heading first."""
    step = 2.0 * math.pi / 120
    base = round(pose.heading / step)
    order = [0]
    for k in range(1, 61):
        order += [k, -k]
    for off in order:
        heading = normalize_angle((base + off) * step)
        nxt = pose.position + cfg.forward_step * np.array(
            [math.cos(heading), math.sin(heading)])
        if env.segment_free(pose.position, nxt):
            return Pose(nxt, heading)
    return None


def run_episode(env: Environment, episode: Episode, policy: Policy,
                predictor: PredictorRuntime | None, regime: str,
                cfg: SimConfig | None = None, rng_seed: int = 0,
                augment: bool = False, graph: NavGraph | None = None) -> Trajectory:
    """Execute one episode; always returns a Trajectory (flagged on timeout).

    Augmentation resamples the chosen waypoint from its 30-degree heatmap
    patch before moving and is disabled automatically when sliding is off.
    The ``low_teleport`` regime (forward jumps along aligned graph edges)
    needs ``graph``.
    """
    cfg = cfg or SimConfig()
    regime_name, fixed_dist = _parse_regime(regime)
    if regime_name == "low_teleport" and graph is None:
        raise ValueError("low_teleport regime needs a graph")
    rng = np.random.default_rng([int(rng_seed), int(episode.id)])
    policy.reset(episode)
    augment = augment and cfg.allow_sliding and regime_name in HIGH_REGIMES
    t0 = time.perf_counter()
    pose = episode.start.copy()
    traj = Trajectory(poses=[pose], actions=[])
    stuck_count = 0
    step_angle = 2.0 * math.pi / 120
    for _ in range(cfg.max_steps(regime_name)):
        grid = origin = wps = None
        if regime_name in HIGH_REGIMES:
            grid, origin, wps, points = predictor.predict(env, pose)
            offers = ("points", points)
        elif regime_name == "fixed_dist":
            headings = (np.arange(120) + 0.5) * step_angle
            points = pose.position[None, :] + fixed_dist * np.column_stack(
                [np.cos(headings), np.sin(headings)])
            offers = ("points", points)
        else:
            offers = ("actions", None)
        try:
            decision, payload = policy.decide(env, pose, offers, episode, cfg, rng)
        except NoWaypoint:
            traj.no_waypoints = True
            break
        traj.decisions += 1
        if decision == STOP:
            traj.actions.append(ActionRecord(STOP))
            traj.poses.append(pose)
            break
        before = pose.position.copy()
        if decision == "waypoint":
            idx = payload
            if regime_name in HIGH_REGIMES:
                target = points[idx]
                if augment and grid is not None:
                    try:
                        patch_seed = int(rng.integers(2 ** 31))
                        new_wp = sample_patch(grid, wps[idx].angle, patch_seed)
                        target = new_wp.to_world(origin)
                    except EmptyPatch:
                        pass
                if regime_name == "high_teleport":
                    snapped = _snap_free(env, target)
                    if snapped is None:
                        traj.actions.append(ActionRecord("teleport", collided=True))
                        traj.poses.append(pose)
                    else:
                        collided = not np.allclose(snapped, target)
                        pose = teleport(env, pose, snapped)
                        traj.actions.append(ActionRecord("teleport", collided=collided))
                        traj.poses.append(pose)
                elif regime_name == "high_decompose":
                    pose, poses, acts = decompose_and_walk(env, pose, target, cfg)
                    traj.poses.extend(poses)
                    traj.actions.extend(acts)
                else:  # high_step: turn to bearing, single forward step
                    pose, poses, acts = _turn_and_step(env, pose, target, cfg)
                    traj.poses.extend(poses)
                    traj.actions.extend(acts)
            else:  # fixed_dist: walk the fixed distance in the chosen direction
                target = points[idx]
                pose, poses, acts = _turn_and_step(
                    env, pose, target, cfg,
                    n_steps=int(round(fixed_dist / cfg.forward_step)))
                traj.poses.extend(poses)
                traj.actions.extend(acts)
        else:  # low-level action
            action = payload
            jumped = False
            if regime_name == "low_teleport" and action == FORWARD:
                jump = _edge_teleport_target(graph, pose)
                if jump is not None:
                    pose = jump
                    traj.actions.append(ActionRecord("teleport"))
                    traj.poses.append(pose)
                    jumped = True
            if not jumped:
                pose, collided = step_low(env, pose, action, cfg)
                traj.actions.append(ActionRecord(action, collided))
                traj.poses.append(pose)
        # deadlock escape under no-sliding
        if not cfg.allow_sliding:
            if np.linalg.norm(pose.position - before) < 1e-9:
                stuck_count += 1
            else:
                stuck_count = 0
            if stuck_count >= cfg.deadlock_patience:
                escaped = _escape_probe(env, pose, cfg)
                if escaped is not None:
                    pose = escaped
                    traj.actions.append(ActionRecord("probe"))
                    traj.poses.append(pose)
                stuck_count = 0
    else:
        traj.timed_out = True
    traj.wall_time = time.perf_counter() - t0
    return traj


def _turn_and_step(env, pose, target, cfg, n_steps: int = 1):
    """Turn toward the target (3-degree decomposition), then forward steps."""
    poses, actions = [], []
    rel = np.asarray(target, float) - pose.position
    if np.linalg.norm(rel) > 1e-9:
        bearing = math.atan2(rel[1], rel[0])
        step = math.radians(cfg.decompose_turn)
        k = round(normalize_angle(bearing) / step) % round(2 * math.pi / step)
        delta = angle_diff(normalize_angle(k * step), pose.heading)
        n_turns = int(round(abs(delta) / step))
        kind = TURN_LEFT if delta > 0 else TURN_RIGHT
        for _ in range(n_turns):
            pose, _ = step_low(env, pose, kind, cfg, turn_deg=cfg.decompose_turn)
            poses.append(pose)
            actions.append(ActionRecord(kind))
    for _ in range(max(1, n_steps)):
        before = pose.position
        pose, collided = step_low(env, pose, FORWARD, cfg)
        poses.append(pose)
        actions.append(ActionRecord(FORWARD, collided))
        if np.linalg.norm(pose.position - before) < 1e-9:
            break
    return pose, poses, actions


def _edge_teleport_target(graph: NavGraph, pose: Pose, node_tol: float = 0.15,
                          align_tol_deg: float = 7.5) -> Pose | None:
    """Forward jump along an aligned incident edge when standing on a node."""
    ids = graph.node_ids()
    pos = np.array([graph.nodes[i] for i in ids])
    d = np.linalg.norm(pos - pose.position, axis=1)
    k = int(np.argmin(d))
    if d[k] > node_tol:
        return None
    nid = ids[k]
    for nb in graph.neighbors(nid):
        rel = graph.nodes[nb] - graph.nodes[nid]
        bearing = math.atan2(rel[1], rel[0])
        if abs(angle_diff(bearing, pose.heading)) <= math.radians(align_tol_deg):
            return Pose(graph.nodes[nb].copy(), bearing)
    return None


# ----------------------------------------------------------- episode gen


def generate_episodes(env: Environment, graph: NavGraph, count: int, seed: int,
                      min_hops: int = 4, max_hops: int = 7,
                      env_seed: int | None = None) -> list[Episode]:
    """Shortest-graph-path episodes between random node pairs.

    Ground-truth paths are shortest paths on the graph (matching the
    benchmark convention) whose hop count falls in [min_hops, max_hops],
    densified to 0.25 m; the start pose faces the second path node.
    """
    ids = graph.node_ids()
    if len(ids) < min_hops + 1:
        raise InsufficientGraph(f"{len(ids)} nodes < {min_hops + 1}")
    adj = {n: graph.neighbors(n) for n in ids}

    def bfs_path(src, dst):
        from collections import deque

        prev = {src: None}
        q = deque([src])
        while q:
            n = q.popleft()
            if n == dst:
                path = [n]
                while prev[n] is not None:
                    n = prev[n]
                    path.append(n)
                return path[::-1]
            for nb in adj[n]:
                if nb not in prev:
                    prev[nb] = n
                    q.append(nb)
        return None

    rng = np.random.default_rng([int(seed), 202])
    episodes = []
    attempts = 0
    while len(episodes) < count:
        attempts += 1
        if attempts > 200 * count:
            raise InsufficientGraph("could not sample enough paths in hop range")
        a, b = rng.choice(len(ids), size=2, replace=False)
        path = bfs_path(ids[int(a)], ids[int(b)])
        if path is None or not (min_hops <= len(path) - 1 <= max_hops):
            continue
        pts = np.array([graph.nodes[n] for n in path])
        gt = resample_polyline(pts, 0.25)
        rel = pts[1] - pts[0]
        start = Pose(pts[0].copy(), math.atan2(rel[1], rel[0]))
        episodes.append(Episode(id=len(episodes), start=start, goal=pts[-1].copy(),
                                gt_path=gt, env_seed=env_seed))
    return episodes
