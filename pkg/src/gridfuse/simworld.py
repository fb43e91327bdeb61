"""Procedural environments, patrol trajectories, and seeded experiment runs."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import GridSpec, Pose2D, normalize_angle
from .fusion import FusionParams, make_grid
from .metrics import EvalSet, build_eval_set
from .sensor import NO_DECAY, LidarConfig, ObservationBatch, SensorDecay, observe

NOMINAL_ROBOT_SPEED = 0.5  # m/s, converts patrol step size into a tick duration
PATROL_INSET = 1.5  # m from the environment bounds
INTERIOR_MARGIN = 2.1  # obstacles and dividers stay this far from the bounds


class GenerationError(RuntimeError):
    """Environment constraints could not be satisfied within the retry budget."""


@dataclass
class DynamicObstacle:
    verts: np.ndarray  # (k, 2) offsets from the center
    center: np.ndarray  # (2,)
    velocity: np.ndarray  # (2,) m/s

    @property
    def radius(self) -> float:
        return float(np.max(np.hypot(self.verts[:, 0], self.verts[:, 1])))

    def polygon(self) -> np.ndarray:
        return self.verts + self.center


@dataclass
class Environment:
    width: float
    height: float
    wall_segments: np.ndarray  # (n, 4) as x1, y1, x2, y2
    static_polys: list[np.ndarray]
    dynamic: list[DynamicObstacle]

    def segments(self, include_dynamic: bool = True) -> np.ndarray:
        parts = [self.wall_segments]
        polys = list(self.static_polys)
        if include_dynamic:
            polys += [d.polygon() for d in self.dynamic]
        for poly in polys:
            nxt = np.roll(poly, -1, axis=0)
            parts.append(np.hstack([poly, nxt]))
        return np.vstack(parts)


@dataclass(frozen=True)
class EnvParams:
    width: float = 50.0
    height: float = 50.0
    n_rooms: int = 3
    n_corridors: int = 4
    n_static: int = 5
    n_dynamic: int = 3
    dynamic_speed: float = 0.5


@dataclass(frozen=True)
class RobotConfig:
    step_size: float = 0.38
    n_steps: int = 500
    lidar: LidarConfig = field(default_factory=LidarConfig)
    odom_sigma_trans: float = 0.02
    odom_sigma_rot: float = 0.005
    start_frac: float = 0.0
    direction: int = 1  # +1 counter-clockwise, -1 clockwise

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    env: EnvParams = field(default_factory=EnvParams)
    robots: tuple[RobotConfig, ...] = (RobotConfig(),)
    arms: tuple[tuple[str, FusionParams], ...] = ()
    decay: SensorDecay = NO_DECAY
    resolution: float = 0.1
    rendezvous_distance: float = 2.5


@dataclass
class SimResult:
    spec: GridSpec
    grids: dict[str, object]
    eval_set: EvalSet
    occ_counts: np.ndarray
    free_counts: np.ndarray

    def probabilities(self, arm: str) -> np.ndarray:
        return self.grids[arm].probabilities()

    def hash(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.grids):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.probabilities(name)).tobytes())
        return h.hexdigest()


def _rect_segments(x0, y0, x1, y1) -> np.ndarray:
    return np.array([
        [x0, y0, x1, y0],
        [x1, y0, x1, y1],
        [x1, y1, x0, y1],
        [x0, y1, x0, y0],
    ])


def _convex_poly(rng: np.random.Generator, cx: float, cy: float, radius: float) -> np.ndarray:
    pts = rng.uniform(-radius, radius, size=(12, 2))
    pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= radius]
    if len(pts) < 3:
        pts = np.array([[radius, 0.0], [0.0, radius], [-radius, 0.0], [0.0, -radius]])
    hull = _convex_hull(pts)
    return hull + np.array([cx, cy])


def _convex_hull(pts: np.ndarray) -> np.ndarray:
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(points):
        out = []
        for p in points:
            while len(out) >= 2:
                u = out[-1] - out[-2]
                v = p - out[-2]
                if u[0] * v[1] - u[1] * v[0] > 0:
                    break
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def generate_environment(seed, params: EnvParams, max_retries: int = 200) -> Environment:
    """Deterministic rooms-and-obstacles world for a given seed."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
    w, h = params.width, params.height
    margin = INTERIOR_MARGIN
    walls = [_rect_segments(0.0, 0.0, w, h)]

    # Room dividers: vertical walls with door gaps acting as corridors.
    n_dividers = max(params.n_rooms - 1, 0)
    divider_xs: list[float] = []
    if n_dividers:
        lo, hi = margin + 1.0, w - margin - 1.0
        slots = np.linspace(lo, hi, n_dividers + 2)[1:-1]
        gaps_per = [params.n_corridors // n_dividers] * n_dividers
        for i in range(params.n_corridors % n_dividers):
            gaps_per[i] += 1
        for x, n_gaps in zip(slots, gaps_per):
            x = float(x + rng.uniform(-0.5, 0.5))
            divider_xs.append(x)
            y0, y1 = margin, h - margin
            n_gaps = max(n_gaps, 1)
            centers = np.linspace(y0, y1, n_gaps + 2)[1:-1]
            gap_w = min(2.0, (y1 - y0) / (3.0 * n_gaps))
            cur = y0
            for c in centers:
                c = float(c + rng.uniform(-0.3, 0.3))
                if c - gap_w / 2 > cur:
                    walls.append(np.array([[x, cur, x, c - gap_w / 2]]))
                cur = c + gap_w / 2
            if cur < y1:
                walls.append(np.array([[x, cur, x, y1]]))

    def clear_of_dividers(cx, r):
        return all(abs(cx - dx) > r + 0.4 for dx in divider_xs)

    statics: list[np.ndarray] = []
    centers: list[tuple[float, float, float]] = []
    tries = 0
    while len(statics) < params.n_static:
        tries += 1
        if tries > max_retries:
            raise GenerationError("could not place static obstacles")
        r = float(rng.uniform(0.4, 1.0))
        if margin + r >= min(w, h) - margin - r:
            continue
        cx = float(rng.uniform(margin + r, w - margin - r))
        cy = float(rng.uniform(margin + r, h - margin - r))
        if not clear_of_dividers(cx, r):
            continue
        if any(math.hypot(cx - ox, cy - oy) < r + orr + 0.5 for ox, oy, orr in centers):
            continue
        statics.append(_convex_poly(rng, cx, cy, r))
        centers.append((cx, cy, r))

    dynamic: list[DynamicObstacle] = []
    tries = 0
    while len(dynamic) < params.n_dynamic:
        tries += 1
        if tries > max_retries:
            raise GenerationError("could not place dynamic obstacles")
        side = 0.6
        if margin + side >= min(w, h) - margin - side:
            raise GenerationError("environment too small for dynamic obstacles")
        cx = float(rng.uniform(margin + side, w - margin - side))
        cy = float(rng.uniform(margin + side, h - margin - side))
        if not clear_of_dividers(cx, side):
            continue
        if any(math.hypot(cx - ox, cy - oy) < side + orr + 0.5 for ox, oy, orr in centers):
            continue
        heading = float(rng.uniform(0.0, 2.0 * math.pi))
        vel = params.dynamic_speed * np.array([math.cos(heading), math.sin(heading)])
        half = side / 2.0
        verts = np.array([[-half, -half], [half, -half], [half, half], [-half, half]])
        dynamic.append(DynamicObstacle(verts, np.array([cx, cy]), vel))

    return Environment(w, h, np.vstack(walls), statics, dynamic)


def advance_dynamic_obstacles(env: Environment, dt: float) -> Environment:
    """Linear motion with elastic reflection at bounds and static obstacles."""
    moved = []
    for obs in env.dynamic:
        vel = obs.velocity.copy()
        center = obs.center + vel * dt
        r = obs.radius
        for axis, lo, hi in ((0, r, env.width - r), (1, r, env.height - r)):
            if center[axis] < lo:
                center[axis] = 2 * lo - center[axis]
                vel[axis] = -vel[axis]
            elif center[axis] > hi:
                center[axis] = 2 * hi - center[axis]
                vel[axis] = -vel[axis]
        for poly in env.static_polys:
            mn = poly.min(axis=0) - r
            mx = poly.max(axis=0) + r
            if np.all(center > mn) and np.all(center < mx):
                vel = -vel
                center = obs.center  # back off to the pre-step position
                break
        moved.append(DynamicObstacle(obs.verts, center, vel))
    return Environment(env.width, env.height, env.wall_segments, env.static_polys, moved)


def patrol_pose(env: Environment, frac: float) -> Pose2D:
    """Pose on the counter-clockwise rectangular patrol circuit at arc fraction."""
    i = PATROL_INSET
    x0, y0, x1, y1 = i, i, env.width - i, env.height - i
    lx, ly = x1 - x0, y1 - y0
    P = 2.0 * (lx + ly)
    s = (frac % 1.0) * P
    if s < lx:
        return Pose2D(x0 + s, y0, 0.0)
    s -= lx
    if s < ly:
        return Pose2D(x1, y0 + s, math.pi / 2)
    s -= ly
    if s < lx:
        return Pose2D(x1 - s, y1, math.pi)
    s -= lx
    return Pose2D(x0, y1 - s, -math.pi / 2)


def patrol_perimeter(env: Environment) -> float:
    i = PATROL_INSET
    return 2.0 * ((env.width - 2 * i) + (env.height - 2 * i))


def cast_scan(segments: np.ndarray, x: float, y: float, angles: np.ndarray,
              max_range: float) -> tuple[np.ndarray, np.ndarray]:
    """True ranges and incidence angles of rays against a segment soup."""
    p1 = segments[:, 0:2]
    d_seg = segments[:, 2:4] - p1
    rel = p1 - np.array([x, y])
    ranges = np.full(angles.shape[0], max_range)
    alphas = np.zeros(angles.shape[0])
    for k, ang in enumerate(angles):
        d = np.array([math.cos(ang), math.sin(ang)])
        denom = d[0] * d_seg[:, 1] - d[1] * d_seg[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (rel[:, 0] * d_seg[:, 1] - rel[:, 1] * d_seg[:, 0]) / denom
            u = (rel[:, 0] * d[1] - rel[:, 1] * d[0]) / denom
        valid = (np.abs(denom) > 1e-15) & (t > 1e-9) & (u >= 0.0) & (u <= 1.0) & (t <= max_range)
        if np.any(valid):
            idx = np.flatnonzero(valid)
            best = idx[np.argmin(t[idx])]
            ranges[k] = t[best]
            seg = d_seg[best]
            seg_len = math.hypot(seg[0], seg[1])
            if seg_len > 0:
                cos_alpha = abs(d[0] * seg[1] - d[1] * seg[0]) / seg_len
                alphas[k] = math.acos(min(max(cos_alpha, 0.0), 1.0))
    return ranges, alphas


def rasterize_ground_truth(env: Environment, spec: GridSpec) -> np.ndarray:
    """Static walls and obstacles as occupied cells; dynamic ones excluded."""
    occ = np.zeros((spec.height_cells, spec.width_cells), dtype=bool)
    step = spec.resolution / 3.0
    for x1, y1, x2, y2 in env.segments(include_dynamic=False):
        length = math.hypot(x2 - x1, y2 - y1)
        n = max(int(length / step) + 1, 2)
        ts = np.linspace(0.0, 1.0, n)
        xs = x1 + ts * (x2 - x1)
        ys = y1 + ts * (y2 - y1)
        ix = np.floor((xs - spec.origin_x) / spec.resolution).astype(int)
        iy = np.floor((ys - spec.origin_y) / spec.resolution).astype(int)
        ok = (ix >= 0) & (ix < spec.width_cells) & (iy >= 0) & (iy < spec.height_cells)
        occ[iy[ok], ix[ok]] = True
    for poly in env.static_polys:
        mn = poly.min(axis=0)
        mx = poly.max(axis=0)
        ix0 = max(int((mn[0] - spec.origin_x) / spec.resolution), 0)
        ix1 = min(int((mx[0] - spec.origin_x) / spec.resolution) + 1, spec.width_cells)
        iy0 = max(int((mn[1] - spec.origin_y) / spec.resolution), 0)
        iy1 = min(int((mx[1] - spec.origin_y) / spec.resolution) + 1, spec.height_cells)
        if ix1 <= ix0 or iy1 <= iy0:
            continue
        xs = spec.origin_x + (np.arange(ix0, ix1) + 0.5) * spec.resolution
        ys = spec.origin_y + (np.arange(iy0, iy1) + 0.5) * spec.resolution
        gx, gy = np.meshgrid(xs, ys)
        inside = np.ones(gx.shape, dtype=bool)
        nxt = np.roll(poly, -1, axis=0)
        for (ax, ay), (bx, by) in zip(poly, nxt):
            inside &= (bx - ax) * (gy - ay) - (by - ay) * (gx - ax) >= 0
        occ[iy0:iy1, ix0:ix1] |= inside
    return occ


def _env_spec(env: Environment, resolution: float) -> GridSpec:
    return GridSpec(
        width_cells=int(round(env.width / resolution)),
        height_cells=int(round(env.height / resolution)),
        resolution=resolution,
    )


class _Recorder:
    """Optional tap asserting both arms consume the identical batch object."""

    def __init__(self):
        self.batches: list[int] = []

    def record(self, batch: ObservationBatch):
        self.batches.append(id(batch))


def run_single_agent(run: RunConfig, recorder: _Recorder | None = None) -> SimResult:
    if len(run.robots) != 1:
        raise ValueError("single-agent run requires exactly one robot")
    return _run(run, multi=False, recorder=recorder)


def run_multi_robot(run: RunConfig) -> SimResult:
    if len(run.robots) < 1:
        raise ValueError("multi-robot run requires at least one robot")
    return _run(run, multi=True)


def _run(run: RunConfig, multi: bool, recorder: _Recorder | None = None) -> SimResult:
    env = generate_environment(run.seed, run.env)
    spec = _env_spec(env, run.resolution)
    static_segments = env.segments(include_dynamic=False)

    ss = np.random.SeedSequence(entropy=run.seed, spawn_key=(1,))
    robot_rngs = [np.random.default_rng(c) for c in ss.spawn(len(run.robots))]

    sensor_params = run.arms[0][1] if run.arms else FusionParams()
    # robot index -> arm name -> grid
    grids = [
        {name: make_grid(spec, params) for name, params in run.arms}
        for _ in run.robots
    ]
    occ_counts = np.zeros((spec.height_cells, spec.width_cells), dtype=np.int64)
    free_counts = np.zeros_like(occ_counts)

    perimeter = patrol_perimeter(env)
    n_steps = max(r.n_steps for r in run.robots) if run.robots else 0
    drifts = [np.zeros(3) for _ in run.robots]
    cooldown = [0 for _ in run.robots]
    tick = run.robots[0].step_size / NOMINAL_ROBOT_SPEED if run.robots else 1.0

    for step in range(n_steps):
        env = advance_dynamic_obstacles(env, tick)
        live_segments = env.segments(include_dynamic=True)
        true_poses: list[Pose2D | None] = []
        for r_idx, robot in enumerate(run.robots):
            if step >= robot.n_steps:
                true_poses.append(None)
                continue
            frac = robot.start_frac + robot.direction * step * robot.step_size / perimeter
            pose = patrol_pose(env, frac)
            if robot.direction < 0:
                pose = Pose2D(pose.x, pose.y, normalize_angle(pose.theta + math.pi))
            true_poses.append(pose)

        if multi and len(run.robots) > 1:
            # Rendezvous: re-align drift when true poses come close.
            for a in range(len(run.robots)):
                for b in range(a + 1, len(run.robots)):
                    pa, pb = true_poses[a], true_poses[b]
                    if pa is None or pb is None:
                        continue
                    if math.hypot(pa.x - pb.x, pa.y - pb.y) < run.rendezvous_distance:
                        for r_idx in (a, b):
                            if cooldown[r_idx] > 0:
                                continue
                            sigma = run.robots[r_idx].odom_sigma_trans / math.sqrt(2.0)
                            rng = robot_rngs[r_idx]
                            drifts[r_idx] = np.array([
                                rng.normal(0.0, sigma),
                                rng.normal(0.0, sigma),
                                rng.normal(0.0, run.robots[r_idx].odom_sigma_rot / math.sqrt(2.0)),
                            ])
                            cooldown[r_idx] = 2
            cooldown = [max(c - 1, 0) for c in cooldown]

        for r_idx, robot in enumerate(run.robots):
            pose = true_poses[r_idx]
            if pose is None:
                continue
            rng = robot_rngs[r_idx]
            if multi:
                drifts[r_idx] += np.array([
                    rng.normal(0.0, robot.odom_sigma_trans),
                    rng.normal(0.0, robot.odom_sigma_trans),
                    rng.normal(0.0, robot.odom_sigma_rot),
                ])
                est = Pose2D(pose.x + drifts[r_idx][0], pose.y + drifts[r_idx][1],
                             normalize_angle(pose.theta + drifts[r_idx][2]))
            else:
                est = pose

            angles = robot.lidar.ray_angles(pose.theta)
            true_ranges, alphas = cast_scan(live_segments, pose.x, pose.y, angles,
                                            robot.lidar.max_range)
            if robot.lidar.range_noise_sigma > 0:
                noisy = true_ranges + rng.normal(0.0, robot.lidar.range_noise_sigma,
                                                 size=true_ranges.shape)
                noisy = np.clip(noisy, 0.0, robot.lidar.max_range)
            else:
                noisy = true_ranges
            est_angles = robot.lidar.ray_angles(est.theta)
            if spec.world_to_cell(est.x, est.y) is None:
                continue
            batch = observe(spec, est, est_angles, noisy, alphas,
                            robot.lidar.max_range, sensor_params, run.decay)
            if recorder is not None:
                recorder.record(batch)
            for name, params in run.arms:
                batch.apply(grids[r_idx][name], params)

            # Ground-truth pass: noise-free scan of the static world from the
            # true pose, accumulated into the evaluation-label counters.
            gt_ranges, _ = cast_scan(static_segments, pose.x, pose.y, angles,
                                     robot.lidar.max_range)
            gt_batch = observe(spec, pose, angles, gt_ranges,
                               np.zeros_like(gt_ranges), robot.lidar.max_range,
                               sensor_params, NO_DECAY)
            occ_hits = gt_batch.flat[gt_batch.kind == 1]
            free_hits = gt_batch.flat[gt_batch.kind == 0]
            np.add.at(occ_counts.ravel(), occ_hits, 1)
            np.add.at(free_counts.ravel(), free_hits, 1)

    from .fusion import fuse_grids

    fused: dict[str, object] = {}
    for name, params in run.arms:
        fused[name] = fuse_grids([grids[r][name] for r in range(len(run.robots))], params)

    eval_set = build_eval_set(occ_counts, free_counts)
    return SimResult(spec=spec, grids=fused, eval_set=eval_set,
                     occ_counts=occ_counts, free_counts=free_counts)


def write_pgm(path, probs: np.ndarray, spec: GridSpec) -> None:
    """16-bit PGM map export (probability x 65535) plus a sidecar header."""
    data = np.round(np.clip(probs, 0.0, 1.0) * 65535.0).astype(">u2")
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode())
        f.write(data.tobytes())
    sidecar = str(path) + ".txt"
    with open(sidecar, "w") as f:
        f.write(
            f"width_cells {spec.width_cells}\n"
            f"height_cells {spec.height_cells}\n"
            f"resolution {spec.resolution}\n"
            f"origin_x {spec.origin_x}\n"
            f"origin_y {spec.origin_y}\n"
        )
