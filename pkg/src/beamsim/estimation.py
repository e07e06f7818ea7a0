"""Pose estimation: clamped wheel odometry, depth-image to scan conversion,
and Monte Carlo localization over a likelihood field.

All operations are pure transformations; randomness enters only through an
explicitly passed generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose, wrap_angle, wrap_angles
from .mapgrid import LikelihoodField

NO_RETURN = float("nan")


@dataclass(frozen=True)
class LaserScan:
    angle_min: float
    angle_max: float
    angle_increment: float
    ranges: np.ndarray          # NaN = no return
    range_max: float
    frame: int                  # camera mount id
    mount_yaw: float            # mount rotation in the robot frame
    bearings: np.ndarray        # exact per-column directions (camera frame)

    def __post_init__(self):
        n = int(math.floor((self.angle_max - self.angle_min)
                           / self.angle_increment + 1e-9)) + 1
        if n != len(self.ranges):
            raise ValueError("ranges length inconsistent with angle fields")


def depth_to_scan(image: np.ndarray, fx: float, cx: float, range_max: float,
                  frame: int = 0, mount_yaw: float = 0.0,
                  row_band: int = 1) -> LaserScan:
    """Collapse a depth image to a planar scan.

    Per column: bearing = atan((u - cx)/fx); depth = min valid axial depth
    over `row_band` center rows; ray range = depth / cos(bearing). NaN
    propagates as no-return.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 1:
        img = img[None, :]
    if img.size == 0:
        raise ValueError("empty depth image")
    h, w = img.shape
    band = max(1, min(row_band, h))
    r0 = (h - band) // 2
    rows = img[r0:r0 + band]

    filled = np.where(np.isnan(rows), np.inf, rows)
    axial = filled.min(axis=0)
    axial = np.where(np.isinf(axial), NO_RETURN, axial)
    u = np.arange(w, dtype=np.float64)
    bearings = np.arctan((u - cx) / fx)
    ranges = axial / np.cos(bearings)
    with np.errstate(invalid="ignore"):
        ranges = np.where(ranges > range_max, NO_RETURN, ranges)

    if w > 1:
        amin, amax = float(bearings[0]), float(bearings[-1])
        inc = (amax - amin) / (w - 1)
    else:
        amin = amax = float(bearings[0])
        inc = 1.0
    return LaserScan(amin, amax, inc, ranges, range_max, frame, mount_yaw,
                     bearings)


# ----------------------------------------------------------------- odometry

@dataclass(frozen=True)
class OdomState:
    pose: Pose
    ticks_per_m: float
    speed_clamp: float          # ticks/s; faster wheels are ignored

    def __post_init__(self):
        if self.speed_clamp <= 0:
            raise ValueError("speed_clamp must be > 0")
        if self.ticks_per_m <= 0:
            raise ValueError("ticks_per_m must be > 0")


def integrate_odometry(odom: OdomState, left_ticks: float, right_ticks: float,
                       heading: float, dt: float) -> OdomState:
    """Advance odometry one step.

    A wheel whose tick speed exceeds the clamp contributes zero distance
    (lift-slip rejection); heading comes from the absolute sensor.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    dl = left_ticks / odom.ticks_per_m
    dr = right_ticks / odom.ticks_per_m
    if abs(left_ticks) / dt > odom.speed_clamp:
        dl = 0.0
    if abs(right_ticks) / dt > odom.speed_clamp:
        dr = 0.0
    d = (dl + dr) / 2.0
    theta = wrap_angle(heading)
    pose = Pose(odom.pose.x + d * math.cos(theta),
                odom.pose.y + d * math.sin(theta),
                theta)
    return replace(odom, pose=pose)


# ---------------------------------------------------------------- particles

@dataclass
class MclParams:
    n_particles: int = 500
    sigma_trans: float = 0.1    # m of noise per m translated
    sigma_rot: float = 0.1      # rad of noise per rad rotated
    trans_per_rot: float = 0.03  # m of noise per rad rotated
    sigma_hit: float = 0.2
    z_rand: float = 0.05
    ess_fraction: float = 0.5
    beam_step: int = 4

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("need at least one particle")
        if not 0.0 <= self.z_rand < 1.0:
            raise ValueError("z_rand must lie in [0, 1)")
        if self.sigma_hit <= 0:
            raise ValueError("sigma_hit must be > 0")
        if not 0.0 < self.ess_fraction <= 1.0:
            raise ValueError("ess_fraction must lie in (0, 1]")
        if self.beam_step < 1:
            raise ValueError("beam_step must be >= 1")


@dataclass
class ParticleSet:
    xs: np.ndarray
    ys: np.ndarray
    thetas: np.ndarray
    weights: np.ndarray
    params: MclParams
    lost: bool = False

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights ** 2))

    @classmethod
    def around(cls, pose: Pose, params: MclParams, rng: np.random.Generator,
               sigma_xy: float = 0.1, sigma_theta: float = 0.05) -> "ParticleSet":
        n = params.n_particles
        xs = pose.x + rng.normal(0, sigma_xy, n)
        ys = pose.y + rng.normal(0, sigma_xy, n)
        ths = wrap_angles(pose.theta + rng.normal(0, sigma_theta, n))
        return cls(xs, ys, ths, np.full(n, 1.0 / n), params)


def mcl_predict(ps: ParticleSet, delta: tuple[float, float],
                rng: np.random.Generator) -> ParticleSet:
    """Advance every particle by (delta_d, delta_theta) with motion-scaled
    noise; weights untouched."""
    dd, dth = delta
    p = ps.params
    n = ps.n
    # rotation leaks into translation noise too, or in-place scans would
    # resample the cloud down to a single point
    std_d = p.sigma_trans * abs(dd) + p.trans_per_rot * abs(dth)
    std_th = p.sigma_rot * abs(dth)
    d = dd + (rng.normal(0.0, std_d, n) if std_d > 0 else 0.0)
    th = dth + (rng.normal(0.0, std_th, n) if std_th > 0 else 0.0)
    mid = ps.thetas + th / 2.0
    xs = ps.xs + d * np.cos(mid)
    ys = ps.ys + d * np.sin(mid)
    ths = wrap_angles(ps.thetas + th)
    return ParticleSet(xs, ys, ths, ps.weights.copy(), p, ps.lost)


def mcl_update(ps: ParticleSet, scans: list[LaserScan],
               lf: LikelihoodField) -> ParticleSet:
    """Reweight particles against the likelihood field.

    Beam likelihood = (1 - z_rand) * N(dist(endpoint); 0, sigma_hit)
    + z_rand / range_max, accumulated in log space over every
    `beam_step`-th valid beam of every scan.  The distance field is
    sampled bilinearly between cell centers; nearest-cell lookup on a
    coarse grid quantizes the posterior by up to half a cell.
    """
    p = ps.params
    grid = lf.base
    res = grid.resolution
    ox, oy = grid.origin
    h, w = lf.dist.shape
    norm = 1.0 / (p.sigma_hit * math.sqrt(2.0 * math.pi))
    inv2s2 = 1.0 / (2.0 * p.sigma_hit * p.sigma_hit)

    logw = np.zeros(ps.n)
    used_beams = 0
    for scan in scans:
        sel = slice(0, None, p.beam_step)
        r = scan.ranges[sel]
        b = scan.bearings[sel]
        valid = ~np.isnan(r)
        if not valid.any():
            continue
        r = r[valid]
        b = b[valid]
        used_beams += len(r)
        ang = ps.thetas[:, None] + scan.mount_yaw + b[None, :]
        ex = ps.xs[:, None] + r[None, :] * np.cos(ang)
        ey = ps.ys[:, None] + r[None, :] * np.sin(ang)
        gx = (ex - ox) / res - 0.5
        gy = (ey - oy) / res - 0.5
        inb = (gx >= 0.0) & (gx <= w - 1.0) & (gy >= 0.0) & (gy <= h - 1.0)
        x0 = np.clip(np.floor(gx).astype(np.int64), 0, w - 2)
        y0 = np.clip(np.floor(gy).astype(np.int64), 0, h - 2)
        fx = np.clip(gx - x0, 0.0, 1.0)
        fy = np.clip(gy - y0, 0.0, 1.0)
        d00 = lf.dist[y0, x0]
        d01 = lf.dist[y0, x0 + 1]
        d10 = lf.dist[y0 + 1, x0]
        d11 = lf.dist[y0 + 1, x0 + 1]
        interp = ((d00 * (1.0 - fx) + d01 * fx) * (1.0 - fy)
                  + (d10 * (1.0 - fx) + d11 * fx) * fy)
        dist = np.where(inb, interp, lf.max_dist)
        like = ((1.0 - p.z_rand) * norm * np.exp(-dist * dist * inv2s2)
                + p.z_rand / scan.range_max)
        with np.errstate(divide="ignore"):
            logw += np.sum(np.log(like), axis=1)

    if used_beams == 0:
        weights = ps.weights / ps.weights.sum()
        return ParticleSet(ps.xs.copy(), ps.ys.copy(), ps.thetas.copy(),
                           weights, p, ps.lost)

    with np.errstate(invalid="ignore"):
        shifted = logw - logw.max()
    weights = ps.weights * np.exp(shifted)
    total = weights.sum()
    if not np.isfinite(total) or total <= 0.0:
        n = ps.n
        return ParticleSet(ps.xs.copy(), ps.ys.copy(), ps.thetas.copy(),
                           np.full(n, 1.0 / n), p, True)
    return ParticleSet(ps.xs.copy(), ps.ys.copy(), ps.thetas.copy(),
                       weights / total, p, ps.lost)


def mcl_resample(ps: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Low-variance systematic resampling, triggered by ESS depletion."""
    n = ps.n
    if ps.ess >= ps.params.ess_fraction * n:
        return ps
    starts = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(ps.weights)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, starts, side="left")
    return ParticleSet(ps.xs[idx].copy(), ps.ys[idx].copy(),
                       ps.thetas[idx].copy(), np.full(n, 1.0 / n),
                       ps.params, ps.lost)


def mcl_estimate(ps: ParticleSet) -> tuple[Pose, np.ndarray]:
    """Weighted mean pose (circular in theta) and 3x3 covariance with
    wrapped angular residuals."""
    w = ps.weights
    mx = float(np.sum(w * ps.xs))
    my = float(np.sum(w * ps.ys))
    s = float(np.sum(w * np.sin(ps.thetas)))
    c = float(np.sum(w * np.cos(ps.thetas)))
    mth = math.atan2(s, c)
    res = np.stack([ps.xs - mx, ps.ys - my, wrap_angles(ps.thetas - mth)])
    cov = (w * res) @ res.T
    return Pose(mx, my, wrap_angle(mth)), cov


# ------------------------------------------------------------------ fusion

@dataclass
class EstimatorConfig:
    mcl: MclParams = field(default_factory=MclParams)
    update_period: int = 10     # sim ticks between MCL corrections
    update_min_d: float = 0.05  # m of motion required before correcting
    update_min_a: float = 0.1   # rad of rotation required before correcting
    heading_pull: float = 0.2   # per-update pull toward the heading sensor
    init_sigma_xy: float = 0.05
    init_sigma_theta: float = 0.02


class Estimator:
    """Odometry dead reckoning re-anchored by periodic MCL corrections."""

    def __init__(self, lf: LikelihoodField, odom: OdomState,
                 config: EstimatorConfig, rng: np.random.Generator,
                 initial_pose: Pose | None = None):
        self.lf = lf
        self.config = config
        self.odom = odom
        self.rng = rng
        start = initial_pose if initial_pose is not None else odom.pose
        self.particles = ParticleSet.around(
            start, config.mcl, rng, config.init_sigma_xy,
            config.init_sigma_theta)
        self._anchor_mcl = start
        self._anchor_odom = odom.pose
        self._pending_d = 0.0
        self._pending_th = 0.0
        self._tick = 0
        self.updates = 0
        self.localization_lost = False

    @property
    def pose(self) -> Pose:
        """Current fused estimate: last MCL anchor plus odometry delta."""
        rel = self._anchor_odom.relative_pose(self.odom.pose)
        return self._anchor_mcl.compose(rel)

    def advance_odometry(self, left_ticks: float, right_ticks: float,
                         heading: float, dt: float) -> None:
        before = self.odom.pose
        self.odom = integrate_odometry(self.odom, left_ticks, right_ticks,
                                       heading, dt)
        after = self.odom.pose
        self._pending_d += math.hypot(after.x - before.x, after.y - before.y)
        self._pending_th += wrap_angle(after.theta - before.theta)
        self._tick += 1

    def due(self) -> bool:
        return self._tick % self.config.update_period == 0

    def correct(self, scans: list[LaserScan]) -> tuple[Pose, np.ndarray]:
        """One MCL predict/update/resample pass; returns (pose, covariance).

        Corrections are skipped while the robot sits still: with
        motion-scaled prediction noise frozen at zero, repeated
        update/resample cycles would collapse the cloud onto one particle.
        """
        if (self.updates > 0
                and self._pending_d < self.config.update_min_d
                and abs(self._pending_th) < self.config.update_min_a):
            return mcl_estimate(self.particles)
        delta = (self._pending_d, self._pending_th)
        self._pending_d = 0.0
        self._pending_th = 0.0
        ps = mcl_predict(self.particles, delta, self.rng)
        # the heading sensor anchors absolute theta, but only as a weak
        # per-update pull: a hard snap would copy its read noise into every
        # particle, and scans against walls estimate heading better
        pull = self.config.heading_pull
        resid = wrap_angles(ps.thetas - self.odom.pose.theta)
        ps.thetas = wrap_angles(self.odom.pose.theta + (1.0 - pull) * resid)
        ps = mcl_update(ps, scans, self.lf)
        if ps.lost:
            self.localization_lost = True
        ps = mcl_resample(ps, self.rng)
        self.particles = ps
        est, cov = mcl_estimate(ps)
        self._anchor_mcl = est
        self._anchor_odom = self.odom.pose
        self.updates += 1
        return est, cov

    def dump_line(self, clock: float) -> str:
        p = self.pose
        return (f"{clock:.2f}\t{p.x:.6f}\t{p.y:.6f}\t{p.theta:.6f}\t"
                f"{self.particles.ess:.2f}")
