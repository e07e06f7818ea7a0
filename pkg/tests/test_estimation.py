import math

import numpy as np
import pytest

from beamsim.estimation import (
    Estimator,
    EstimatorConfig,
    LaserScan,
    MclParams,
    OdomState,
    ParticleSet,
    depth_to_scan,
    integrate_odometry,
    mcl_estimate,
    mcl_predict,
    mcl_resample,
    mcl_update,
)
from beamsim.geometry import Pose
from beamsim.mapgrid import likelihood_field, parse_map
from beamsim.simworld import (
    CameraParams,
    LiftEvent,
    RobotParams,
    SensorRig,
    WorldState,
)
from oracles import pinhole_scan


def walled_map(w=24, h=16, res=0.5):
    top = "#" * w
    mid = "#" + "." * (w - 2) + "#"
    return parse_map(f"{w} {h} {res}\n" + "\n".join([top] + [mid] * (h - 2) + [top]) + "\n")


def make_scan(ranges, range_max=8.0, fov=math.radians(60), frame=0, yaw=0.0):
    ranges = np.asarray(ranges, dtype=np.float64)
    w = len(ranges)
    cx = (w - 1) / 2
    fx = cx / math.tan(fov / 2) if w > 1 else 1.0 / math.tan(fov / 2)
    u = np.arange(w, dtype=np.float64)
    bearings = np.arctan((u - cx) / fx)
    if w > 1:
        inc = (bearings[-1] - bearings[0]) / (w - 1)
        return LaserScan(float(bearings[0]), float(bearings[-1]), inc, ranges,
                         range_max, frame, yaw, bearings)
    return LaserScan(0.0, 0.0, 1.0, ranges, range_max, frame, yaw, bearings)


# ------------------------------------------------------------ depth_to_scan

def test_depth_to_scan_uniform_image_matches_pinhole():
    w = 33
    cx = (w - 1) / 2
    fx = cx / math.tan(math.radians(30))
    img = np.full((4, w), 2.0)
    scan = depth_to_scan(img, fx, cx, range_max=8.0)
    # frozen from the closed-form pinhole oracle
    assert scan.ranges[w // 2] == pytest.approx(2.0, abs=1e-12)
    assert scan.ranges[0] == pytest.approx(2.309401076758503, abs=1e-9)
    assert scan.ranges[-1] == pytest.approx(2.0 / math.cos(math.radians(30)), abs=1e-9)
    b, r = pinhole_scan(img[0], fx, cx)
    np.testing.assert_allclose(scan.ranges, r, rtol=0, atol=1e-9)
    np.testing.assert_allclose(scan.bearings, b, rtol=0, atol=1e-12)
    assert scan.angle_min == pytest.approx(-math.radians(30), abs=1e-12)
    assert scan.angle_max == pytest.approx(math.radians(30), abs=1e-12)


def test_depth_to_scan_single_column():
    img = np.array([[1.5]])
    scan = depth_to_scan(img, fx=10.0, cx=0.0, range_max=8.0)
    assert len(scan.ranges) == 1
    assert scan.bearings[0] == pytest.approx(math.atan(0.0 / 10.0))
    assert scan.ranges[0] == pytest.approx(1.5)


def test_depth_to_scan_no_return_propagates():
    img = np.full((3, 8), np.nan)
    scan = depth_to_scan(img, fx=5.0, cx=3.5, range_max=8.0)
    assert np.isnan(scan.ranges).all()


def test_depth_to_scan_range_max_cutoff():
    img = np.full((1, 5), 7.9)
    scan = depth_to_scan(img, fx=4.0, cx=2.0, range_max=8.0)
    # edge rays exceed range_max after the cosine correction
    assert np.isnan(scan.ranges[0]) and np.isnan(scan.ranges[-1])
    assert scan.ranges[2] == pytest.approx(7.9)


def test_depth_to_scan_row_band_takes_min():
    img = np.array([[5.0, 5.0], [2.0, np.nan], [4.0, 4.0]])
    scan = depth_to_scan(img, fx=3.0, cx=0.5, range_max=8.0, row_band=3)
    assert scan.ranges[0] == pytest.approx(2.0 / math.cos(scan.bearings[0]))
    assert scan.ranges[1] == pytest.approx(4.0 / math.cos(scan.bearings[1]))


def test_laser_scan_length_invariant():
    with pytest.raises(ValueError):
        LaserScan(0.0, 1.0, 0.1, np.zeros(3), 8.0, 0, 0.0, np.zeros(3))


# ----------------------------------------------------------------- odometry

def _odom(clamp=2000.0):
    return OdomState(Pose(0.0, 0.0, 0.0), ticks_per_m=1000.0, speed_clamp=clamp)


def test_integrate_rest_updates_heading_only():
    o = integrate_odometry(_odom(), 0.0, 0.0, heading=0.4, dt=0.1)
    assert o.pose == Pose(0.0, 0.0, 0.4)


def test_integrate_normal_speed():
    # 500 ticks/s < 2000 clamp: frozen from the ticks_per_m arithmetic
    o = integrate_odometry(_odom(), 50.0, 50.0, heading=0.0, dt=0.1)
    assert o.pose.x == pytest.approx(0.05, abs=1e-12)


def test_integrate_clamped_wheel_contributes_zero():
    o = integrate_odometry(_odom(), 500.0, 500.0, heading=0.0, dt=0.1)
    assert o.pose.x == 0.0
    # one fast wheel: only the slow wheel's half counts
    o2 = integrate_odometry(_odom(), 500.0, 50.0, heading=0.0, dt=0.1)
    assert o2.pose.x == pytest.approx(0.025, abs=1e-12)


def test_integrate_advances_along_heading():
    o = integrate_odometry(_odom(), 100.0, 100.0, heading=math.pi / 2, dt=0.1)
    assert o.pose.x == pytest.approx(0.0, abs=1e-12)
    assert o.pose.y == pytest.approx(0.1, abs=1e-12)


def test_clamp_rejects_lift_drift():
    """Drive through 10 lift events; clamped drift must be well under the
    unclamped drift."""
    r = 0.08
    params = RobotParams(wheel_radius=r, ticks_per_rev=1000 * 2 * math.pi * r,
                         accel_limit=2.0)
    events = [LiftEvent(start=4.0 + 3.0 * i, duration=0.5, k=3.0)
              for i in range(10)]
    g = parse_map("80 6 1.0\n" + "\n".join(["." * 80] * 6) + "\n")
    w = WorldState(g, params=params, rig=SensorRig(heading_sigma=0.0),
                   start_pose=Pose(2.0, 3.0, 0.0), lift_events=events)
    clamped = _odom(clamp=2.0 * 1.0 * 1000.0)
    unclamped = _odom(clamp=1e12)
    clamped = OdomState(Pose(2.0, 3.0, 0.0), 1000.0, clamped.speed_clamp)
    unclamped = OdomState(Pose(2.0, 3.0, 0.0), 1000.0, unclamped.speed_clamp)
    dt = 0.05
    for _ in range(int(40 / dt)):
        w.step((1.0, 0.0), dt)
        enc = w.read_encoders()
        h = w.read_heading()
        clamped = integrate_odometry(clamped, enc.left_ticks, enc.right_ticks, h, dt)
        unclamped = integrate_odometry(unclamped, enc.left_ticks, enc.right_ticks, h, dt)
        if w.pose.x > 75:
            break
    err_c = abs(clamped.pose.x - w.pose.x)
    err_u = abs(unclamped.pose.x - w.pose.x)
    assert err_u > 10.0          # ~1.5 m per event uncorrected
    assert err_c < err_u
    assert err_c <= 0.3 * err_u


# ---------------------------------------------------------------- particles

def uniform_ps(n=100, pose=Pose(0, 0, 0), params=None):
    params = params or MclParams(n_particles=n)
    return ParticleSet(np.full(n, float(pose.x)), np.full(n, float(pose.y)),
                       np.full(n, float(pose.theta)), np.full(n, 1.0 / n),
                       params)


def test_predict_zero_motion_is_identity():
    ps = uniform_ps(50)
    out = mcl_predict(ps, (0.0, 0.0), np.random.default_rng(0))
    assert np.array_equal(out.xs, ps.xs)
    assert np.array_equal(out.ys, ps.ys)
    assert np.array_equal(out.thetas, ps.thetas)


def test_predict_noiseless_exact_advance():
    ps = uniform_ps(1, params=MclParams(n_particles=1, sigma_trans=0.0,
                                        sigma_rot=0.0))
    out = mcl_predict(ps, (1.0, 0.0), np.random.default_rng(0))
    assert out.xs[0] == pytest.approx(1.0, abs=1e-12)
    assert out.ys[0] == pytest.approx(0.0, abs=1e-12)


def test_predict_noise_scales_with_motion():
    n = 10_000
    ps = uniform_ps(n, params=MclParams(n_particles=n, sigma_trans=0.1,
                                        sigma_rot=0.05))
    out = mcl_predict(ps, (1.0, 0.0), np.random.default_rng(1))
    disp = np.hypot(out.xs - ps.xs, out.ys - ps.ys)
    # sample stddev of N(1, 0.1) magnitudes, frozen statistical bound
    assert abs(disp.std(ddof=1) - 0.1) < 3 * 0.1 / math.sqrt(2 * n)
    assert abs(disp.mean() - 1.0) < 3 * 0.1 / math.sqrt(n)


def test_predict_rotation_spreads_xy():
    # pure rotation still jitters position, so an in-place scan cannot
    # freeze the cloud; displacement is N(0, trans_per_rot * |dth|) along
    # the midpoint heading
    n = 10_000
    ps = uniform_ps(n, params=MclParams(n_particles=n, sigma_trans=0.1,
                                        sigma_rot=0.0, trans_per_rot=0.05))
    out = mcl_predict(ps, (0.0, 0.6), np.random.default_rng(2))
    d = (out.xs - ps.xs) * math.cos(0.3) + (out.ys - ps.ys) * math.sin(0.3)
    std = 0.05 * 0.6
    assert abs(d.std(ddof=1) - std) < 3 * std / math.sqrt(2 * n)
    assert abs(d.mean()) < 3 * std / math.sqrt(n)


def field_5x5():
    g = parse_map("5 5 1.0\n#####\n#...#\n#...#\n#...#\n#####\n")
    return likelihood_field(g, 3.0)


def test_update_empty_scan_keeps_weights():
    ps = uniform_ps(4)
    ps.weights = np.array([0.4, 0.3, 0.2, 0.1])
    scan = make_scan(np.full(8, np.nan))
    out = mcl_update(ps, [scan], field_5x5())
    np.testing.assert_allclose(out.weights, ps.weights)


def test_update_true_pose_beats_wall_pose():
    lf = field_5x5()
    params = MclParams(n_particles=2, sigma_hit=0.2, z_rand=0.05, beam_step=1)
    # true pose at map center facing +x, wall face 1.5 m ahead; the scan a
    # robot would measure there: each beam reaches the wall at 1.5/cos(b)
    w = 5
    cx = (w - 1) / 2
    fx = cx / math.tan(math.radians(30))
    bearings = np.arctan((np.arange(w) - cx) / fx)
    scan = make_scan(1.5 / np.cos(bearings), range_max=6.0)
    # particle 1 sits a meter inside the right-hand wall
    ps = ParticleSet(np.array([2.5, 4.5]), np.array([2.5, 2.5]),
                     np.array([0.0, 0.0]), np.array([0.5, 0.5]), params)
    out = mcl_update(ps, [scan], lf)

    # oracle: evaluate both likelihood products directly, sampling the
    # distance field between cell centers the same way the filter defines it
    def dist_at(ex, ey):
        gx, gy = ex - 0.5, ey - 0.5
        if not (0.0 <= gx <= 4.0 and 0.0 <= gy <= 4.0):
            return lf.max_dist
        x0, y0 = min(int(gx), 3), min(int(gy), 3)
        tx, ty = gx - x0, gy - y0
        return ((lf.dist[y0, x0] * (1 - tx) + lf.dist[y0, x0 + 1] * tx)
                * (1 - ty)
                + (lf.dist[y0 + 1, x0] * (1 - tx)
                   + lf.dist[y0 + 1, x0 + 1] * tx) * ty)

    logp = []
    for px in (2.5, 4.5):
        lp = 0.0
        for b, r in zip(scan.bearings, scan.ranges):
            d = dist_at(px + r * math.cos(b), 2.5 + r * math.sin(b))
            lp += math.log(0.95 / (0.2 * math.sqrt(2 * math.pi))
                           * math.exp(-d * d / (2 * 0.04)) + 0.05 / 6.0)
        logp.append(lp)
    want_ratio = math.exp(logp[0] - logp[1])
    assert out.weights[0] > out.weights[1]
    assert out.weights[0] / out.weights[1] == pytest.approx(want_ratio, rel=1e-9)


def test_update_single_particle_normalizes_to_one():
    lf = field_5x5()
    ps = uniform_ps(1, pose=Pose(2.5, 2.5, 0.0),
                    params=MclParams(n_particles=1))
    out = mcl_update(ps, [make_scan([1.0, 2.0, 1.0])], lf)
    assert out.weights[0] == 1.0


def test_update_weights_normalized():
    lf = field_5x5()
    rng = np.random.default_rng(2)
    n = 200
    ps = ParticleSet(rng.uniform(1, 4, n), rng.uniform(1, 4, n),
                     rng.uniform(-math.pi, math.pi, n), np.full(n, 1.0 / n),
                     MclParams(n_particles=n))
    for _ in range(10):
        ps = mcl_update(ps, [make_scan([1.5, 1.2, 2.0, 1.1])], lf)
        assert abs(ps.weights.sum() - 1.0) < 1e-9


def test_update_underflow_resets_uniform_and_flags():
    lf = field_5x5()
    n = 3
    ps = uniform_ps(n, pose=Pose(2.5, 2.5, 0.0),
                    params=MclParams(n_particles=n, sigma_hit=1e-9, z_rand=0.0))
    out = mcl_update(ps, [make_scan([1.0, 1.0, 1.0])], lf)
    assert out.lost
    np.testing.assert_allclose(out.weights, np.full(n, 1 / n))


def test_resample_uniform_unchanged():
    ps = uniform_ps(64)
    out = mcl_resample(ps, np.random.default_rng(0))
    assert out is ps


def test_resample_degenerate_copies_winner():
    n = 32
    ps = uniform_ps(n)
    ps.xs = np.arange(n, dtype=np.float64)
    w = np.zeros(n)
    w[7] = 1.0
    ps.weights = w
    out = mcl_resample(ps, np.random.default_rng(0))
    assert np.all(out.xs == 7.0)
    np.testing.assert_allclose(out.weights, np.full(n, 1 / n))


def test_resample_systematic_multiplicity():
    n = 100
    ps = uniform_ps(n)
    ps.xs = np.arange(n, dtype=np.float64)
    w = np.arange(1, n + 1, dtype=np.float64)
    ps.weights = w / w.sum()
    out = mcl_resample(ps, np.random.default_rng(3))
    counts = np.bincount(out.xs.astype(int), minlength=n)
    for i in range(n):
        assert abs(counts[i] - n * ps.weights[i]) <= 1.0


def test_estimate_identical_particles():
    ps = uniform_ps(10, pose=Pose(1.0, 2.0, 0.5))
    pose, cov = mcl_estimate(ps)
    assert pose == pytest.approx(Pose(1.0, 2.0, 0.5))
    np.testing.assert_allclose(cov, np.zeros((3, 3)), atol=1e-15)


def test_estimate_circular_mean_wraps():
    ps = uniform_ps(2)
    ps.thetas = np.array([3.1, -3.1])
    pose, _ = mcl_estimate(ps)
    # frozen from the sin/cos mean oracle: atan2(0, 2cos(3.1)) = pi
    assert abs(pose.theta) == pytest.approx(math.pi, abs=1e-9)


def test_estimate_line_midpoint():
    n = 11
    ps = uniform_ps(n)
    ps.xs = np.linspace(0, 1, n)
    pose, cov = mcl_estimate(ps)
    assert pose.x == pytest.approx(0.5)
    assert cov[0, 0] > 0 and cov[1, 1] == pytest.approx(0.0, abs=1e-15)


# ------------------------------------------------------------- closed loop

def test_noiseless_closed_loop_tracks_truth():
    g = walled_map()
    cams = tuple(CameraParams(yaw=y, width=32, height=2, max_range=8.0)
                 for y in (0.0, math.pi / 2, -math.pi / 2))
    rig = SensorRig(cams=cams, heading_sigma=0.0, encoder_quantize=False)
    w = WorldState(g, start_pose=Pose(3.0, 3.0, 0.0), rig=rig,
                   params=RobotParams(accel_limit=100.0))
    lf = likelihood_field(g, 2.0)
    odom = OdomState(Pose(3.0, 3.0, 0.0), w.params.ticks_per_m,
                     2.0 * w.params.max_speed * w.params.ticks_per_m)
    est = Estimator(lf, odom, EstimatorConfig(update_period=10),
                    np.random.default_rng(8), initial_pose=Pose(3.0, 3.0, 0.0))
    dt = 0.05
    rng = np.random.default_rng(44)
    for i in range(400):
        cmd = (0.6, 0.5 * math.sin(i * dt))
        w.step(cmd, dt)
        enc = w.read_encoders()
        est.advance_odometry(enc.left_ticks, enc.right_ticks, w.read_heading(), dt)
        if est.due():
            scans = [depth_to_scan(w.render_depth(c), cams[c].fx, cams[c].cx,
                                   cams[c].max_range, frame=c,
                                   mount_yaw=cams[c].yaw)
                     for c in range(3)]
            est.correct(scans)
        _ = rng  # command stream fixed above; rng kept for symmetry
    assert est.updates >= 20
    err = math.hypot(est.pose.x - w.pose.x, est.pose.y - w.pose.y)
    assert err <= g.resolution


def test_estimator_skips_corrections_at_rest():
    # a motionless robot gets no prediction noise, so repeated corrections
    # would resample the cloud down to one particle; they must be skipped
    g = walled_map()
    lf = likelihood_field(g, 2.0)
    w = WorldState(g, start_pose=Pose(3.0, 3.0, 0.0))
    cam = w.rig.cams[0]
    scan = depth_to_scan(w.render_depth(0), cam.fx, cam.cx, cam.max_range)
    odom = OdomState(Pose(3.0, 3.0, 0.0), 1000.0, 2000.0)
    est = Estimator(lf, odom, EstimatorConfig(), np.random.default_rng(3),
                    initial_pose=Pose(3.0, 3.0, 0.0))
    for _ in range(20):
        est.correct([scan])
    assert est.updates == 1
    assert float(np.std(est.particles.xs)) > 0.01


def test_dump_line_format():
    g = walled_map()
    lf = likelihood_field(g, 2.0)
    odom = OdomState(Pose(1.0, 2.0, 0.5), 1000.0, 2000.0)
    est = Estimator(lf, odom, EstimatorConfig(), np.random.default_rng(0))
    line = est.dump_line(12.345)
    parts = line.split("\t")
    assert len(parts) == 5
    assert parts[0] == "12.35"
    float(parts[1]), float(parts[2]), float(parts[3]), float(parts[4])
