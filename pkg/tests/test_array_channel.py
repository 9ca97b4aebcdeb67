import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nearfield_ce.array_channel import (
    SPEED_OF_LIGHT, ArrayGeometry, LargeScaleParams, MultipathConfig, SmallScaleParams,
    SystemConfig, Trajectory, channel_block, delta_r, direction_cosines, evolve_trajectory,
    far_steering, farfield_multipath, large_scale_at, near_steering, rayleigh_distance,
    synth_channel, synth_channels_batch, temporal_correlation)

LAMBDA_1THZ = SPEED_OF_LIGHT / 1e12
D_HALF = LAMBDA_1THZ / 2

cosines = st.floats(-0.99, 0.99)


def test_direction_cosines_examples():
    assert np.allclose(direction_cosines(0.0, math.pi / 2), (1.0, 0.0), atol=1e-15)
    assert np.allclose(direction_cosines(math.pi / 2, math.pi / 2), (0.0, 1.0), atol=1e-15)
    th, ph = direction_cosines(math.pi / 4, math.pi / 3)
    # sqrt(2)/2 * sqrt(3)/2 for both products
    assert th == pytest.approx(math.sqrt(6) / 4, abs=1e-15)
    assert ph == pytest.approx(math.sqrt(6) / 4, abs=1e-15)


def test_far_steering_examples():
    assert np.allclose(far_steering(0, 0, ArrayGeometry(3, 2)), np.ones(6))
    assert np.allclose(far_steering(1.0, 0.0, ArrayGeometry(2, 2)), [1, 1, -1, -1])
    assert np.allclose(far_steering(0.3, -0.7, ArrayGeometry(1, 1)), [1])


def test_far_steering_is_kron_of_axes():
    geom = ArrayGeometry(4, 3)
    th, ph = 0.37, -0.61
    ax = np.exp(-1j * np.pi * np.arange(4) * th)
    ay = np.exp(-1j * np.pi * np.arange(3) * ph)
    assert np.allclose(far_steering(th, ph, geom), np.kron(ax, ay), atol=1e-14)


def test_delta_r_reference_and_taylor_substitution():
    for mode in ("exact", "taylor"):
        assert delta_r(3.0, 0.4, 1.1, 1, 1, D_HALF, mode) == 0.0
    r = 2.0
    # theta = phi = 0 needs sin(theta_el) = 0
    assert delta_r(r, 0.0, 0.0, 2, 1, D_HALF, "taylor") == pytest.approx(D_HALF ** 2 / (2 * r),
                                                                         rel=1e-14)


def test_delta_r_exact_against_extended_precision():
    r, az, el, x, y, d = 5.0, 0.3, 1.0, 8, 8, D_HALF
    mpmath.mp.dps = 50
    th = mpmath.cos(az) * mpmath.sin(el)
    ph = mpmath.sin(az) * mpmath.sin(el)
    dx, dy = (x - 1) * mpmath.mpf(d), (y - 1) * mpmath.mpf(d)
    oracle = mpmath.sqrt(r ** 2 - 2 * r * (dx * th + dy * ph) + dx ** 2 + dy ** 2) - r
    exact = delta_r(r, az, el, x, y, d, "exact")
    taylor = delta_r(r, az, el, x, y, d, "taylor")
    assert abs(exact - float(oracle)) < 1e-15
    assert abs(exact - taylor) < 1e-9


def test_delta_r_errors():
    with pytest.raises(ValueError):
        delta_r(0.0, 0, 0, 1, 1, D_HALF)
    with pytest.raises(ValueError):
        delta_r(1.0, 0, 0, 0, 1, D_HALF)


def test_taylor_phase_error_decreases_with_distance():
    geom = ArrayGeometry.half_wave(8, 8, 1e12)
    z = rayleigh_distance(geom, LAMBDA_1THZ)
    errs = [np.pi * abs(delta_r(r, 0.4, 0.9, 8, 8, geom.spacing_d, "exact")
                        - delta_r(r, 0.4, 0.9, 8, 8, geom.spacing_d, "taylor")) / geom.spacing_d
            for r in (z / 4, z / 2, z, 2 * z, 4 * z)]
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_near_steering_per_element_oracle():
    geom = ArrayGeometry.half_wave(4, 4, 1e12)
    r, th, ph = 0.05, 0.3, 0.1
    d = geom.spacing_d
    expect = []
    for x in range(1, 5):
        for y in range(1, 5):
            dx, dy = (x - 1) * d, (y - 1) * d
            proj = dx * th + dy * ph
            dr = -proj + (dx ** 2 + dy ** 2 - proj ** 2) / (2 * r)
            expect.append(np.exp(1j * np.pi * dr / d))
    assert np.allclose(near_steering(r, th, ph, geom), expect, atol=1e-12)
    assert np.allclose(near_steering(1.0, 0.2, 0.1, ArrayGeometry(1, 1)), [1])
    with pytest.raises(ValueError):
        near_steering(0.0, 0, 0, geom)


@settings(max_examples=50, deadline=None)
@given(th=cosines, ph=cosines, n_h=st.integers(1, 6), n_v=st.integers(1, 6))
def test_far_field_limit(th, ph, n_h, n_v):
    # At r = c * Z the curvature phase peaks at pi/(2c) (broadside, far corner),
    # so the deviation is bounded by pi/(2c), not 1/c.
    geom = ArrayGeometry.half_wave(n_h, n_v, 1e12)
    z = rayleigh_distance(geom, LAMBDA_1THZ)
    if z == 0:
        assert np.allclose(near_steering(1.0, th, ph, geom), far_steering(th, ph, geom))
        return
    x, y = geom.element_indices()
    proj = x * th + y * ph
    for mult in (1e4, 1e6):
        r = mult * z
        dev = np.abs(near_steering(r, th, ph, geom) - far_steering(th, ph, geom)).max()
        curv = np.pi * geom.spacing_d / (2 * r) * (x * x + y * y - proj * proj)
        oracle = np.abs(np.exp(1j * curv) - 1).max()
        assert dev == pytest.approx(oracle, rel=1e-6, abs=1e-15)
        assert dev <= np.pi / (2 * mult) * (1 + 1e-9)


@settings(max_examples=50, deadline=None)
@given(th=cosines, ph=cosines, r=st.floats(1e-3, 100.0))
def test_steering_unit_modulus(th, ph, r):
    geom = ArrayGeometry.half_wave(5, 3, 1e12)
    for a in (far_steering(th, ph, geom), near_steering(r, th, ph, geom)):
        assert np.max(np.abs(np.abs(a) - 1.0)) < 1e-12


def test_rayleigh_distance_examples():
    assert rayleigh_distance(ArrayGeometry(1, 1), 1.0) == 0.0
    lam = 2e-3
    assert rayleigh_distance(ArrayGeometry(2, 1, lam / 2), lam) == pytest.approx(lam / 2)
    geom = ArrayGeometry.half_wave(8, 8, 1e12)
    # D^2 = 2 * (7 d)^2, so Z = 4 * 49 d^2 / lambda = 49 lambda
    assert rayleigh_distance(geom, LAMBDA_1THZ) == pytest.approx(49 * LAMBDA_1THZ, rel=1e-14)


def _sys(n_t=(4, 1), n_r=(2, 1), k=2):
    return SystemConfig.default(n_t=n_t, n_r=n_r, k_sub=k)


def test_synth_channel_examples():
    sys = _sys()
    large = LargeScaleParams(0.1, 0.0, -0.3, 0.0, 2.0)
    assert np.all(synth_channel(sys, large, SmallScaleParams(0j), 1) == 0)
    one = SystemConfig.default(n_t=(1, 1), n_r=(1, 1), k_sub=1)
    # r chosen so that r * f_s / c is an integer
    r = SPEED_OF_LIGHT / one.subcarrier_spacing_hz
    h = synth_channel(one, LargeScaleParams(0, 0, 0, 0, r), SmallScaleParams(1 + 0j), 1)
    assert np.allclose(h, [[1]], atol=1e-9)
    with pytest.raises(ValueError):
        synth_channel(sys, large, SmallScaleParams(1j), 3)


def test_synth_channel_singular_values():
    sys = _sys()
    alpha = 0.7 - 1.2j
    h = synth_channel(sys, LargeScaleParams(0.2, 0.0, -0.4, 0.0, 0.3), SmallScaleParams(alpha), 1)
    s = np.linalg.svd(h, compute_uv=False)
    assert s[0] == pytest.approx(abs(alpha) * math.sqrt(8), rel=1e-12)
    assert s[1] < 1e-10 * s[0]


@settings(max_examples=30, deadline=None)
@given(p=st.tuples(cosines, cosines, cosines, cosines, st.floats(0.01, 50.0)),
       re=st.floats(-3, 3), im=st.floats(-3, 3))
def test_synth_batch_matches_scalar_and_rank_one(p, re, im):
    sys = _sys(n_t=(3, 2), n_r=(2, 2))
    alpha = complex(re, im)
    large = LargeScaleParams(*p)
    batch = synth_channels_batch(sys, np.array(p)[None], np.array([alpha]))[0]
    for k in (1, 2):
        h = synth_channel(sys, large, SmallScaleParams(alpha), k)
        assert np.allclose(batch[k - 1], h, atol=1e-12)
        s = np.linalg.svd(h, compute_uv=False)
        if s[0] > 0:
            assert s[1] < 1e-10 * s[0]


def test_channel_block_shape():
    sys = _sys()
    blk = channel_block(sys, LargeScaleParams(0.1, 0, 0.2, 0, 1.0), SmallScaleParams(1j), 3)
    assert blk.h_per_subcarrier.shape == (2, 2, 4)
    assert blk.block_index == 3


def test_trajectory_distance_progression():
    traj = Trajectory((5.0, 0.0, 0.0), 3 / 3.6, (1.0, 0.0, 0.0), 0.02)
    rs = [large_scale_at(traj, l).r_m for l in range(1, 6)]
    assert np.allclose(rs, [5 + 0.0166667 * (l - 1) for l in range(1, 6)], atol=1e-6)


def test_static_ue_has_constant_geometry():
    traj = Trajectory((1.0, 0.5, 2.0), 0.0, (0.0, 0.0, 1.0))
    first = large_scale_at(traj, 1)
    assert all(large_scale_at(traj, l) == first for l in range(2, 6))


def test_trajectory_errors():
    with pytest.raises(ValueError):
        Trajectory((1, 0, 0), -1.0)
    with pytest.raises(ValueError):
        Trajectory((1, 0, 0), heading=(1.0, 1.0, 0.0))
    traj = Trajectory((0.02, 0.0, 0.0), 1.0, (-1.0, 0.0, 0.0), 0.02)
    with pytest.raises(ValueError):
        large_scale_at(traj, 2)


def test_geometry_is_consistent_with_bs_frame():
    traj = Trajectory((0.0, 0.0, 4.0), 0.0, (1.0, 0.0, 0.0))
    p = large_scale_at(traj, 1)
    # UE straight in front of a BS facing +z, UE facing back: both broadside
    assert np.allclose([p.theta_t, p.phi_t, p.theta_r, p.phi_r], 0, atol=1e-12)
    yawed = Trajectory((0.0, 0.0, 4.0), 0.0, (1.0, 0.0, 0.0), ue_yaw_rad=0.3)
    assert abs(large_scale_at(yawed, 1).theta_r) == pytest.approx(math.sin(0.3), rel=1e-12)


def test_evolve_trajectory_draws_unit_gain():
    rng = np.random.default_rng(1)
    traj = Trajectory((2.0, 0.0, 3.0))
    gains = [evolve_trajectory(traj, _sys(), 1, rng)[1].alpha for _ in range(20000)]
    assert np.mean(np.abs(gains) ** 2) == pytest.approx(1.0, abs=0.03)


def test_temporal_correlation_properties():
    geom = ArrayGeometry.half_wave(8, 1, 1e12)
    p1 = LargeScaleParams(0.1, 0, 0.2, 0, 3.0)
    p2 = LargeScaleParams(0.1, 0, 0.25, 0, 3.1)
    assert temporal_correlation(p1, p1, geom) == pytest.approx(1.0)
    assert temporal_correlation(p1, p2, geom) == pytest.approx(temporal_correlation(p2, p1, geom))
    a1 = near_steering(3.0, 0.2, 0, geom)
    a2 = near_steering(3.1, 0.25, 0, geom)
    oracle = abs(np.sum(a1.conj() * a2)) / 8
    assert temporal_correlation(p1, p2, geom) == pytest.approx(oracle, rel=1e-12)
    # grid-spaced far-field directions are orthogonal
    far = 1e9
    q1 = LargeScaleParams(0, 0, 0.0, 0, far)
    q2 = LargeScaleParams(0, 0, 2 / 8, 0, far)
    assert temporal_correlation(q1, q2, geom) < 1e-6


def test_slower_ue_is_more_correlated():
    geom = ArrayGeometry.half_wave(16, 1, 1e12)
    rng = np.random.default_rng(3)
    slow, fast = [], []
    for _ in range(200):
        start = (rng.uniform(-0.8, 0.8), 0.0, rng.uniform(0.3, 1.0))
        ang = rng.uniform(0, 2 * math.pi)
        heading = (math.sin(ang), 0.0, math.cos(ang))
        for speed, out in ((3 / 3.6, slow), (30 / 3.6, fast)):
            traj = Trajectory(start, speed, heading)
            out.append(temporal_correlation(large_scale_at(traj, 1), large_scale_at(traj, 2), geom))
    assert np.mean(slow) > np.mean(fast)


def test_farfield_multipath_examples():
    rng = np.random.default_rng(0)
    cfg = MultipathConfig(n_paths=1, power_gain_p0=0.0)
    assert np.all(farfield_multipath(cfg, 8, rng) == 0)
    h = farfield_multipath(MultipathConfig(n_paths=1), 8, rng, angles=[0.0], gains=[1.0])
    assert np.allclose(h, math.sqrt(8) / 8 * np.ones(8))


def test_farfield_multipath_power_monte_carlo():
    cfg = MultipathConfig(n_paths=3, power_gain_p0=1.0, center_freq_f=2.0, distance_R=0.5)
    rng = np.random.default_rng(5)
    n_t, draws = 8, 100000
    # oracle: direct evaluation of the generative formula with independent draws
    o_rng = np.random.default_rng(6)
    var = 1.0 / (2.0 ** 2 * 0.5 ** 2)
    th = o_rng.uniform(-np.pi, np.pi, (draws, 3))
    rho = math.sqrt(var / 2) * (o_rng.standard_normal((draws, 3)) + 1j * o_rng.standard_normal((draws, 3)))
    a = np.exp(1j * th[..., None] * np.arange(n_t)) / n_t
    oracle = np.mean(np.sum(np.abs(math.sqrt(n_t / 3) * np.einsum("dl,dln->dn", rho, a)) ** 2, 1))
    got = np.mean([np.sum(np.abs(farfield_multipath(cfg, n_t, rng)) ** 2) for _ in range(draws)])
    assert got == pytest.approx(oracle, rel=0.02)
