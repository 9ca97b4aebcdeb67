import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nearfield_ce.array_channel import (
    ArrayGeometry, ChannelBlock, LargeScaleParams, SmallScaleParams, SystemConfig,
    synth_channels_batch)
from nearfield_ce.pilot import (
    Codebooks, PilotConfig, beam_grid, build_codebooks, measure, noise_variance,
    noiseless_measurements, stack, system_matrix, unstack, unvec, vec)

TRUTH = LargeScaleParams(0.1, 0.0, -0.2, 0.0, 3.0)


def _block(h):
    return ChannelBlock(np.asarray(h, complex), TRUTH, SmallScaleParams(1.0))


def _random_channels(sys, n, rng):
    params = np.column_stack([rng.uniform(-0.9, 0.9, n), np.zeros(n), rng.uniform(-0.9, 0.9, n),
                              np.zeros(n), rng.uniform(1, 10, n)])
    alpha = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
    return synth_channels_batch(sys, params, alpha)


def test_pilot_config_validation():
    with pytest.raises(ValueError):
        PilotConfig(0, 1, 1)
    with pytest.raises(ValueError):
        PilotConfig(1, 2, 1, pilot_symbols=np.ones((1, 3)))
    with pytest.raises(ValueError):
        PilotConfig(1, 2, 1, pilot_symbols=np.array([[1.0, 1.0 + 1e-9]]))
    cfg = PilotConfig(2, 3, 1)
    assert np.array_equal(cfg.symbols, np.ones((2, 3)))


def test_codebook_rejects_non_unit_columns():
    with pytest.raises(ValueError):
        Codebooks(np.ones((4, 2)), np.ones((1, 1)))


def test_full_codebook_is_unitary():
    sys = SystemConfig.default()
    books = build_codebooks(sys, PilotConfig(2, 16, 4))
    f, w = books.precoder_f, books.combiner_w
    assert np.allclose(f.conj().T @ f, np.eye(16), atol=1e-10)
    assert np.allclose(w.conj().T @ w, np.eye(4), atol=1e-10)


def test_single_beam_codebook():
    books = build_codebooks(SystemConfig.default(), PilotConfig(1, 1, 1))
    assert books.precoder_f.shape == (16, 1)
    assert np.linalg.norm(books.precoder_f) == pytest.approx(1.0, abs=1e-14)


def test_half_codebook_gram_matches_inner_product_oracle():
    geom = ArrayGeometry(16, 1)
    f = beam_grid(8, geom)
    th = [-1 + 2 * m / 8 for m in range(1, 9)]
    oracle = np.empty((8, 8), complex)
    for i in range(8):
        for j in range(8):
            oracle[i, j] = sum(complex(math.cos(math.pi * n * (th[i] - th[j])),
                                       math.sin(math.pi * n * (th[i] - th[j])))
                               for n in range(16)) / 16
    assert np.allclose(f.conj().T @ f, oracle, atol=1e-12)
    # on a cosine step of 2/8 the 16-element beams are orthogonal too
    assert np.allclose(oracle, np.eye(8), atol=1e-12)


def test_codebook_warns_when_oversized():
    with pytest.warns(UserWarning):
        build_codebooks(SystemConfig.default(), PilotConfig(1, 32, 4))


def test_noise_free_rank1_scalar_case():
    sys = SystemConfig.default(n_t=(1, 1), n_r=(1, 1), k_sub=1)
    cfg = PilotConfig(1, 1, 1, snr_db=math.inf)
    books = build_codebooks(sys, cfg)
    h = np.array([[[0.3 - 0.4j]]])
    out = measure(_block(h), books, cfg, np.random.default_rng(0))
    expected = books.combiner_w.conj().T @ h[0] @ books.precoder_f
    assert out.noise_var == 0.0
    assert out.y_per_subcarrier[0, 0, 0] == expected[0, 0]


def test_zero_channel_gives_pure_noise_variance():
    sys = SystemConfig.default()
    cfg = PilotConfig(2, 16, 4, snr_db=7.0)
    books = build_codebooks(sys, cfg)
    rng = np.random.default_rng(1)
    samples = np.concatenate([
        measure(_block(np.zeros((2, 4, 16))), books, cfg, rng).stacked for _ in range(800)])
    assert samples.size >= 1e5
    var = np.mean(np.abs(samples) ** 2)
    assert abs(var / noise_variance(7.0) - 1) < 0.03
    assert abs(np.mean(samples.real ** 2) / np.mean(samples.imag ** 2) - 1) < 0.03


def test_stacking_order():
    k, m, t = 3, 4, 2
    y = np.arange(k * t * m).reshape(k, t, m) + 0j
    s = stack(y)
    for kk in range(1, k + 1):
        for mm in range(1, m + 1):
            for tt in range(1, t + 1):
                assert s[(kk - 1) * m * t + (mm - 1) * t + (tt - 1)] == y[kk - 1, tt - 1, mm - 1]


@given(st.integers(1, 4), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_stack_round_trip_is_exact(k, m, t, seed):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((2, k, t, m)) + 1j * rng.standard_normal((2, k, t, m))
    assert np.array_equal(unstack(stack(y), k, m, t), y)


def test_vec_round_trip_and_column_major():
    h = np.arange(6).reshape(2, 3)
    assert list(vec(h)) == [0, 3, 1, 4, 2, 5]
    assert np.array_equal(unvec(vec(h), 2, 3), h)


def test_measure_stacked_matches_per_subcarrier():
    sys = SystemConfig.default()
    cfg = PilotConfig(2, 8, 4, snr_db=10.0)
    books = build_codebooks(sys, cfg)
    h = _random_channels(sys, 1, np.random.default_rng(2))[0]
    out = measure(_block(h), books, cfg, np.random.default_rng(3))
    assert np.array_equal(out.stacked, np.concatenate([vec(y) for y in out.y_per_subcarrier]))


def test_measure_dimension_mismatch():
    sys = SystemConfig.default()
    cfg = PilotConfig(2, 8, 4)
    books = build_codebooks(sys, cfg)
    with pytest.raises(ValueError):
        measure(_block(np.zeros((2, 4, 8))), books, cfg, np.random.default_rng(0))
    with pytest.raises(ValueError):
        measure(_block(np.zeros((3, 4, 16))), books, cfg, np.random.default_rng(0))
    with pytest.raises(ValueError):
        measure(_block(np.zeros((2, 4, 16))), books, PilotConfig(2, 4, 4), np.random.default_rng(0))


def test_noise_free_measurement_is_linear():
    sys = SystemConfig.default()
    rng = np.random.default_rng(4)
    sym = PilotConfig.qpsk_symbols(2, 8, rng)
    cfg = PilotConfig(2, 8, 4, snr_db=math.inf, pilot_symbols=sym)
    books = build_codebooks(sys, cfg)
    h1, h2 = _random_channels(sys, 2, rng)
    a, b = 0.7 - 1.2j, -0.3 + 0.5j
    lhs = measure(_block(a * h1 + b * h2), books, cfg, rng).stacked
    rhs = (a * measure(_block(h1), books, cfg, rng).stacked
           + b * measure(_block(h2), books, cfg, rng).stacked)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_empirical_snr_matches_within_0p2_db():
    # With M = N_T the beams form a unitary basis, so the beam-averaged
    # per-antenna signal power equals |alpha|^2 ||a_R||^2 / n_r = |alpha|^2.
    sys = SystemConfig.default()
    cfg = PilotConfig(2, 16, 4, snr_db=12.0)
    books = build_codebooks(sys, cfg)
    rng = np.random.default_rng(5)
    hs = _random_channels(sys, 10_000, rng)
    sig, noise = 0.0, 0.0
    for h in hs:
        out = measure(_block(h), books, cfg, rng)
        clean = noiseless_measurements(h, books, cfg.symbols)
        hf = h @ books.precoder_f
        sig += np.sum(np.abs(hf) ** 2) / (sys.n_r * cfg.m_frames * cfg.k_subcarriers)
        noise += np.mean(np.abs(out.y_per_subcarrier - clean) ** 2)
    snr = 10 * math.log10(sig / noise)
    assert abs(snr - 12.0) < 0.2


def test_system_matrix_identity_case():
    eye_books = Codebooks(np.eye(3, dtype=complex), np.eye(2, dtype=complex))
    assert np.allclose(system_matrix(eye_books, PilotConfig(1, 3, 2), 1), np.eye(6))


def test_system_matrix_matches_direct_product():
    rng = np.random.default_rng(6)

    def unit_cols(n, m):
        x = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
        return x / np.linalg.norm(x, axis=0)

    books = Codebooks(unit_cols(3, 2), unit_cols(2, 2))
    sym = PilotConfig.qpsk_symbols(2, 2, rng)
    cfg = PilotConfig(2, 2, 2, pilot_symbols=sym)
    for k in (1, 2):
        h = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
        direct = books.combiner_w.conj().T @ h @ books.precoder_f @ np.diag(sym[k - 1])
        assert np.max(np.abs(system_matrix(books, cfg, k) @ vec(h) - vec(direct))) < 1e-10
    with pytest.raises(ValueError):
        system_matrix(books, cfg, 3)


def test_system_matrix_scales_with_pilots():
    books = build_codebooks(SystemConfig.default(), PilotConfig(1, 8, 4))
    c = 1j
    base = system_matrix(books, PilotConfig(1, 8, 4), 1)
    scaled = system_matrix(books, PilotConfig(1, 8, 4, pilot_symbols=np.full((1, 8), c)), 1)
    assert np.allclose(scaled, c * base, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.floats(-30, 60))
def test_noise_variance_definition(snr_db):
    assert noise_variance(snr_db) == pytest.approx(10 ** (-snr_db / 10), rel=1e-14)
    assert noise_variance(math.inf) == 0.0


def test_qpsk_symbols_unit_modulus():
    s = PilotConfig.qpsk_symbols(4, 16, np.random.default_rng(0))
    assert np.allclose(np.abs(s), 1.0, atol=1e-15)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        PilotConfig(4, 16, 1, pilot_symbols=s)
