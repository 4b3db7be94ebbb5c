import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimo_afdm.channel import ProfileSpec, assemble_mimo, effective_band, sample_channel
from mimo_afdm.daft import make_params
from mimo_afdm.detect import (
    ML_SEARCH_LIMIT,
    DetectorConfig,
    SparseSystem,
    detect_lmmse,
    detect_ml,
    detect_mp,
    make_constellation,
)
from mimo_afdm.harness import system_from_bands


def brute_force_ml(H, y, points):
    """Independent oracle: loop over every candidate with plain norms."""
    best, arg = np.inf, None
    for cand in itertools.product(points, repeat=H.shape[1]):
        x = np.array(cand)
        d = np.linalg.norm(y - H @ x)
        if d < best:
            best, arg = d, x
    return arg


def cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


class TestConstellation:
    @pytest.mark.parametrize("name, size", [("BPSK", 2), ("4QAM", 4), ("16QAM", 16)])
    def test_unit_energy_and_gray(self, name, size):
        c = make_constellation(name)
        assert c.size == size
        assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0, abs=1e-15)
        # nearest neighbours differ in exactly one bit
        dist = np.abs(c.points[:, None] - c.points[None, :])
        dmin = np.min(dist[dist > 1e-9])
        for i, j in zip(*np.nonzero(np.isclose(dist, dmin))):
            assert np.sum(c.labels[i] != c.labels[j]) == 1

    @given(st.sampled_from(["BPSK", "4QAM", "16QAM"]), st.integers(0, 2**31))
    def test_bits_round_trip(self, name, seed):
        c = make_constellation(name)
        bits = np.random.default_rng(seed).integers(0, 2, (13, c.bits_per_symbol))
        np.testing.assert_array_equal(c.bits_of(c.modulate(bits)), bits)

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_constellation("8PSK")


class TestMl:
    def test_noiseless_recovers(self, rng):
        c = make_constellation("4QAM")
        H = cn(rng, 6, 5)
        x = c.points[rng.integers(0, 4, 5)]
        np.testing.assert_allclose(detect_ml(H, H @ x, c), x)

    def test_identity_is_sign_decision(self, rng):
        c = make_constellation("BPSK")
        x = c.points[rng.integers(0, 2, 8)]
        y = x + 0.3 * cn(rng, 8)
        np.testing.assert_allclose(detect_ml(np.eye(8), y, c), np.sign(y.real))

    def test_matches_brute_force_2x2_n6(self, rng):
        p = make_params(6, 1, 1)
        spec = ProfileSpec((0, 0, 1), dopplers=(0.0, 1.0, 1.0))
        c = make_constellation("BPSK")
        Hs, ys, refs = [], [], []
        for _ in range(100):
            H = assemble_mimo(p, sample_channel(spec, 2, 2, rng, p))
            x = c.points[rng.integers(0, 2, 12)]
            y = H @ x + 0.6 * cn(rng, 12)
            Hs.append(H)
            ys.append(y)
        out = detect_ml(np.stack(Hs), np.stack(ys), c)
        for k in range(0, 100, 9):  # the oracle is slow; spot-check every ninth
            np.testing.assert_allclose(out[k], brute_force_ml(Hs[k], ys[k], c.points))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), name=st.sampled_from(["BPSK", "4QAM", "16QAM"]))
    def test_optimal_metric(self, seed, name):
        r = np.random.default_rng(seed)
        c = make_constellation(name)
        K = 2 if name == "16QAM" else 4
        H = cn(r, K + 1, K)
        y = H @ c.points[r.integers(0, c.size, K)] + cn(r, K + 1)
        ref = brute_force_ml(H, y, c.points)
        got = detect_ml(H, y, c)
        assert np.linalg.norm(y - H @ got) <= np.linalg.norm(y - H @ ref) + 1e-9

    def test_guard(self):
        c = make_constellation("BPSK")
        n = int(np.log2(ML_SEARCH_LIMIT)) + 1
        with pytest.raises(ValueError):
            detect_ml(np.eye(n), np.zeros(n), c)


class TestMp:
    def test_identity_like_is_slicing(self, rng):
        c = make_constellation("16QAM")
        gains = cn(rng, 20)
        x = c.points[rng.integers(0, 16, 20)]
        y = gains * x + 0.05 * cn(rng, 20)
        sys_ = SparseSystem(np.arange(20), np.arange(20), gains, 20, 20)
        res = detect_mp(sys_, y, c, 0.0025)
        np.testing.assert_allclose(res.symbols, c.slice(y / gains))
        assert res.converged

    def test_zero_iterations_is_prior(self, rng):
        c = make_constellation("BPSK")
        sys_ = SparseSystem.from_dense(cn(rng, 5, 5))
        res = detect_mp(sys_, cn(rng, 5), c, 1.0, DetectorConfig(n_iter=0))
        assert res.iterations == 0 and res.operations == 0
        np.testing.assert_allclose(res.posterior, 0.5)

    def test_empty_graph_keeps_prior(self, rng):
        """An all-zero channel estimate leaves no edges; posteriors stay uniform."""
        c = make_constellation("BPSK")
        sys_ = SparseSystem.from_dense(np.zeros((4, 4)))
        res = detect_mp(sys_, cn(rng, 4), c, 1.0)
        np.testing.assert_allclose(res.posterior, 0.5)

    def test_noiseless_banded(self, rng):
        p = make_params(256, 2, 2, 0)
        real = sample_channel(ProfileSpec((0, 0, 1, 2), nu_max=2, integer_doppler=True), 2, 2, rng, p)
        c = make_constellation("BPSK")
        x = c.points[rng.integers(0, 2, 512)]
        sys_ = system_from_bands(p, effective_band(p, real), np.arange(256), np.arange(256))
        y = sys_.dense() @ x
        res = detect_mp(sys_, y + 0.05 * cn(rng, 512), c, 0.0025)
        assert np.mean(res.symbols != x) < 1e-3

    def test_operation_count(self, rng):
        """Per iteration at most c * N * N_r * S * |A| with c = 3 and S = L + 1."""
        p = make_params(256, 2, 2, 1)
        real = sample_channel(ProfileSpec((0, 0, 1, 2), nu_max=2), 2, 2, rng, p)
        c = make_constellation("4QAM")
        sys_ = system_from_bands(p, effective_band(p, real), np.arange(256), np.arange(256))
        res = detect_mp(sys_, cn(rng, 512), c, 0.1, DetectorConfig(n_iter=5, tol=0.0))
        S = p.L + 1
        N_t, N_r = 2, 2
        # each observation row touches S entries per transmit antenna
        assert res.operations <= res.iterations * 3 * p.N * N_r * (N_t * S) * c.size
        assert not res.converged and res.iterations == 5

    def test_shape_check(self):
        with pytest.raises(ValueError):
            detect_mp(SparseSystem.from_dense(np.eye(3)), np.zeros(4), make_constellation("BPSK"), 1.0)

    @pytest.mark.slow
    def test_close_to_ml_small_mimo(self):
        """At moderate SNR the MP symbol error rate stays within 2x of ML (N=6, 2x2, BPSK)."""
        r = np.random.default_rng(7)
        p = make_params(6, 1, 1)
        spec = ProfileSpec((0, 1), dopplers=(0.0, 1.0))
        c = make_constellation("BPSK")
        n = 10_000
        Hs = np.empty((n, 12, 12), dtype=np.complex128)
        xs = c.points[r.integers(0, 2, (n, 12))]
        ys = np.empty((n, 12), dtype=np.complex128)
        N0 = 10 ** (-4 / 10)
        for k in range(n):
            Hs[k] = assemble_mimo(p, sample_channel(spec, 2, 2, r, p))
            ys[k] = Hs[k] @ xs[k] + np.sqrt(N0) * cn(r, 12)
        ml_err = np.sum(detect_ml(Hs, ys, c) != xs)
        mp_err = sum(np.sum(detect_mp(SparseSystem.from_dense(Hs[k]), ys[k], c, N0).symbols != xs[k]) for k in range(n))
        assert ml_err > 0
        assert mp_err <= 2 * ml_err


class TestLmmse:
    def test_unitary_noiseless(self, rng):
        c = make_constellation("16QAM")
        Q, _ = np.linalg.qr(cn(rng, 8, 8))
        x = c.points[rng.integers(0, 16, 8)]
        np.testing.assert_allclose(detect_lmmse(Q, Q @ x, 1e-12, c), x)

    def test_identity_slicing(self, rng):
        c = make_constellation("4QAM")
        y = cn(rng, 10)
        np.testing.assert_allclose(detect_lmmse(np.eye(10), y, 0.1, c), c.slice(y / 1.1))

    def test_agrees_with_ml_single_path(self, rng):
        p = make_params(64, 1, 1)
        c = make_constellation("BPSK")
        agree = total = 0
        for _ in range(20):
            real = sample_channel(ProfileSpec((1,), dopplers=(1.0,)), 1, 1, rng, p)
            H = assemble_mimo(p, real)
            x = c.points[rng.integers(0, 2, 64)]
            N0 = 1e-3
            y = H @ x + np.sqrt(N0) * cn(rng, 64)
            # a single path is a scaled permutation, so ML decouples per symbol
            ml = np.concatenate([detect_ml(H[:, k : k + 1], y, c) for k in range(64)])
            agree += np.sum(detect_lmmse(H, y, N0, c) == ml)
            total += 64
        assert agree / total >= 0.95

    def test_needs_noise(self):
        with pytest.raises(ValueError):
            detect_lmmse(np.eye(2), np.zeros(2), 0.0, make_constellation("BPSK"))

    def test_sparse_input(self, rng):
        c = make_constellation("BPSK")
        H = cn(rng, 6, 6)
        y = cn(rng, 6)
        np.testing.assert_array_equal(detect_lmmse(SparseSystem.from_dense(H), y, 0.2, c), detect_lmmse(H, y, 0.2, c))


def test_detectors_are_pure(rng):
    c = make_constellation("4QAM")
    H = cn(rng, 6, 4)
    y = cn(rng, 6)
    sys_ = SparseSystem.from_dense(H)
    np.testing.assert_array_equal(detect_ml(H, y, c), detect_ml(H, y, c))
    np.testing.assert_array_equal(detect_mp(sys_, y, c, 0.1).symbols, detect_mp(sys_, y, c, 0.1).symbols)
    np.testing.assert_array_equal(detect_lmmse(H, y, 0.1, c), detect_lmmse(H, y, 0.1, c))
