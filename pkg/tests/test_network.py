"""Weight state, race sampler, log-space count arithmetic, checkpoints."""

import numpy as np
import pytest

from spiketopics.errors import ConsistencyError, DomainError
from spiketopics.network import (Hyperparams, NetworkWeights,
                                 constraint_deviation, joint_density,
                                 load_checkpoint, potentials, race_sample,
                                 race_sample_clocks, save_checkpoint, softmax,
                                 tau1, tau2)


def small_weights(k=2, v=3, d=2, b=False, seed=0):
    rng = np.random.default_rng(seed)
    return NetworkWeights(
        rng.normal(size=(k, v)), rng.normal(size=(k, d)),
        rng.normal(size=k) if b else None)


class TestHyperparams:
    def test_symmetric_and_sums(self):
        hp = Hyperparams.symmetric(3, 5, lam=2.0, phi=0.5)
        assert hp.lam.tolist() == [2.0, 2.0, 2.0]
        assert hp.phi_bar == pytest.approx(2.5)
        assert hp.lam_bar == pytest.approx(6.0)
        assert hp.kappa == pytest.approx(3.0)

    def test_negative_rejected(self):
        with pytest.raises(ConsistencyError):
            Hyperparams(np.array([-0.1, 1.0]), np.array([0.5]))


class TestPotentials:
    def test_sum_of_entries(self):
        w = small_weights()
        w.m_alpha[1, 2] = 1.0
        w.m_beta[1, 0] = 0.5
        assert potentials(w, 2, 0)[1] == pytest.approx(1.5)

    def test_self_excitation_subtracted(self):
        w = small_weights(b=True)
        w.m_alpha[0, 0] = 1.0
        w.m_beta[0, 1] = 0.5
        w.b[0] = 0.5
        assert potentials(w, 0, 1, use_self_excitation=True)[0] == pytest.approx(1.0)

    def test_zero_weights(self):
        w = NetworkWeights(np.zeros((3, 4)), np.zeros((3, 2)))
        np.testing.assert_array_equal(potentials(w, 1, 1), np.zeros(3))


def tv_distance(counts, p):
    emp = counts / counts.sum()
    return 0.5 * float(np.abs(emp - p).sum())


class TestRaceSample:
    def test_symmetric_two_topics(self):
        rng = np.random.default_rng(0)
        draws = race_sample(np.zeros(2), rng, size=100_000)
        frac = draws.mean()
        assert abs(frac - 0.5) < 3 * np.sqrt(0.25 / 100_000)

    def test_log_odds_one_three(self):
        rng = np.random.default_rng(1)
        u = np.log([1.0, 3.0])
        draws = race_sample(u, rng, size=100_000)
        frac1 = draws.mean()
        assert abs(frac1 - 0.75) < 3 * np.sqrt(0.75 * 0.25 / 100_000)

    def test_shifted_ratios(self):
        # rates proportional to (1, 2, 3) after a +5 shift
        rng = np.random.default_rng(2)
        u = 5.0 + np.log([1.0, 2.0, 3.0])
        target = np.array([1, 2, 3]) / 6.0
        counts = np.bincount(race_sample(u, rng, size=100_000), minlength=3)
        assert tv_distance(counts, target) < 0.01
        # shift invariance: identical distribution from u - 5
        rng2 = np.random.default_rng(2)
        counts2 = np.bincount(race_sample(u - 5.0, rng2, size=100_000),
                              minlength=3)
        np.testing.assert_array_equal(counts, counts2)

    def test_tv_under_softmax_random_u(self):
        rng = np.random.default_rng(3)
        for k in (2, 3, 5):
            for _ in range(5):
                u = rng.normal(scale=2.0, size=k)
                counts = np.bincount(race_sample(u, rng, size=100_000),
                                     minlength=k)
                assert tv_distance(counts, softmax(u)) < 0.01

    def test_overflow_safe(self):
        rng = np.random.default_rng(4)
        u = np.array([1000.0, 1000.0 + np.log(3.0)])
        draws = race_sample(u, rng, size=50_000)
        assert abs(draws.mean() - 0.75) < 0.02

    def test_clock_simulation_equivalent(self):
        # the literal first-arrival race matches the analytic softmax
        rng = np.random.default_rng(5)
        u = np.array([0.3, -0.7, 1.1])
        counts = np.bincount(race_sample_clocks(u, rng, size=100_000),
                             minlength=3)
        assert tv_distance(counts, softmax(u)) < 0.01

    def test_nan_rejected(self):
        with pytest.raises(DomainError):
            race_sample(np.array([np.nan, 0.0]), np.random.default_rng(0))


class TestTau:
    def test_tau2_increments(self):
        assert tau2(np.log(3.0)) == pytest.approx(np.log(4.0), abs=1e-14)

    @pytest.mark.parametrize("x", [0.1, 1.0, 10.0, 30.0])
    def test_inverse_pair(self, x):
        assert tau1(tau2(x)) == pytest.approx(x, abs=1e-12)
        assert tau2(tau1(x)) == pytest.approx(x, abs=1e-12)

    def test_domain_error(self):
        with pytest.raises(DomainError):
            tau1(0.0)
        with pytest.raises(DomainError):
            tau1(-1.0)

    def test_tiny_count_against_mpmath(self):
        # count near zero held as log(1 + 1e-7): the decrement must
        # reproduce the high-precision value of log(exp(x) - 1), not -inf
        mp = pytest.importorskip("mpmath")
        x = float(np.log(1.0000001))
        got = tau1(x)
        assert np.isfinite(got)
        with mp.workdps(60):
            want = float(mp.log(mp.expm1(mp.mpf(x))))
        assert got == pytest.approx(want, rel=1e-9)
        assert got == pytest.approx(np.log(1e-7), rel=1e-5)

    def test_large_arguments_stable(self):
        for x in (50.0, 500.0, 800.0):
            assert tau1(x) == pytest.approx(x, abs=1e-12)
            assert tau2(x) == pytest.approx(x, abs=1e-12)

    def test_vectorized(self):
        x = np.array([0.5, 2.0, 40.0])
        np.testing.assert_allclose(tau1(tau2(x)), x, atol=1e-12)


class TestJointDensity:
    def test_degenerate_forced_one(self):
        w = NetworkWeights(np.zeros((1, 1)), np.zeros((1, 1)))
        assert joint_density(w, 0, 0, 0) == pytest.approx(1.0, abs=1e-15)

    def test_normalizes_over_word_topic(self):
        rng = np.random.default_rng(6)
        w = NetworkWeights(rng.normal(size=(3, 4)), rng.normal(size=(3, 2)))
        for d in range(2):
            total = sum(joint_density(w, wi, d, z)
                        for wi in range(4) for z in range(3))
            assert total == pytest.approx(1.0, abs=1e-10)

    def test_manifold_product_form(self):
        # on the constraint manifold the density factorizes into the
        # decoded topic/word and document/topic probabilities
        rng = np.random.default_rng(7)
        kappa = 2.5
        m_alpha = rng.normal(size=(3, 5))
        m_alpha -= np.log(np.exp(m_alpha).sum(axis=1, keepdims=True))
        m_beta = rng.normal(size=(3, 2))
        m_beta -= np.log(np.exp(m_beta).sum(axis=0, keepdims=True) / kappa)
        w = NetworkWeights(m_alpha, m_beta)
        phi = np.exp(m_alpha)
        theta = np.exp(m_beta) / kappa
        for z in range(3):
            for wi in range(5):
                want = phi[z, wi] * theta[z, 0]
                assert joint_density(w, wi, 0, z) == pytest.approx(want, rel=1e-10)


class TestConstraintDeviation:
    def test_uniform_rows_zero(self):
        v = 7
        w = NetworkWeights(np.full((2, v), -np.log(v)), np.zeros((2, 1)))
        za, _ = constraint_deviation(w, kappa=1.0)
        np.testing.assert_allclose(za, 0.0, atol=1e-12)

    def test_beta_target_kappa(self):
        k, kappa = 4, 3.0
        w = NetworkWeights(np.zeros((k, 2)), np.full((k, 3), np.log(kappa / k)))
        _, zb = constraint_deviation(w, kappa=kappa)
        np.testing.assert_allclose(zb, 0.0, atol=1e-12)

    def test_zero_row_value(self):
        w = NetworkWeights(np.zeros((1, 3)), np.zeros((1, 1)))
        za, _ = constraint_deviation(w)
        assert za[0] == pytest.approx(2.0)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        w = NetworkWeights(rng.normal(size=(3, 6)), rng.normal(size=(3, 4)),
                           rng.normal(size=3))
        hp = Hyperparams(rng.uniform(1, 2, 3), rng.uniform(0, 1, 6))
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, w, hp, "spikecgs", extra={"seed": 5})
        w2, hp2, mode, extra = load_checkpoint(path)
        assert mode == "spikecgs"
        assert extra["seed"] == 5
        assert np.array_equal(w.m_alpha, w2.m_alpha)
        assert np.array_equal(w.m_beta, w2.m_beta)
        assert np.array_equal(w.b, w2.b)
        assert np.array_equal(hp.lam, hp2.lam)
        assert np.array_equal(hp.phi, hp2.phi)

    def test_byte_deterministic(self, tmp_path):
        w = small_weights(seed=11)
        hp = Hyperparams.symmetric(2, 3, 1.5, 0.5)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, w, hp, "ed-spikelda")
        save_checkpoint(p2, w, hp, "ed-spikelda")
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"nope")
        with pytest.raises(ConsistencyError):
            load_checkpoint(path)
