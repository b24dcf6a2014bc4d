"""Generator tests: formulas, determinism, and distributional sanity."""
import numpy as np
import pytest

from kroncov import (
    DenseCovariance,
    GroundTruth,
    SpaceTimeDims,
    ar1_cov,
    inject_anomalies,
    ar1_kron_truth,
    rearrange,
    sample_gaussian,
    sample_student_t,
)
from kroncov.synth import ar1_frame_stream, read_sample_csv, write_sample_csv


class TestAr1Cov:
    def test_formula(self):
        expected = np.array([[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]])
        np.testing.assert_allclose(ar1_cov(3, 0.5), expected)

    def test_zero_coeff_is_identity(self):
        np.testing.assert_array_equal(ar1_cov(4, 0.0), np.eye(4))

    def test_positive_definite_at_strong_correlation(self):
        assert np.linalg.eigvalsh(ar1_cov(10, 0.95))[0] > 0

    def test_invalid_coeff(self):
        with pytest.raises(ValueError):
            ar1_cov(3, 1.0)


class TestPaperTruth:
    def test_degenerate_single_cell(self):
        truth = ar1_kron_truth(1, 1, 0.5, 0.95)
        np.testing.assert_array_equal(truth.sigma.entries, [[1.0]])

    def test_rearrangement_is_rank_one(self):
        truth = ar1_kron_truth(4, 3, 0.5, 0.95)
        sv = np.linalg.svd(rearrange(truth.sigma).entries, compute_uv=False)
        assert sv[1] < 1e-12 * sv[0]

    def test_cross_entry_from_kron_expansion(self):
        # covariance between (frame 0, coord 0) and (frame 1, coord 1)
        truth = ar1_kron_truth(2, 2, 0.5, 0.95)
        assert truth.sigma.entries[0, 3] == pytest.approx(0.5 * 0.95)

    def test_defaults_match_benchmark_grid(self):
        truth = ar1_kron_truth()
        assert truth.sigma.dims == SpaceTimeDims(100, 10)

    def test_positive_definite_enforced(self):
        with pytest.raises(ValueError, match="positive definite"):
            GroundTruth(DenseCovariance(SpaceTimeDims(1, 2), np.zeros((2, 2))), "zero")


class TestGaussianSampler:
    def test_sample_covariance_converges(self):
        truth = ar1_kron_truth(2, 2, 0.0, 0.0)  # identity truth, pT=4
        sset = sample_gaussian(truth, 10_000, 123)
        emp = sset.samples.T @ sset.samples / sset.n
        rel = np.linalg.norm(emp - np.eye(4)) / np.linalg.norm(np.eye(4))
        assert rel < 0.10

    def test_same_seed_bit_identical(self):
        truth = ar1_kron_truth(3, 2, 0.5, 0.95)
        a = sample_gaussian(truth, 50, 9)
        b = sample_gaussian(truth, 50, 9)
        assert np.array_equal(a.samples, b.samples)

    def test_single_sample_shape(self):
        truth = ar1_kron_truth(3, 2, 0.5, 0.95)
        sset = sample_gaussian(truth, 1, 0)
        assert sset.samples.shape == (1, 6)


class TestStudentTSampler:
    def test_scale_factor_concentrates_at_large_dof(self):
        truth = ar1_kron_truth(2, 2, 0.5, 0.95)
        n = 2000
        gauss = sample_gaussian(truth, n, 77)
        heavy = sample_student_t(truth, 1e6, n, 77)
        # same z-draws, so the per-sample norm ratio is the scale factor
        ratio = np.linalg.norm(heavy.samples, axis=1) / np.linalg.norm(gauss.samples, axis=1)
        assert np.mean((ratio > 0.99) & (ratio < 1.01)) >= 0.99

    def test_deterministic(self):
        truth = ar1_kron_truth(2, 2, 0.5, 0.95)
        a = sample_student_t(truth, 3.0, 30, 5)
        b = sample_student_t(truth, 3.0, 30, 5)
        assert np.array_equal(a.samples, b.samples)

    def test_heavy_tails_present_at_dof_3(self):
        truth = ar1_kron_truth(2, 2, 0.5, 0.95)
        heavy = sample_student_t(truth, 3.0, 4000, 21)
        gauss = sample_gaussian(truth, 4000, 21)
        assert np.abs(heavy.samples).max() > 3 * np.abs(gauss.samples).max()

    def test_bad_dof(self):
        truth = ar1_kron_truth(2, 2, 0.5, 0.95)
        with pytest.raises(ValueError):
            sample_student_t(truth, 0.0, 10, 0)


class TestFrameStream:
    def test_window_covariance_matches_kronecker_truth(self):
        p, T = 3, 4
        frames = ar1_frame_stream(p, 200_000, 0.5, 0.9, seed=11)
        windows = np.stack([frames[s:s + T].reshape(-1) for s in range(0, 199_000, 7)])
        emp = windows.T @ windows / windows.shape[0]
        target = np.kron(ar1_cov(T, 0.5), ar1_cov(p, 0.9))
        assert np.linalg.norm(emp - target) / np.linalg.norm(target) < 0.05

    def test_deterministic(self):
        a = ar1_frame_stream(4, 100, 0.3, 0.9, seed=2)
        b = ar1_frame_stream(4, 100, 0.3, 0.9, seed=2)
        assert np.array_equal(a, b)

    def test_burst_scaling_preserves_mean(self):
        frames = ar1_frame_stream(5, 50_000, 0.2, 0.8, seed=3, dof=3.0)
        assert np.abs(frames.mean(axis=0)).max() < 0.1


class TestInjectAnomalies:
    def test_zero_rate_is_identity(self):
        rng = np.random.default_rng(0)
        base = rng.standard_normal((100, 4))
        series, labels = inject_anomalies(base, 0.0, 5.0, seed=1)
        assert np.array_equal(series, base)
        assert labels.sum() == 0

    def test_zero_magnitude_keeps_data(self):
        rng = np.random.default_rng(1)
        base = rng.standard_normal((500, 4))
        series, labels = inject_anomalies(base, 0.2, 0.0, seed=2)
        assert np.array_equal(series, base)
        assert labels.sum() > 0

    def test_label_fraction_concentrates(self):
        rng = np.random.default_rng(2)
        base = rng.standard_normal((10_000, 3))
        _, labels = inject_anomalies(base, 0.1, 5.0, seed=3)
        assert 0.05 <= labels.mean() <= 0.15

    def test_episodes_are_contiguous_shifts(self):
        rng = np.random.default_rng(3)
        base = rng.standard_normal((2000, 6))
        series, labels = inject_anomalies(base, 0.1, 8.0, seed=4)
        delta = series - base
        assert np.array_equal(np.any(delta != 0, axis=1), labels.astype(bool))

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            inject_anomalies(np.zeros((10, 2)), 1.0, 5.0, seed=0)


class TestSampleCsv:
    def test_roundtrip(self, tmp_path):
        truth = ar1_kron_truth(2, 3, 0.5, 0.95)
        sset = sample_gaussian(truth, 17, 4)
        path = tmp_path / "s.csv"
        write_sample_csv(path, sset)
        back = read_sample_csv(path, sset.dims)
        assert np.array_equal(back.samples, sset.samples)

    def test_dimension_check(self, tmp_path):
        truth = ar1_kron_truth(2, 2, 0.5, 0.95)
        sset = sample_gaussian(truth, 5, 4)
        path = tmp_path / "s.csv"
        write_sample_csv(path, sset)
        with pytest.raises(ValueError):
            read_sample_csv(path, SpaceTimeDims(3, 2))
