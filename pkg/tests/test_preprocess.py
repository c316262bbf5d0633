import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wisense.errors import (
    DegenerateInput,
    IndexOutOfRange,
    InvalidCutoff,
    TooFewRows,
    TooFewSubcarriers,
)
from wisense.features import stft
from wisense.model import ActivityLabel, amplitude_matrix
from wisense.preprocess import (
    PcaModel,
    fit_pca,
    lowpass,
    pca_denoise,
    sanitize_phase,
    znormalize,
)
from wisense.simulate import ActivityScenario, ScatterPath, SpeedProfile, synthesize


class TestSanitizePhase:
    def test_pure_linear_trend_goes_to_zero(self):
        k = np.arange(30)
        out = sanitize_phase(3.0 * k + 7.0)
        assert np.max(np.abs(out)) < 1e-9

    def test_constant_goes_to_zero(self):
        out = sanitize_phase(np.full(16, 2.5))
        assert np.max(np.abs(out)) < 1e-12

    def test_sine_plus_trend_matches_formula_oracle(self):
        k = np.arange(30, dtype=float)
        phi = np.sin(k) + 5.0 * k
        # direct evaluation of the defining formula
        a = (phi[-1] - phi[0]) / (k[-1] - k[0])
        detrended = phi - a * k
        expected = detrended - detrended.mean()
        assert np.allclose(sanitize_phase(phi), expected, atol=1e-12)

    def test_endpoints_equal(self):
        rng = np.random.default_rng(0)
        phi = rng.uniform(-0.5, 0.5, size=24)  # small values: unwrap is a no-op
        out = sanitize_phase(phi)
        assert out[0] == pytest.approx(out[-1], abs=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        phi = rng.uniform(-0.5, 0.5, size=30)
        once = sanitize_phase(phi)
        twice = sanitize_phase(once)
        assert np.max(np.abs(twice - once)) < 1e-9

    # Slopes are drawn so that per-step jumps stay clear of the +-pi unwrap
    # boundary; a trend whose steps straddle pi is not recoverable from
    # wrapped phase at all (it aliases), see the explicit case below.
    @given(st.floats(-2.0, 2.0), st.floats(-20, 20), st.integers(0, 2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_invariant_to_linear_addition(self, slope, offset, seed):
        rng = np.random.default_rng(seed)
        phi = rng.uniform(-0.5, 0.5, size=20)
        k = np.arange(20.0)
        base = sanitize_phase(phi)
        shifted = sanitize_phase(phi + slope * k + offset)
        assert np.max(np.abs(shifted - base)) < 1e-8 * max(1.0, abs(slope) * 20 + abs(offset))

    def test_steep_trend_aliases_to_equivalent_residual(self):
        # slope 5 steps always exceed +pi, so unwrap subtracts one full turn
        # per step: the trend is seen as slope 5 - 2*pi and still cancels
        rng = np.random.default_rng(21)
        phi = rng.uniform(-0.5, 0.5, size=20)
        k = np.arange(20.0)
        base = sanitize_phase(phi)
        shifted = sanitize_phase(phi + 5.0 * k + 3.0)
        assert np.max(np.abs(shifted - base)) < 1e-8

    def test_unwrap_handles_wrapped_input(self):
        k = np.arange(30, dtype=float)
        true_phase = 0.9 * k + 0.3  # steep ramp wraps several times
        wrapped = np.angle(np.exp(1j * true_phase))
        out = sanitize_phase(wrapped)
        assert np.max(np.abs(out)) < 1e-9

    def test_matrix_input_sanitizes_each_row(self):
        rng = np.random.default_rng(2)
        mat = rng.uniform(-0.5, 0.5, size=(5, 12))
        out = sanitize_phase(mat)
        for row_in, row_out in zip(mat, out):
            assert np.allclose(row_out, sanitize_phase(row_in))

    def test_too_few_subcarriers(self):
        with pytest.raises(TooFewSubcarriers):
            sanitize_phase(np.array([1.0]))

    def test_removes_synthetic_sfo_cfo(self):
        scenario = ActivityScenario(
            label=ActivityLabel.NO_ACTIVITY,
            duration=0.2,
            paths=(ScatterPath(base_delay=20e-9, gain=1.0),),
            cfo_hz=450.0,
            sfo_slope=0.02,
        )
        stream = synthesize(scenario, sample_rate=1000.0, dims=(1, 1, 16), seed=0)
        phases = np.angle(stream.gains_tensor[:, 0, 0, :])
        sanitized = sanitize_phase(phases)
        # the scene is static: after sanitization nothing varies frame to frame
        assert np.max(np.std(sanitized, axis=0)) < 1e-9


class TestLowpass:
    def test_constant_unchanged(self):
        out = lowpass(np.full(500, 3.3), 100.0, 1000.0)
        assert np.max(np.abs(out - 3.3)) < 1e-6

    def test_passband_tone_preserved(self):
        t = np.arange(2000) / 1000.0
        x = np.sin(2 * np.pi * 5.0 * t)
        y = lowpass(x, 100.0, 1000.0)
        mid = slice(500, 1500)
        # analytic 4th-order response at 5/100: |H|^2 = 1/(1+(f/fc)^8), applied twice
        expected_gain = 1.0 / (1.0 + (5.0 / 100.0) ** 8)
        ratio = np.max(np.abs(y[mid])) / np.max(np.abs(x[mid]))
        assert ratio >= 0.99
        assert ratio == pytest.approx(expected_gain, abs=5e-3)

    def test_stopband_tone_crushed(self):
        t = np.arange(2000) / 1000.0
        x = np.sin(2 * np.pi * 400.0 * t)
        y = lowpass(x, 100.0, 1000.0)
        mid = slice(500, 1500)
        assert np.max(np.abs(y[mid])) <= 0.01

    def test_linearity(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(800)
        y = rng.standard_normal(800)
        a, b = 2.5, -1.25
        lhs = lowpass(a * x + b * y, 80.0, 1000.0)
        rhs = a * lowpass(x, 80.0, 1000.0) + b * lowpass(y, 80.0, 1000.0)
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_invalid_cutoff(self):
        with pytest.raises(InvalidCutoff):
            lowpass(np.zeros(100), 600.0, 1000.0)
        with pytest.raises(InvalidCutoff):
            lowpass(np.zeros(100), 0.0, 1000.0)

    def test_applies_along_axis0(self):
        rng = np.random.default_rng(6)
        mat = rng.standard_normal((500, 3))
        out = lowpass(mat, 50.0, 1000.0)
        for col in range(3):
            assert np.allclose(out[:, col], lowpass(mat[:, col], 50.0, 1000.0))


class TestPca:
    def test_rank_one_all_variance_in_first(self):
        rng = np.random.default_rng(7)
        direction = rng.standard_normal(12)
        scores = rng.standard_normal(200)
        mat = np.outer(scores, direction)
        model = fit_pca(mat)
        total = model.explained_variance.sum()
        assert model.explained_variance[0] >= (1 - 1e-9) * total

    def test_2d_gaussian_matches_analytic_eigenvector(self):
        rng = np.random.default_rng(8)
        n = 20000
        # closed-form 2x2: covariance [[2, 1.2], [1.2, 1]] has eigenvector
        cov = np.array([[2.0, 1.2], [1.2, 1.0]])
        mat = rng.multivariate_normal([0, 0], cov, size=n)
        eigvals, eigvecs = np.linalg.eigh(cov)
        analytic = eigvecs[:, np.argmax(eigvals)]
        model = fit_pca(mat)
        fitted = model.components[0]
        angle = np.degrees(np.arccos(min(1.0, abs(float(fitted @ analytic)))))
        assert angle < 1.0

    def test_orthogonal_design_recovered_up_to_sign(self):
        rng = np.random.default_rng(9)
        axes = np.linalg.qr(rng.standard_normal((6, 6)))[0]
        weights = np.array([5.0, 3.0, 1.0])  # three decreasing-variance directions
        scores = rng.standard_normal((4000, 3)) * weights
        mat = scores @ axes[:, :3].T
        model = fit_pca(mat)
        for i in range(3):
            assert abs(float(model.components[i] @ axes[:, i])) > 0.99

    def test_reconstruction_identity(self):
        rng = np.random.default_rng(10)
        mat = rng.standard_normal((50, 8))
        model = fit_pca(mat)
        centered = mat - model.mean
        rebuilt = (centered @ model.components.T) @ model.components
        assert np.max(np.abs(rebuilt - centered)) < 1e-8

    def test_variances_sum_to_total(self):
        rng = np.random.default_rng(11)
        mat = rng.standard_normal((100, 7)) * np.arange(1, 8)
        model = fit_pca(mat)
        centered = mat - mat.mean(axis=0)
        total = (centered**2).sum() / (len(mat) - 1)
        assert model.explained_variance.sum() == pytest.approx(total, rel=1e-10)

    def test_rank_deficient_gram_route(self):
        rng = np.random.default_rng(12)
        mat = rng.standard_normal((10, 40))  # fewer rows than columns
        model = fit_pca(mat)
        # components orthonormal
        gram = model.components @ model.components.T
        assert np.max(np.abs(gram - np.eye(len(gram)))) < 1e-8
        # at most rank(centered) = 9 nonzero variances
        assert (model.explained_variance > 1e-12).sum() <= 9
        centered = mat - model.mean
        rebuilt = (centered @ model.components.T) @ model.components
        assert np.max(np.abs(rebuilt - centered)) < 1e-8

    def test_degenerate_input(self):
        with pytest.raises(DegenerateInput):
            fit_pca(np.full((20, 4), 3.0))

    def test_json_round_trip(self):
        rng = np.random.default_rng(13)
        model = fit_pca(rng.standard_normal((30, 5)))
        back = PcaModel.from_json(model.to_json())
        assert np.array_equal(back.mean, model.mean)
        assert np.array_equal(back.components, model.components)
        assert np.array_equal(back.explained_variance, model.explained_variance)


class TestPcaDenoise:
    def test_keep_zero_reconstructs_rank_one(self):
        rng = np.random.default_rng(14)
        direction = rng.standard_normal(9)
        direction /= np.linalg.norm(direction)
        scores = rng.standard_normal(300)
        mat = np.outer(scores, direction)
        model = fit_pca(mat)
        kept = pca_denoise(mat, model, keep=[0])
        rebuilt = model.mean + kept @ model.components[[0]]
        assert np.max(np.abs(rebuilt - mat)) < 1e-9

    def test_keep_all_preserves_total_variance(self):
        rng = np.random.default_rng(15)
        mat = rng.standard_normal((120, 6))
        model = fit_pca(mat)
        scores = pca_denoise(mat, model, keep=range(6))
        centered = mat - mat.mean(axis=0)
        assert (scores**2).sum() == pytest.approx((centered**2).sum(), rel=1e-10)

    def test_default_keep_retains_motion_tone(self):
        # static scene + one moving reflector: the Doppler line must survive
        # the removal of the first component
        scenario = ActivityScenario(
            label=ActivityLabel.WALK,
            duration=2.0,
            paths=(
                ScatterPath(base_delay=20e-9, gain=1.0),
                ScatterPath(base_delay=45e-9, gain=0.35),
                ScatterPath(base_delay=55e-9, gain=0.4, motion=SpeedProfile.constant(1.0)),
            ),
            noise_std=0.02,
        )
        stream = synthesize(scenario, sample_rate=1000.0, dims=(3, 1, 30), seed=3)
        amp = amplitude_matrix(stream)
        model = fit_pca(amp)
        scores = pca_denoise(amp, model)  # default: drop first, keep next five
        energy = None
        for col in range(scores.shape[1]):
            spec = stft(scores[:, col], 1000.0, window_len=512, hop_len=128, fft_len=1024)
            e = spec.magnitudes.mean(axis=0)
            energy = e if energy is None else energy + e
        f_expected = 2 * 1.0 * 5e9 / 299792458.0
        peak_bin = int(np.argmax(energy[1:])) + 1
        bin_width = 1000.0 / 1024
        assert abs(peak_bin * bin_width - f_expected) <= 2 * bin_width

    def test_index_out_of_range(self):
        rng = np.random.default_rng(16)
        mat = rng.standard_normal((40, 4))
        model = fit_pca(mat)
        with pytest.raises(IndexOutOfRange):
            pca_denoise(mat, model, keep=[9])


class TestZnormalize:
    def test_already_normal_unchanged(self):
        rng = np.random.default_rng(17)
        col = rng.standard_normal(5000)
        col = (col - col.mean()) / col.std()
        out = znormalize(col[:, None])
        assert np.max(np.abs(out[:, 0] - col)) < 1e-9

    def test_two_point_column(self):
        out = znormalize(np.array([[1.0], [3.0]]))
        assert np.allclose(out[:, 0], [-1.0, 1.0])

    def test_moments_recomputed(self):
        rng = np.random.default_rng(18)
        mat = rng.uniform(-5, 5, size=(400, 7)) * np.arange(1, 8)
        out = znormalize(mat)
        assert np.max(np.abs(out.mean(axis=0))) < 1e-9
        assert np.max(np.abs(out.std(axis=0) - 1.0)) < 1e-9

    def test_constant_column_maps_to_zero(self):
        mat = np.column_stack([np.full(10, 4.2), np.arange(10.0)])
        out = znormalize(mat)
        assert np.allclose(out[:, 0], 0.0)

    def test_too_few_rows(self):
        with pytest.raises(TooFewRows):
            znormalize(np.ones((1, 3)))
