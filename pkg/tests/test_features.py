import numpy as np
import pytest

from wisense.errors import SeriesTooShort, SingleAntenna, SpanTooLong
from wisense.features import (
    DB4_HI,
    DB4_LO,
    FeatureKind,
    Spectrogram,
    dwt_features,
    dwt_multilevel,
    phase_difference,
    spectrogram_to_csv,
    spectrogram_to_pgm,
    stack_window,
    stft,
    stft_feature_frames,
    torso_leg_speeds,
)
from wisense.model import ActivityLabel, amplitude_matrix
from wisense.preprocess import fit_pca, pca_denoise, znormalize
from wisense.simulate import (
    ActivityScenario,
    ScatterPath,
    SpeedProfile,
    doppler_of_speed,
    scenario_preset,
    synthesize,
)


class TestStft:
    def test_constant_series_all_energy_at_dc(self):
        # the Hann mainlobe occupies bins 0-1 when window == fft length;
        # everything beyond it must vanish for a constant input
        spec = stft(np.full(1000, 2.0), 1000.0, window_len=128, hop_len=50, fft_len=128)
        dc = spec.magnitudes[:, 0]
        rest = spec.magnitudes[:, 2:]
        assert (rest <= 1e-9 * dc[:, None]).all()
        assert (spec.magnitudes[:, 1] <= 0.5 * dc + 1e-9).all()

    def test_17hz_tone_lands_in_analytic_bin(self):
        t = np.arange(2000) / 1000.0
        x = np.sin(2 * np.pi * 17.0 * t)
        spec = stft(x, 1000.0, window_len=128, hop_len=50, fft_len=256)
        expected_bin = round(17.0 / (1000.0 / 256))
        peaks = spec.magnitudes[:, 1:].argmax(axis=1) + 1
        assert (peaks == expected_bin).all()

    def test_chirp_peak_bin_nondecreasing(self):
        t = np.arange(4000) / 1000.0
        freq = 10.0 + (100.0 - 10.0) * t / t[-1]
        phase = 2 * np.pi * np.cumsum(freq) / 1000.0
        x = np.sin(phase)
        spec = stft(x, 1000.0, window_len=256, hop_len=128, fft_len=512)
        peaks = spec.magnitudes[:, 1:].argmax(axis=1)
        assert (np.diff(peaks) >= 0).all()

    def test_frame_count_formula(self):
        x = np.zeros(2000)
        spec = stft(x, 1000.0, window_len=128, hop_len=50, fft_len=256)
        assert spec.n_frames == (2000 - 128) // 50 + 1 == 38

    def test_bin_count_is_half_fft(self):
        spec = stft(np.zeros(500), 1000.0, window_len=128, hop_len=50, fft_len=256)
        assert spec.n_bins == 128
        assert spec.bin_width == pytest.approx(1000.0 / 256)

    def test_series_too_short(self):
        with pytest.raises(SeriesTooShort):
            stft(np.zeros(100), 1000.0, window_len=128)

    def test_parseval_identity_per_frame(self):
        # tones at safe bins: spectral leakage beyond the Nyquist bin is
        # negligible, so the one-sided sum reproduces the windowed energy
        from wisense.features import hann_window

        rng = np.random.default_rng(0)
        n = 256
        t = np.arange(1024)
        x = np.zeros(1024)
        for k in (3, 20, 60, 100):
            x += rng.uniform(0.5, 2) * np.cos(2 * np.pi * k * t / n + rng.uniform(0, 2 * np.pi))
        window = hann_window(n)
        spec = stft(x, 1000.0, window_len=n, hop_len=64, fft_len=n)
        for f in range(spec.n_frames):
            seg = x[f * 64 : f * 64 + n] * window
            time_energy = float((seg**2).sum())
            mags = spec.magnitudes[f]
            spec_energy = (mags[0] ** 2 + 2 * (mags[1:] ** 2).sum()) / n
            assert spec_energy == pytest.approx(time_energy, rel=1e-6)


class TestStftFeatureFrames:
    def test_static_scene_energy_only_near_dc(self):
        # a static scene's scores are flat: beyond the window mainlobe plus
        # zero-padding interpolation, the band is empty
        rng = np.random.default_rng(1)
        scores = np.full((1000, 5), 1.0) + 1e-12 * rng.standard_normal((1000, 5))
        seq = stft_feature_frames(scores)
        assert seq.kind is FeatureKind.STFT_STACK25
        motion_band = seq.vectors[:, 5:]
        assert (motion_band <= 3e-2 * seq.vectors[:, [0]] + 1e-12).all()
        assert float(motion_band.sum()) <= 0.05 * float(seq.vectors.sum())

    def test_run_high_bins_beat_walk_high_bins(self):
        def high_bin_energy(label):
            stream = synthesize(scenario_preset(label, seed=6), seed=6)
            amp = amplitude_matrix(stream)
            model = fit_pca(amp)
            scores = pca_denoise(amp, model)
            seq = stft_feature_frames(scores)
            return float((seq.vectors[:, 13:25] ** 2).sum())

        assert high_bin_energy(ActivityLabel.RUN) > high_bin_energy(ActivityLabel.WALK)

    def test_frame_count_two_seconds(self):
        seq = stft_feature_frames(np.random.default_rng(2).standard_normal((2000, 5)))
        assert len(seq) == 38
        assert seq.vectors.shape[1] == 25

    def test_scalar_invariance_after_znormalize(self):
        rng = np.random.default_rng(3)
        mat = rng.standard_normal((1500, 4)) * np.arange(1, 5)
        a = stft_feature_frames(znormalize(mat))
        b = stft_feature_frames(znormalize(7.5 * mat))
        assert np.max(np.abs(a.vectors - b.vectors)) < 1e-9


class TestStackWindow:
    def make_seq(self, frames=50):
        vecs = np.arange(frames * 25, dtype=float).reshape(frames, 25)
        from wisense.features import FeatureSequence

        return FeatureSequence(vectors=vecs, frame_period=0.05, kind=FeatureKind.STFT_STACK25)

    def test_single_frame_identity(self):
        seq = self.make_seq()
        assert np.array_equal(stack_window(seq, 0.05), seq.vectors[0])

    def test_two_seconds_gives_1000(self):
        seq = self.make_seq()
        vec = stack_window(seq, 2.0)
        assert vec.shape == (1000,)

    def test_stack_unstack_inverse(self):
        seq = self.make_seq()
        vec = stack_window(seq, 2.0)
        assert np.array_equal(vec.reshape(40, 25), seq.vectors[:40])

    def test_span_too_long(self):
        seq = self.make_seq(frames=10)
        with pytest.raises(SpanTooLong):
            stack_window(seq, 2.0)


class TestDwt:
    def test_filters_orthonormal(self):
        assert DB4_LO @ DB4_LO == pytest.approx(1.0, abs=1e-12)
        assert DB4_HI @ DB4_HI == pytest.approx(1.0, abs=1e-12)
        assert DB4_LO @ DB4_HI == pytest.approx(0.0, abs=1e-12)
        for shift in (2, 4, 6):
            assert DB4_LO @ np.roll(DB4_LO, shift) == pytest.approx(0.0, abs=1e-12)
        assert DB4_LO.sum() == pytest.approx(np.sqrt(2.0), abs=1e-10)

    def test_energy_conservation(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(4096)
        details, approx = dwt_multilevel(x, levels=12)
        assert len(details) == 12
        total = sum(float((d**2).sum()) for d in details) + float((approx**2).sum())
        assert total == pytest.approx(float((x**2).sum()), rel=1e-8)

    def test_tone_concentrates_in_dyadic_band(self):
        # level l spans (fs/2^(l+1), fs/2^l]; at fs=1000, 100 Hz sits in level 3
        fs = 1000.0
        t = np.arange(4096) / fs
        for freq, expected_level in [(300.0, 1), (100.0, 3), (40.0, 4), (10.0, 6)]:
            x = np.sin(2 * np.pi * freq * t)
            details, _ = dwt_multilevel(x, levels=12)
            energies = [float((d**2).sum()) for d in details]
            assert int(np.argmax(energies)) + 1 == expected_level, f"{freq} Hz"

    def test_series_too_short(self):
        with pytest.raises(SeriesTooShort):
            dwt_multilevel(np.zeros(1000), levels=12)


class TestDwtFeatures:
    def test_zero_input_all_zero(self):
        seq = dwt_features(np.zeros((1000, 5)))
        assert seq.kind is FeatureKind.DWT27
        assert seq.vectors.shape == (5, 27)
        assert np.array_equal(seq.vectors, np.zeros((5, 27)))

    def test_dimension_is_27(self):
        rng = np.random.default_rng(5)
        seq = dwt_features(rng.standard_normal((600, 5)))
        assert seq.vectors.shape == (3, 27)

    def test_deltas_are_consecutive_differences(self):
        rng = np.random.default_rng(6)
        seq = dwt_features(rng.standard_normal((1000, 3)))
        energies = seq.vectors[:, :12]
        deltas = seq.vectors[:, 12:24]
        assert np.allclose(deltas[0], 0.0)
        assert np.allclose(deltas[1:], np.diff(energies, axis=0), atol=1e-12)

    def test_walk_torso_speed_in_range(self):
        stream = synthesize(scenario_preset(ActivityLabel.WALK, seed=1), seed=2)
        amp = amplitude_matrix(stream)
        model = fit_pca(amp)
        scores = pca_denoise(amp, model)
        seq = dwt_features(scores, 1000.0, center_frequency=stream.center_frequency)
        # middle blocks cover the sustained stride; preset torso speed 1.2 m/s
        torso = seq.vectors[4:10, 24]
        assert 0.9 <= float(np.median(torso)) <= 1.5

    def test_total_energy_matches_level_sum_plus_approx(self):
        rng = np.random.default_rng(7)
        scores = rng.standard_normal((400, 2))
        seq = dwt_features(scores)
        # feature 26 is the total band energy; never below the detail sum
        assert (seq.vectors[:, 26] >= seq.vectors[:, :12].sum(axis=1) - 1e-12).all()


class TestTorsoLegSpeeds:
    def make_spec(self, tones):
        """tones: list of (bin_index, amplitude); one-frame spectrogram."""
        mags = np.zeros((7, 128))
        for b, a in tones:
            mags[:, b] = a
        return Spectrogram(magnitudes=mags, frame_period=0.05, bin_width=1000.0 / 256, window_len=128)

    def test_single_tone_both_speeds_match(self):
        f_d = doppler_of_speed(0.5, 5e9)
        bin_idx = round(f_d / (1000.0 / 256))
        spec = self.make_spec([(bin_idx, 1.0)])
        est = torso_leg_speeds(spec, 5e9)
        tol = (1000.0 / 256) * 299792458.0 / (2 * 5e9)  # one bin in speed units
        assert abs(est.torso - 0.5) <= tol
        assert abs(est.leg - 0.5) <= tol
        assert not est.silent

    def test_silent_input_flagged(self):
        spec = self.make_spec([])
        est = torso_leg_speeds(spec, 5e9)
        assert est == (0.0, 0.0, True)

    def test_two_tone_energy_split(self):
        # torso tone holds 80% of energy at bin 5, limbs 20% at bin 20
        spec = self.make_spec([(5, np.sqrt(0.8)), (20, np.sqrt(0.2))])
        est = torso_leg_speeds(spec, 5e9)
        to_speed = (1000.0 / 256) * 299792458.0 / (2 * 5e9)
        assert abs(est.torso - 5 * to_speed) <= to_speed
        assert abs(est.leg - 20 * to_speed) <= to_speed


class TestPhaseDifference:
    def test_identical_antennas_zero(self):
        gains = np.ones((4, 2, 1, 3), dtype=complex) * (1 + 1j)
        from wisense.model import CsiStream

        stream = CsiStream.from_tensor(np.arange(4) / 1e3, gains, sample_rate=1000.0, center_frequency=5e9)
        diff = phase_difference(stream)
        assert diff.shape == (4, 3)
        assert np.max(np.abs(diff)) < 1e-12

    def test_recovers_steering_offset(self):
        delta = 0.8
        scenario = ActivityScenario(
            label=ActivityLabel.NO_ACTIVITY,
            duration=0.05,
            paths=(ScatterPath(base_delay=30e-9, gain=1.0, aoa_phase=delta),),
        )
        stream = synthesize(scenario, sample_rate=1000.0, dims=(3, 1, 8), seed=0)
        diff = phase_difference(stream)
        assert np.max(np.abs(diff - delta)) < 1e-9

    def test_common_cfo_cancels(self):
        base = ActivityScenario(
            label=ActivityLabel.NO_ACTIVITY,
            duration=0.2,
            paths=(ScatterPath(base_delay=30e-9, gain=1.0, aoa_phase=1.1),),
        )
        with_cfo = ActivityScenario(
            label=base.label, duration=base.duration, paths=base.paths, cfo_hz=420.0, sfo_slope=0.015
        )
        a = phase_difference(synthesize(base, sample_rate=1000.0, dims=(2, 1, 4), seed=1))
        b = phase_difference(synthesize(with_cfo, sample_rate=1000.0, dims=(2, 1, 4), seed=1))
        assert np.max(np.abs(a - b)) < 1e-9

    def test_single_antenna_rejected(self):
        scenario = ActivityScenario(
            label=ActivityLabel.NO_ACTIVITY,
            duration=0.01,
            paths=(ScatterPath(base_delay=30e-9, gain=1.0),),
        )
        stream = synthesize(scenario, sample_rate=1000.0, dims=(1, 1, 4), seed=0)
        with pytest.raises(SingleAntenna):
            phase_difference(stream)


class TestExports:
    def test_pgm_header_and_size(self):
        rng = np.random.default_rng(8)
        spec = stft(rng.standard_normal(800), 1000.0)
        data = spectrogram_to_pgm(spec)
        assert data.startswith(b"P5\n")
        header, rest = data.split(b"255\n", 1)
        dims = header.split(b"\n")[1].split()
        assert int(dims[0]) == spec.n_frames and int(dims[1]) == spec.n_bins
        assert len(rest) == spec.n_frames * spec.n_bins

    def test_csv_round_shape(self):
        rng = np.random.default_rng(9)
        spec = stft(rng.standard_normal(600), 1000.0)
        text = spectrogram_to_csv(spec)
        lines = [l for l in text.splitlines() if l and not l.startswith("#")]
        assert len(lines) == spec.n_frames
        assert len(lines[0].split(",")) == spec.n_bins
