import numpy as np
import pytest

from wisense.errors import AliasedDoppler, DataError
from wisense.features import stft
from wisense.model import ActivityLabel, amplitude_matrix
from wisense.simulate import (
    SPEED_OF_LIGHT,
    ActivityScenario,
    ScatterPath,
    SpeedProfile,
    doppler_of_speed,
    dump_scenario,
    load_scenario,
    scenario_preset,
    synthesize,
)


def tone_scenario(speed, gain=0.5, noise=0.0, label=ActivityLabel.WALK, duration=2.0):
    return ActivityScenario(
        label=label,
        duration=duration,
        paths=(
            ScatterPath(base_delay=20e-9, gain=1.0),
            ScatterPath(base_delay=50e-9, gain=gain, motion=SpeedProfile.constant(speed)),
        ),
        noise_std=noise,
    )


def spectrogram_peak_hz(stream, fft_len=1024):
    amp = amplitude_matrix(stream)[:, 0]
    spec = stft(amp - amp.mean(), stream.sample_rate, window_len=512, hop_len=64, fft_len=fft_len)
    mean_mag = spec.magnitudes.mean(axis=0)
    return (np.argmax(mean_mag[1:]) + 1) * spec.bin_width, spec.bin_width


class TestDopplerOfSpeed:
    def test_zero_speed(self):
        assert doppler_of_speed(0.0, 5e9) == 0.0
        assert doppler_of_speed(0.0, 2.4e9) == 0.0

    def test_half_meter_per_second_at_5ghz(self):
        # 2 * 0.5 * 5e9 / c, the motion band's canonical anchor (~17 Hz)
        assert doppler_of_speed(0.5, 5e9) == pytest.approx(2 * 0.5 * 5e9 / SPEED_OF_LIGHT)
        assert doppler_of_speed(0.5, 5e9) == pytest.approx(16.678, abs=0.01)

    def test_human_speed_range(self):
        lo = doppler_of_speed(0.25, 5e9)
        hi = doppler_of_speed(4.0, 5e9)
        assert lo == pytest.approx(8.339, abs=0.01)
        assert hi == pytest.approx(133.43, abs=0.01)

    def test_negative_speed_rejected(self):
        with pytest.raises(ValueError):
            doppler_of_speed(-1.0, 5e9)


class TestSynthesize:
    def test_static_scene_constant_amplitude(self):
        scenario = ActivityScenario(
            label=ActivityLabel.NO_ACTIVITY,
            duration=1.0,
            paths=(
                ScatterPath(base_delay=20e-9, gain=1.0),
                ScatterPath(base_delay=45e-9, gain=0.4),
            ),
            cfo_hz=300.0,  # phase-only impairments must not touch amplitudes
            sfo_slope=0.01,
        )
        stream = synthesize(scenario, sample_rate=500.0, dims=(2, 1, 8), seed=0)
        amp = amplitude_matrix(stream)
        assert np.max(np.abs(amp - amp[0])) < 1e-12

    def test_constant_speed_tone_at_doppler(self):
        stream = synthesize(tone_scenario(0.5), sample_rate=1000.0, dims=(1, 1, 1), seed=1)
        peak, bin_width = spectrogram_peak_hz(stream)
        assert abs(peak - doppler_of_speed(0.5, 5e9)) <= bin_width

    @pytest.mark.parametrize("speed", [0.25, 1.0, 2.0, 4.0])
    def test_speed_sweep_peaks(self, speed):
        stream = synthesize(tone_scenario(speed), sample_rate=1000.0, dims=(1, 1, 1), seed=2)
        peak, bin_width = spectrogram_peak_hz(stream)
        assert abs(peak - doppler_of_speed(speed, 5e9)) <= bin_width

    def test_aliased_doppler_rejected(self):
        with pytest.raises(AliasedDoppler):
            synthesize(tone_scenario(4.0), sample_rate=100.0, dims=(1, 1, 1))

    def test_cfo_eighty_khz_gives_eight_pi_over_fifty_us(self):
        scenario = ActivityScenario(
            label=ActivityLabel.NO_ACTIVITY,
            duration=60e-6,
            paths=(ScatterPath(base_delay=20e-9, gain=1.0),),
            cfo_hz=80e3,
        )
        stream = synthesize(scenario, sample_rate=1e6, dims=(1, 1, 4), seed=0)
        phases = np.unwrap(np.angle(stream.gains_tensor[:, 0, 0, 0]))
        t = stream.timestamps()
        k = int(np.argmin(np.abs(t - 50e-6)))
        assert t[k] == pytest.approx(50e-6, abs=1e-12)
        assert phases[k] - phases[0] == pytest.approx(8 * np.pi, abs=1e-6)
        amp = amplitude_matrix(stream)
        assert np.max(np.abs(amp - amp[0])) < 1e-12

    def test_determinism(self):
        scenario = tone_scenario(1.0, noise=0.05)
        a = synthesize(scenario, sample_rate=1000.0, dims=(2, 1, 4), seed=9)
        b = synthesize(scenario, sample_rate=1000.0, dims=(2, 1, 4), seed=9)
        assert np.array_equal(a.gains_tensor, b.gains_tensor)

    def test_receding_phase_decreases(self):
        # positive speed lengthens the path: phase must fall over time
        stream = synthesize(tone_scenario(0.5, gain=1.0), sample_rate=1000.0, dims=(1, 1, 1), seed=0)
        series = stream.gains_tensor[:, 0, 0, 0]
        moving = series - series.mean()  # remove the static path
        inst = np.unwrap(np.angle(moving))
        assert inst[-1] < inst[0]


class TestPresets:
    def test_run_band_above_walk_band(self):
        def centroid(label):
            scenario = scenario_preset(label, seed=3)
            stream = synthesize(scenario, seed=3)
            amp = amplitude_matrix(stream)[:, 0]
            spec = stft(amp - amp.mean(), 1000.0)
            mags = spec.magnitudes.mean(axis=0)[1:]
            freqs = (np.arange(len(mags)) + 1) * spec.bin_width
            return float((freqs * mags).sum() / mags.sum())

        assert centroid(ActivityLabel.RUN) > centroid(ActivityLabel.WALK)

    def test_fall_burst_shorter_than_1p5_s(self):
        scenario = scenario_preset(ActivityLabel.FALL, seed=4)
        moving = [p for p in scenario.paths if p.motion is not None]
        assert moving, "fall preset must move"
        t = np.linspace(0, scenario.duration, 3001)
        active = np.zeros_like(t, dtype=bool)
        for p in moving:
            active |= np.abs(p.motion.at(t)) > 0.05
        assert active.sum() * (t[1] - t[0]) < 1.5

    def test_same_label_seed_identical(self):
        a = synthesize(scenario_preset(ActivityLabel.SIT_DOWN, seed=5), seed=11)
        b = synthesize(scenario_preset(ActivityLabel.SIT_DOWN, seed=5), seed=11)
        assert np.array_equal(a.gains_tensor, b.gains_tensor)

    def test_geometry_seed_changes_scene_not_kinematics(self):
        a = scenario_preset(ActivityLabel.WALK, seed=5, geometry_seed=1)
        b = scenario_preset(ActivityLabel.WALK, seed=5, geometry_seed=2)
        # the torso plateau speed is a kinematic (subject) property
        assert max(a.paths[2].motion.speeds) == max(b.paths[2].motion.speeds)
        assert [p.gain for p in a.paths] == [p.gain for p in b.paths]
        # the scene itself (steering phases, delays) must differ
        assert a.paths[0].aoa_phase != b.paths[0].aoa_phase
        assert a.paths[0].base_delay != b.paths[0].base_delay

    @pytest.mark.parametrize("label", list(ActivityLabel))
    def test_every_label_has_preset(self, label):
        scenario = scenario_preset(label, seed=0)
        assert scenario.label is label
        assert scenario.duration > 0


class TestScenarioFiles:
    def test_round_trip(self):
        scenario = scenario_preset(ActivityLabel.WALK, seed=2)
        back = load_scenario(dump_scenario(scenario))
        assert back.label is scenario.label
        assert back.duration == scenario.duration
        assert len(back.paths) == len(scenario.paths)
        for p, q in zip(scenario.paths, back.paths):
            assert q.gain == pytest.approx(p.gain)
            assert q.base_delay == pytest.approx(p.base_delay)
            if p.motion is None:
                assert q.motion is None
            else:
                t = np.linspace(0, scenario.duration, 101)
                assert np.allclose(q.motion.at(t), p.motion.at(t))

    def test_minimal_text(self):
        text = """
        label = Walk
        duration = 1.0
        noise_std = 0.01
        path gain=1.0 delay_ns=20
        path gain=0.5 delay_ns=50 speed=0.7 aoa=0.3
        """
        scenario = load_scenario(text)
        assert scenario.label is ActivityLabel.WALK
        assert scenario.paths[1].motion.at(np.array([0.5]))[0] == pytest.approx(0.7)

    def test_unknown_key_rejected(self):
        with pytest.raises(DataError):
            load_scenario("label = Walk\nduration = 1.0\nwibble = 3\npath gain=1 delay_ns=20\n")

    def test_missing_paths_rejected(self):
        with pytest.raises(DataError):
            load_scenario("label = Walk\nduration = 1.0\n")


class TestSpeedProfile:
    def test_speed_limit_enforced(self):
        with pytest.raises(ValueError):
            SpeedProfile.constant(11.0)

    def test_profile_interpolates(self):
        prof = SpeedProfile(times=(0.0, 1.0, 2.0), speeds=(0.0, 2.0, 0.0))
        assert prof.at(np.array([0.5]))[0] == pytest.approx(1.0)
        assert prof.at(np.array([5.0]))[0] == pytest.approx(0.0)  # edge hold
