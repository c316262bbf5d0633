"""Multipath CSI synthesis for static scenes and moving human scatterers.

The channel for subcarrier i at time t is a sum over propagation paths of
``gain_k * exp(-j*2*pi*f_i*tau_k(t))`` where ``f_i`` is the subcarrier's
absolute frequency and ``tau_k`` its delay. A body-reflection path's length
changes at twice the scatterer speed (round trip), which is what puts a
0.5 m/s gesture at ~17 Hz Doppler in a 5 GHz band. Carrier and sampling
frequency offsets are injected as pure phase terms so amplitudes stay clean.

Everything is deterministic given the explicit seed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AliasedDoppler, DataError
from .model import ActivityLabel, CsiStream, DEFAULT_SUBCARRIER_SPACING_HZ

SPEED_OF_LIGHT = 299_792_458.0  # m/s

MAX_SCATTERER_SPEED = 10.0  # m/s, sanity bound for human motion


def doppler_of_speed(v: float, f: float) -> float:
    """Doppler shift of a body reflection moving at speed v in a carrier at f.

    The reflected path length changes at 2v (out and back), so the shift is
    2*v*f/c.
    """
    if v < 0:
        raise ValueError(f"speed must be non-negative, got {v}")
    return 2.0 * v * f / SPEED_OF_LIGHT


@dataclass(frozen=True)
class SpeedProfile:
    """Piecewise-linear speed profile v(t); edges hold their end values.

    Positive speed lengthens the path (scatterer receding), negative speed
    shortens it.
    """

    times: tuple[float, ...]
    speeds: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.times) != len(self.speeds) or not self.times:
            raise ValueError("profile needs matching, nonempty times/speeds")
        if any(t1 <= t0 for t0, t1 in zip(self.times, self.times[1:])):
            raise ValueError("profile times must be strictly increasing")
        if max(abs(v) for v in self.speeds) > MAX_SCATTERER_SPEED:
            raise ValueError(f"|v| must stay within {MAX_SCATTERER_SPEED} m/s")

    @classmethod
    def constant(cls, v: float) -> "SpeedProfile":
        return cls(times=(0.0,), speeds=(float(v),))

    @classmethod
    def hump(cls, start: float, length: float, peak: float) -> "SpeedProfile":
        """Smooth rise-and-fall burst, zero outside [start, start+length]."""
        ts = np.linspace(start, start + length, 33)
        vs = peak * np.sin(np.pi * (ts - start) / length) ** 2
        pad_t = (start - 1e-3,) if start > 1e-3 else ()
        pad_v = (0.0,) * len(pad_t)
        return cls(times=pad_t + tuple(ts) + (start + length + 1e-3,), speeds=pad_v + tuple(vs) + (0.0,))

    @classmethod
    def oscillation(
        cls, start: float, stop: float, vmax: float, freq_hz: float, phase: float = 0.0
    ) -> "SpeedProfile":
        """Signed sinusoidal speed (limb-like swing) between start and stop."""
        n = max(9, int(round((stop - start) * freq_hz * 24)))
        ts = np.linspace(start, stop, n)
        vs = vmax * np.sin(2 * np.pi * freq_hz * (ts - start) + phase)
        return cls(
            times=(start - 1e-3,) + tuple(ts) + (stop + 1e-3,),
            speeds=(0.0,) + tuple(vs) + (0.0,),
        )

    @classmethod
    def sustained(cls, start: float, stop: float, v: float, ramp: float = 0.15) -> "SpeedProfile":
        """Ramp up to v, hold until stop, ramp down."""
        return cls(
            times=(start, start + ramp, stop - ramp, stop),
            speeds=(0.0, float(v), float(v), 0.0),
        )

    def at(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.times, self.speeds)

    @property
    def max_abs_speed(self) -> float:
        return max(abs(v) for v in self.speeds)


@dataclass(frozen=True)
class ScatterPath:
    """One propagation path: static unless it carries a motion profile.

    ``aoa_phase`` is the geometric phase increment per rx antenna index
    (steering across the array); ``aod_phase`` likewise per tx antenna.
    """

    base_delay: float
    gain: float
    motion: SpeedProfile | None = None
    aoa_phase: float = 0.0
    aod_phase: float = 0.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.gain) or self.gain < 0:
            raise ValueError(f"path gain must be finite and >= 0, got {self.gain}")
        if self.base_delay < 0:
            raise ValueError(f"path delay must be >= 0, got {self.base_delay}")

    @property
    def max_doppler_speed(self) -> float:
        return self.motion.max_abs_speed if self.motion is not None else 0.0


@dataclass(frozen=True)
class ActivityScenario:
    """A labeled synthetic scene: paths plus noise and oscillator impairments.

    ``cfo_hz`` adds phase 2*pi*cfo*t to every entry; ``sfo_slope`` (radians
    per subcarrier per frame) adds slope*subcarrier*frame_index. Bursts are
    Bernoulli-arrival impulse noise for exercising denoisers.
    """

    label: ActivityLabel
    duration: float
    paths: tuple[ScatterPath, ...]
    noise_std: float = 0.0
    cfo_hz: float = 0.0
    sfo_slope: float = 0.0
    burst_rate_hz: float = 0.0
    burst_std: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "paths", tuple(self.paths))
        if self.duration <= 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if self.noise_std < 0 or self.burst_std < 0 or self.burst_rate_hz < 0:
            raise ValueError("noise parameters must be >= 0")
        if not self.paths:
            raise ValueError("scenario needs at least one path")

    def max_doppler(self, center_frequency: float, subcarrier_spacing: float, n_sub: int) -> float:
        f_max = center_frequency + (n_sub - 1) * subcarrier_spacing
        vmax = max((p.max_doppler_speed for p in self.paths), default=0.0)
        return doppler_of_speed(vmax, f_max)


def synthesize(
    scenario: ActivityScenario,
    *,
    sample_rate: float = 1000.0,
    center_frequency: float = 5.0e9,
    dims: tuple[int, int, int] = (3, 1, 30),
    subcarrier_spacing: float = DEFAULT_SUBCARRIER_SPACING_HZ,
    seed: int = 0,
    subject_id: str | None = None,
    trial_id: str | None = None,
) -> CsiStream:
    """Generate a CsiStream for the scenario on a uniform sample grid."""
    n_rx, n_tx, n_sub = dims
    f_d = scenario.max_doppler(center_frequency, subcarrier_spacing, n_sub)
    if sample_rate < 2.0 * f_d:
        raise AliasedDoppler(
            f"sample rate {sample_rate} Hz cannot represent max Doppler {f_d:.1f} Hz "
            f"(needs >= {2 * f_d:.1f} Hz)"
        )

    n_frames = int(round(scenario.duration * sample_rate))
    t = np.arange(n_frames) / sample_rate
    freqs = center_frequency + np.arange(n_sub) * subcarrier_spacing

    tensor = np.zeros((n_frames, n_rx, n_tx, n_sub), dtype=np.complex128)
    for path in scenario.paths:
        if path.motion is None:
            tau = np.full(n_frames, path.base_delay)
        else:
            v = path.motion.at(t)
            # round-trip: reflected path length changes at 2 v(t)
            disp = np.concatenate(([0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) / sample_rate)))
            tau = path.base_delay + 2.0 * disp / SPEED_OF_LIGHT
        base = path.gain * np.exp(-2j * np.pi * np.outer(tau, freqs))  # (time, sub)
        rx_phase = np.exp(1j * path.aoa_phase * np.arange(n_rx))
        tx_phase = np.exp(1j * path.aod_phase * np.arange(n_tx))
        steering = np.outer(rx_phase, tx_phase)  # (rx, tx)
        tensor += base[:, None, None, :] * steering[None, :, :, None]

    rng = np.random.default_rng(seed)
    if scenario.noise_std > 0:
        noise = rng.standard_normal(tensor.shape) + 1j * rng.standard_normal(tensor.shape)
        tensor += (scenario.noise_std / np.sqrt(2.0)) * noise
    if scenario.burst_rate_hz > 0 and scenario.burst_std > 0:
        hits = rng.random(n_frames) < scenario.burst_rate_hz / sample_rate
        if hits.any():
            shape = (int(hits.sum()), n_rx, n_tx, n_sub)
            burst = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            tensor[hits] += (scenario.burst_std / np.sqrt(2.0)) * burst

    if scenario.cfo_hz:
        tensor *= np.exp(2j * np.pi * scenario.cfo_hz * t)[:, None, None, None]
    if scenario.sfo_slope:
        ramp = np.exp(1j * scenario.sfo_slope * np.outer(np.arange(n_frames), np.arange(n_sub)))
        tensor *= ramp[:, None, None, :]

    return CsiStream.from_tensor(
        t,
        tensor,
        sample_rate=sample_rate,
        center_frequency=center_frequency,
        subcarrier_spacing=subcarrier_spacing,
        label=scenario.label,
        subject_id=subject_id,
        trial_id=trial_id,
    )


# ---------------------------------------------------------------------------
# activity presets

PRESET_DURATION = 3.0

# Per-class speed/gain/duty signatures. Speeds put sustained activities in
# distinct Doppler bands; reflection strength (gain) and moving-time fraction
# separate the amplitude distributions. These are synthetic profiles, tuned
# only for qualitative orderings (run faster than walk, falls short and
# violent, lay-down a sit-like transient then a faster drop), not
# measurements.
_PRESET_RECIPES = {
    ActivityLabel.WALK: dict(kind="sustained", v=1.2, limb_v=2.4, limb_hz=1.6, gain=0.55, limb_gain=0.16),
    ActivityLabel.RUN: dict(kind="sustained", v=2.5, limb_v=4.0, limb_hz=2.6, gain=0.70, limb_gain=0.22),
    ActivityLabel.FALL: dict(kind="burst", v=2.6, start=0.9, length=0.55, gain=0.60),
    ActivityLabel.SIT_DOWN: dict(kind="burst", v=0.7, start=0.5, length=1.4, gain=0.30),
    ActivityLabel.STAND_UP: dict(kind="burst", v=-1.35, start=1.3, length=0.55, gain=0.42),
    ActivityLabel.LAY_DOWN: dict(kind="double", v1=0.95, v2=2.0, gain=0.50),
    ActivityLabel.NO_ACTIVITY: dict(kind="static"),
}


def scenario_preset(
    label: ActivityLabel, seed: int = 0, geometry_seed: int | None = None
) -> ActivityScenario:
    """Deterministic-in-seed synthetic scenario for one activity class.

    The seed plays a subject's role: it jitters speeds, gains, and durations
    by ~10% while the class recipe stays fixed. ``geometry_seed`` (defaults
    to ``seed``) independently draws the scene geometry: path delays,
    steering phases, onset timing, oscillator offsets. Splitting the two
    models repeated trials by one person standing at slightly different
    spots, so classifiers must key on motion dynamics, not the fading
    pattern of one scene.
    """
    recipe = _PRESET_RECIPES[label]
    label_idx = list(ActivityLabel).index(label)
    rng = np.random.default_rng([101, int(seed), label_idx])
    geo = np.random.default_rng(
        [103, int(seed if geometry_seed is None else geometry_seed), label_idx]
    )
    jit = lambda scale=0.1: 1.0 + rng.uniform(-scale, scale)
    aoa = lambda: geo.uniform(0, 2 * np.pi)
    delay = lambda base: base * (1.0 + geo.uniform(-0.3, 0.3))

    paths = [
        ScatterPath(base_delay=delay(20e-9), gain=1.0 * jit(0.05), aoa_phase=aoa()),
        ScatterPath(base_delay=delay(45e-9), gain=0.30 * jit(), aoa_phase=aoa()),
    ]
    onset_shift = geo.uniform(-0.15, 0.15)
    t_on = 0.25 * jit() + onset_shift
    t_off = PRESET_DURATION - 0.35 * jit()
    kind = recipe["kind"]
    if kind == "sustained":
        paths.append(
            ScatterPath(
                base_delay=delay(55e-9),
                gain=recipe["gain"] * jit(),
                motion=SpeedProfile.sustained(t_on, t_off, recipe["v"] * jit(0.08)),
                aoa_phase=aoa(),
            )
        )
        for k in range(2):
            paths.append(
                ScatterPath(
                    base_delay=delay(60e-9),
                    gain=recipe["limb_gain"] * jit(),
                    motion=SpeedProfile.oscillation(
                        t_on,
                        t_off,
                        recipe["limb_v"] * jit(0.08),
                        recipe["limb_hz"] * jit(0.08),
                        phase=np.pi * k + geo.uniform(-0.3, 0.3),
                    ),
                    aoa_phase=aoa(),
                )
            )
    elif kind == "burst":
        paths.append(
            ScatterPath(
                base_delay=delay(55e-9),
                gain=recipe["gain"] * jit(),
                motion=SpeedProfile.hump(
                    recipe["start"] * jit() + onset_shift,
                    recipe["length"] * jit(),
                    recipe["v"] * jit(0.08),
                ),
                aoa_phase=aoa(),
            )
        )
    elif kind == "double":
        # a sit-like transient followed by a faster drop
        paths.append(
            ScatterPath(
                base_delay=delay(55e-9),
                gain=recipe["gain"] * jit(),
                motion=SpeedProfile.hump(0.35 * jit() + onset_shift, 0.7 * jit(), recipe["v1"] * jit(0.08)),
                aoa_phase=aoa(),
            )
        )
        paths.append(
            ScatterPath(
                base_delay=delay(58e-9),
                gain=recipe["gain"] * 0.9 * jit(),
                motion=SpeedProfile.hump(
                    1.55 * jit(0.05) + onset_shift, 0.5 * jit(), recipe["v2"] * jit(0.08)
                ),
                aoa_phase=aoa(),
            )
        )

    return ActivityScenario(
        label=label,
        duration=PRESET_DURATION,
        paths=tuple(paths),
        noise_std=0.03 * jit(),
        cfo_hz=geo.uniform(-120.0, 120.0),
        sfo_slope=geo.uniform(0.001, 0.004),
    )


# ---------------------------------------------------------------------------
# scenario files

_SCALARS = {
    "duration": float,
    "noise_std": float,
    "cfo_hz": float,
    "sfo_slope": float,
    "burst_rate_hz": float,
    "burst_std": float,
}


def load_scenario(text: str) -> ActivityScenario:
    """Parse the key-value scenario format.

    Scalar lines are ``key = value``; each ``path`` line holds space-separated
    ``key=value`` pairs with keys gain, delay_ns, and optionally aoa, aod,
    speed (constant m/s) or profile (comma list of t:v breakpoints).
    """
    values: dict = {}
    paths: list[ScatterPath] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("path"):
            kv: dict[str, str] = {}
            for token in line[4:].split():
                if "=" not in token:
                    raise DataError(f"scenario line {lineno}: malformed path token {token!r}")
                k, _, v = token.partition("=")
                kv[k] = v
            try:
                motion = None
                if "profile" in kv:
                    pairs = [p.split(":") for p in kv["profile"].split(",")]
                    motion = SpeedProfile(
                        times=tuple(float(a) for a, _ in pairs),
                        speeds=tuple(float(b) for _, b in pairs),
                    )
                elif "speed" in kv:
                    motion = SpeedProfile.constant(float(kv["speed"]))
                paths.append(
                    ScatterPath(
                        base_delay=float(kv["delay_ns"]) * 1e-9,
                        gain=float(kv["gain"]),
                        motion=motion,
                        aoa_phase=float(kv.get("aoa", 0.0)),
                        aod_phase=float(kv.get("aod", 0.0)),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise DataError(f"scenario line {lineno}: {exc}") from exc
        elif "=" in line:
            key, _, value = (s.strip() for s in line.partition("="))
            if key == "label":
                values["label"] = ActivityLabel.from_string(value)
            elif key in _SCALARS:
                try:
                    values[key] = _SCALARS[key](value)
                except ValueError as exc:
                    raise DataError(f"scenario line {lineno}: bad value for {key}: {value!r}") from exc
            else:
                raise DataError(f"scenario line {lineno}: unknown key {key!r}")
        else:
            raise DataError(f"scenario line {lineno}: cannot parse {line!r}")
    if "label" not in values or "duration" not in values:
        raise DataError("scenario must set label and duration")
    if not paths:
        raise DataError("scenario must declare at least one path")
    return ActivityScenario(paths=tuple(paths), **values)


def dump_scenario(scenario: ActivityScenario) -> str:
    fmt = lambda x: format(float(x), ".17g")
    lines = [f"label = {scenario.label.value}"]
    lines.append(f"duration = {fmt(scenario.duration)}")
    for key in _SCALARS:
        if key != "duration":
            lines.append(f"{key} = {fmt(getattr(scenario, key))}")
    for p in scenario.paths:
        parts = [f"gain={fmt(p.gain)}", f"delay_ns={fmt(p.base_delay * 1e9)}"]
        if p.aoa_phase:
            parts.append(f"aoa={fmt(p.aoa_phase)}")
        if p.aod_phase:
            parts.append(f"aod={fmt(p.aod_phase)}")
        if p.motion is not None:
            prof = ",".join(f"{fmt(t)}:{fmt(v)}" for t, v in zip(p.motion.times, p.motion.speeds))
            parts.append(f"profile={prof}")
        lines.append("path " + " ".join(parts))
    return "\n".join(lines) + "\n"
