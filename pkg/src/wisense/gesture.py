"""Doppler-profile gesture pipeline: profile, segmentation, symbol matching.

A gesture toward the receiver shifts reflected energy to positive
frequencies, away to negative. Human motion between 0.25 and 4 m/s in a
5 GHz band lands in the 8-134 Hz range, so the profile keeps only those
bins (both signs). Segments open when band energy rises 3 dB above the
noise floor and close when it stays below for the hysteresis time; each
segment reduces to one of three symbols (positive, negative, both), and a
gesture is the resulting symbol sequence matched against templates by edit
distance.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, NoSegments
from .features import stft_complex

DOPPLER_BAND_HZ = (8.0, 134.0)
DEFAULT_WINDOW_S = 0.5
DEFAULT_HOP_S = 0.005
DEFAULT_HYSTERESIS_S = 0.025
DOMINANCE = 0.9  # fraction of segment energy on one sign to earn Pos/Neg
THRESHOLD_FACTOR = 2.0  # 3 dB in energy


class Symbol(enum.Enum):
    POS = "Pos"
    NEG = "Neg"
    BOTH = "Both"


@dataclass(frozen=True)
class DopplerProfile:
    """Signed-frequency energy frames restricted to the motion band."""

    magnitudes: np.ndarray  # (n_frames, n_bins)
    freqs: np.ndarray  # (n_bins,), ascending, negative to positive
    frame_period: float
    band: tuple[float, float] = DOPPLER_BAND_HZ

    def __post_init__(self) -> None:
        mags = np.asarray(self.magnitudes, dtype=float)
        freqs = np.asarray(self.freqs, dtype=float)
        mags.setflags(write=False)
        freqs.setflags(write=False)
        object.__setattr__(self, "magnitudes", mags)
        object.__setattr__(self, "freqs", freqs)

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]

    def frame_energy(self) -> np.ndarray:
        return (self.magnitudes**2).sum(axis=1)


@dataclass(frozen=True)
class GestureSegment:
    start: float
    stop: float
    symbol: Symbol

    def __post_init__(self) -> None:
        if not self.start < self.stop:
            raise ValueError(f"segment must have start < stop, got [{self.start}, {self.stop})")


@dataclass(frozen=True)
class GestureTemplate:
    name: str
    symbols: tuple[Symbol, ...]

    def __post_init__(self) -> None:
        if not self.symbols:
            raise ValueError("template needs at least one symbol")
        object.__setattr__(self, "symbols", tuple(self.symbols))


def doppler_profile(
    series: np.ndarray,
    sample_rate: float,
    window_s: float = DEFAULT_WINDOW_S,
    hop_s: float = DEFAULT_HOP_S,
    band: tuple[float, float] = DOPPLER_BAND_HZ,
) -> DopplerProfile:
    """Two-sided STFT of a complex series with out-of-band bins zeroed.

    The default half-second window at a 5 ms hop resolves 2 Hz while
    tracking gesture dynamics.
    """
    window_len = int(round(window_s * sample_rate))
    hop_len = max(1, int(round(hop_s * sample_rate)))
    mags, freqs, frame_period = stft_complex(series, sample_rate, window_len, hop_len)
    lo, hi = band
    keep = (np.abs(freqs) >= lo) & (np.abs(freqs) <= hi)
    mags = mags * keep[None, :]
    return DopplerProfile(magnitudes=mags, freqs=freqs, frame_period=frame_period, band=band)


def estimate_noise_floor(profile: DopplerProfile, quiet_span_s: float = 0.25) -> float:
    """Median frame band energy over the quietest stretch of the profile."""
    energy = profile.frame_energy()
    n = max(1, int(round(quiet_span_s / profile.frame_period)))
    if len(energy) <= n:
        return float(np.median(energy))
    sums = np.convolve(energy, np.ones(n), mode="valid")
    start = int(np.argmin(sums))
    return float(max(np.median(energy[start : start + n]), 1e-30))


def segment(
    profile: DopplerProfile,
    noise_floor: float,
    hysteresis_s: float = DEFAULT_HYSTERESIS_S,
    dominance: float = DOMINANCE,
) -> list[GestureSegment]:
    """Threshold band energy at 3 dB above the noise floor into segments.

    A segment opens on the first frame whose energy exceeds twice the noise
    floor and closes once energy stays below for the hysteresis time, so
    brief dips do not split a gesture. Each segment is symbolized by the
    sign split of its energy.
    """
    if noise_floor <= 0:
        raise ValueError(f"noise_floor must be positive, got {noise_floor}")
    energy = profile.frame_energy()
    above = energy > THRESHOLD_FACTOR * noise_floor
    hyst = max(1, int(round(hysteresis_s / profile.frame_period)))
    pos_cols = profile.freqs > 0
    neg_cols = profile.freqs < 0

    segments: list[GestureSegment] = []
    open_start: int | None = None
    last_above = -1
    below_run = 0
    for i, hit in enumerate(above):
        if hit:
            if open_start is None:
                open_start = i
            last_above = i
            below_run = 0
        elif open_start is not None:
            below_run += 1
            if below_run >= hyst:
                segments.append(_finish_segment(profile, open_start, last_above, pos_cols, neg_cols, dominance))
                open_start = None
                below_run = 0
    if open_start is not None:
        segments.append(_finish_segment(profile, open_start, last_above, pos_cols, neg_cols, dominance))
    return segments


def _finish_segment(
    profile: DopplerProfile,
    start: int,
    stop: int,
    pos_cols: np.ndarray,
    neg_cols: np.ndarray,
    dominance: float,
) -> GestureSegment:
    frames = profile.magnitudes[start : stop + 1] ** 2
    pos = frames[:, pos_cols].sum()
    neg = frames[:, neg_cols].sum()
    total = pos + neg
    if total > 0 and pos / total >= dominance:
        symbol = Symbol.POS
    elif total > 0 and neg / total >= dominance:
        symbol = Symbol.NEG
    else:
        symbol = Symbol.BOTH
    return GestureSegment(
        start=start * profile.frame_period,
        stop=(stop + 1) * profile.frame_period,
        symbol=symbol,
    )


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance (unit insert/delete/substitute costs)."""
    prev = list(range(len(b) + 1))
    for i, sa in enumerate(a, start=1):
        cur = [i]
        for j, sb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (sa != sb)))
        prev = cur
    return prev[-1]


def classify_gesture(
    segments: Sequence[GestureSegment],
    templates: Sequence[GestureTemplate],
) -> tuple[str, float]:
    """Best template by minimum edit distance over symbol sequences.

    Score is 1 - distance/max(len); ties keep the earlier template.
    """
    if not templates:
        raise ValueError("need at least one template")
    if not segments:
        raise NoSegments("no gesture segments to classify")
    seq = [s.symbol for s in segments]
    best_name, best_score = None, -1.0
    for tpl in templates:
        dist = edit_distance(seq, list(tpl.symbols))
        score = 1.0 - dist / max(len(seq), len(tpl.symbols))
        if score > best_score:
            best_name, best_score = tpl.name, score
    return best_name, best_score


def load_templates(text: str) -> list[GestureTemplate]:
    """Parse templates from a JSON list of {name, symbols} objects."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"templates file is not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise DataError("templates file must hold a JSON list")
    templates = []
    for item in raw:
        try:
            symbols = tuple(Symbol(s) for s in item["symbols"])
            templates.append(GestureTemplate(name=item["name"], symbols=symbols))
        except (KeyError, ValueError, TypeError) as exc:
            raise DataError(f"bad template entry {item!r}: {exc}") from exc
    return templates


def dump_templates(templates: Sequence[GestureTemplate]) -> str:
    return json.dumps(
        [{"name": t.name, "symbols": [s.value for s in t.symbols]} for t in templates],
        indent=2,
    )
