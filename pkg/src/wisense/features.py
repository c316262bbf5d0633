"""Classifier-ready features from denoised CSI: STFT banks, wavelet energies,
movement-speed estimates, and inter-antenna phase differences.

The STFT path windows each principal-component score series (Hann, 128
samples, 256-point FFT at 1 kHz) and keeps the 25 lowest of the 128
one-sided bins, where body motion lives; frames are later stacked into
fixed-length vectors. The wavelet path decomposes 200 ms blocks through a
12-level orthogonal transform whose per-level detail energies resolve
movement speed dyadically: level l covers (fs/2^(l+1), fs/2^l].
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import SeriesTooShort, ShapeMismatch, SingleAntenna, SpanTooLong
from .model import CsiStream, phase_matrix
from .simulate import SPEED_OF_LIGHT

DEFAULT_WINDOW_LEN = 128
DEFAULT_FFT_LEN = 256
DEFAULT_HOP_MS = 50.0
STFT_KEEP_BINS = 25
DWT_LEVELS = 12
DWT_INTERVAL_S = 0.2
TORSO_ENERGY_QUANTILE = 0.5
LEG_ENERGY_QUANTILE = 0.95


class FeatureKind(enum.Enum):
    STFT_STACK25 = "StftStack25"
    DWT27 = "Dwt27"
    PHASE_DIFF_AUG = "PhaseDiffAug"


FEATURE_DIMS = {
    FeatureKind.STFT_STACK25: STFT_KEEP_BINS,
    FeatureKind.DWT27: 27,
    FeatureKind.PHASE_DIFF_AUG: 2 * STFT_KEEP_BINS,
}


@dataclass(frozen=True)
class Spectrogram:
    """Time-frequency magnitude map: rows are frames, columns one-sided bins."""

    magnitudes: np.ndarray  # (n_frames, n_bins), >= 0
    frame_period: float  # seconds between frame starts
    bin_width: float  # Hz
    window_len: int  # samples

    def __post_init__(self) -> None:
        mags = np.asarray(self.magnitudes, dtype=float)
        if not np.isfinite(mags).all() or (mags < 0).any():
            raise ValueError("spectrogram magnitudes must be finite and >= 0")
        mags.setflags(write=False)
        object.__setattr__(self, "magnitudes", mags)

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def n_bins(self) -> int:
        return self.magnitudes.shape[1]

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.bin_width

    @property
    def sample_rate(self) -> float:
        # one-sided spectrum drops the Nyquist bin, so fft_len = 2 * n_bins
        return self.bin_width * 2 * self.n_bins

    def frame_times(self) -> np.ndarray:
        """Center time of each analysis window."""
        return np.arange(self.n_frames) * self.frame_period + 0.5 * self.window_len / self.sample_rate


@dataclass(frozen=True)
class FeatureSequence:
    """Time-ordered feature vectors with a fixed per-kind dimension."""

    vectors: np.ndarray  # (n_frames, F)
    frame_period: float
    kind: FeatureKind

    def __post_init__(self) -> None:
        vecs = np.asarray(self.vectors, dtype=float)
        if vecs.ndim != 2:
            raise ShapeMismatch(f"feature vectors must be 2-D, got shape {vecs.shape}")
        if np.isnan(vecs).any():
            raise ValueError("feature vectors must not contain NaN")
        expected = FEATURE_DIMS[self.kind]
        if vecs.shape[1] != expected:
            raise ShapeMismatch(
                f"{self.kind.value} features must have {expected} columns, got {vecs.shape[1]}"
            )
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)

    def __len__(self) -> int:
        return self.vectors.shape[0]


def hann_window(n: int) -> np.ndarray:
    """Periodic (DFT-even) Hann window: a constant input excites exactly the
    DC bin and its two neighbors, nothing else."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(
    series: np.ndarray,
    sample_rate: float,
    window_len: int = DEFAULT_WINDOW_LEN,
    hop_len: int | None = None,
    fft_len: int = DEFAULT_FFT_LEN,
) -> Spectrogram:
    """Hann-windowed magnitude STFT, one-sided (bins 0 .. fft_len/2 - 1).

    Frame count is floor((N - window_len)/hop_len) + 1; only full windows are
    analyzed.
    """
    series = np.asarray(series, dtype=float)
    if hop_len is None:
        hop_len = max(1, int(round(DEFAULT_HOP_MS * 1e-3 * sample_rate)))
    if window_len > fft_len:
        raise ValueError(f"window_len {window_len} must be <= fft_len {fft_len}")
    if hop_len < 1:
        raise ValueError(f"hop_len must be >= 1, got {hop_len}")
    n = series.shape[0]
    if n < window_len:
        raise SeriesTooShort(f"series has {n} samples, STFT window needs {window_len}")
    n_frames = (n - window_len) // hop_len + 1
    window = hann_window(window_len)
    starts = np.arange(n_frames) * hop_len
    segs = np.stack([series[s : s + window_len] for s in starts]) * window
    spectrum = np.fft.rfft(segs, n=fft_len, axis=1)[:, : fft_len // 2]
    return Spectrogram(
        magnitudes=np.abs(spectrum),
        frame_period=hop_len / sample_rate,
        bin_width=sample_rate / fft_len,
        window_len=window_len,
    )


def stft_complex(
    series: np.ndarray,
    sample_rate: float,
    window_len: int,
    hop_len: int,
    fft_len: int | None = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Two-sided STFT of a complex series: (magnitudes, signed freqs, frame_period).

    Frequencies are fftshift-ordered ascending (negative to positive).
    """
    series = np.asarray(series, dtype=complex)
    fft_len = fft_len or window_len
    n = series.shape[0]
    if n < window_len:
        raise SeriesTooShort(f"series has {n} samples, window needs {window_len}")
    n_frames = (n - window_len) // hop_len + 1
    window = hann_window(window_len)
    starts = np.arange(n_frames) * hop_len
    segs = np.stack([series[s : s + window_len] for s in starts]) * window
    spectrum = np.fft.fftshift(np.fft.fft(segs, n=fft_len, axis=1), axes=1)
    freqs = np.fft.fftshift(np.fft.fftfreq(fft_len, d=1.0 / sample_rate))
    return np.abs(spectrum), freqs, hop_len / sample_rate


def stft_feature_frames(
    scores: np.ndarray,
    sample_rate: float = 1000.0,
    hop_ms: float = DEFAULT_HOP_MS,
    window_len: int = DEFAULT_WINDOW_LEN,
    fft_len: int = DEFAULT_FFT_LEN,
) -> FeatureSequence:
    """25-bin STFT features per frame, averaged over the kept PC score columns.

    ``scores`` is (time, n_kept_components), typically the PCA-denoised
    projection scores at 1 kHz.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        scores = scores[:, None]
    hop_len = max(1, int(round(hop_ms * 1e-3 * sample_rate)))
    mags = None
    for col in range(scores.shape[1]):
        spec = stft(scores[:, col], sample_rate, window_len, hop_len, fft_len)
        part = spec.magnitudes[:, :STFT_KEEP_BINS]
        mags = part if mags is None else mags + part
    mags = mags / scores.shape[1]
    return FeatureSequence(
        vectors=mags,
        frame_period=hop_len / sample_rate,
        kind=FeatureKind.STFT_STACK25,
    )


def stack_window(seq: FeatureSequence, span_s: float, start: int = 0) -> np.ndarray:
    """Concatenate consecutive frames covering ``span_s`` into one flat vector.

    25-dim frames at a 50 ms hop stacked over 2 s give a 1000-dim vector.
    """
    n_frames = int(round(span_s / seq.frame_period))
    if n_frames < 1:
        raise ValueError(f"span {span_s}s is shorter than one frame period {seq.frame_period}s")
    if start + n_frames > len(seq):
        raise SpanTooLong(
            f"need {n_frames} frames from {start}, sequence has {len(seq)}"
        )
    return seq.vectors[start : start + n_frames].reshape(-1).copy()


# ---------------------------------------------------------------------------
# wavelet features

# Orthonormal 8-tap Daubechies scaling filter (4 vanishing moments).
DB4_LO = np.array(
    [
        0.230377813308855230,
        0.714846570552541500,
        0.630880767929590400,
        -0.027983769416983850,
        -0.187034811718881140,
        0.030841381835986965,
        0.032883011666982945,
        -0.010597401784997278,
    ]
)
DB4_HI = (DB4_LO[::-1] * np.where(np.arange(len(DB4_LO)) % 2 == 0, 1.0, -1.0))


def _dwt_step(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One periodized analysis step; input length must be even."""
    n = x.shape[0]
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(len(DB4_LO))[None, :]) % n
    windows = x[idx]
    return windows @ DB4_LO, windows @ DB4_HI


def dwt_multilevel(x: np.ndarray, levels: int = DWT_LEVELS) -> tuple[list[np.ndarray], np.ndarray]:
    """Periodized multilevel DWT: ([detail_1 .. detail_L], approximation).

    The transform is orthogonal, so the squared coefficients of all bands sum
    to the input energy. detail_1 holds the top frequency octave.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2**levels:
        raise SeriesTooShort(
            f"{levels}-level transform needs >= {2**levels} samples, got {x.shape[0]}"
        )
    details = []
    approx = x
    for _ in range(levels):
        if approx.shape[0] % 2:
            raise SeriesTooShort(f"odd length {approx.shape[0]} during decomposition")
        approx, detail = _dwt_step(approx)
        details.append(detail)
    return details, approx


def _reflect_pad_to(x: np.ndarray, target: int) -> np.ndarray:
    """Extend by repeated reflection until ``target`` samples, then truncate."""
    if x.shape[0] >= target:
        return x[:target]
    if x.shape[0] == 1:
        return np.full(target, x[0])
    pieces = [x]
    total = x.shape[0]
    flip = True
    while total < target:
        piece = x[::-1] if flip else x
        pieces.append(piece)
        total += piece.shape[0]
        flip = not flip
    return np.concatenate(pieces)[:target]


class SpeedEstimate(NamedTuple):
    torso: float
    leg: float
    silent: bool


def torso_leg_speeds(spec: Spectrogram, center_frequency: float) -> SpeedEstimate:
    """Movement-speed estimates from spectral-energy percentiles.

    Per frame, the cumulative energy over bins >= 1 is scanned: the torso
    frequency is the 50% crossing and the leg frequency the 95% crossing
    (limbs move faster than the torso and contribute the upper tail). Speeds
    invert the reflection Doppler relation v = f*c/(2*f_center); the interval
    value is the median over frames. All-silent input returns (0, 0) flagged.
    """
    energy = spec.magnitudes[:, 1:] ** 2
    frame_total = energy.sum(axis=1)
    live = frame_total > 0
    if not live.any():
        return SpeedEstimate(0.0, 0.0, True)
    cum = np.cumsum(energy[live], axis=1) / frame_total[live, None]
    torso_bin = 1 + np.argmax(cum >= TORSO_ENERGY_QUANTILE, axis=1)
    leg_bin = 1 + np.argmax(cum >= LEG_ENERGY_QUANTILE, axis=1)
    to_speed = spec.bin_width * SPEED_OF_LIGHT / (2.0 * center_frequency)
    return SpeedEstimate(
        torso=float(np.median(torso_bin)) * to_speed,
        leg=float(np.median(leg_bin)) * to_speed,
        silent=False,
    )


def dwt_features(
    scores: np.ndarray,
    sample_rate: float = 1000.0,
    interval_s: float = DWT_INTERVAL_S,
    center_frequency: float = 5.0e9,
    levels: int = DWT_LEVELS,
) -> FeatureSequence:
    """27-dim feature vector per analysis interval (default 200 ms).

    Per interval: 12 per-level detail energies averaged over the score
    columns, their 12 deltas against the previous interval, torso and leg
    speed estimates, and the total band energy. Blocks are reflection-padded
    to 2^levels samples so every level is populated.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        scores = scores[:, None]
    block = int(round(interval_s * sample_rate))
    n_blocks = scores.shape[0] // block
    if n_blocks < 1:
        raise SeriesTooShort(
            f"need at least {block} samples for one {interval_s * 1e3:.0f} ms interval"
        )
    pad_len = 2**levels

    # per-block torso/leg speeds come from an STFT over the same score series
    hop = max(1, int(round(DEFAULT_HOP_MS * 1e-3 * sample_rate)))
    window = min(DEFAULT_WINDOW_LEN, scores.shape[0])
    mean_mags = None
    for col in range(scores.shape[1]):
        spec = stft(scores[:, col], sample_rate, window, hop, max(DEFAULT_FFT_LEN, window))
        mean_mags = spec.magnitudes if mean_mags is None else mean_mags + spec.magnitudes
    mean_spec = Spectrogram(
        magnitudes=mean_mags / scores.shape[1],
        frame_period=spec.frame_period,
        bin_width=spec.bin_width,
        window_len=spec.window_len,
    )
    centers = np.arange(mean_spec.n_frames) * hop + window / 2.0

    vectors = np.zeros((n_blocks, 27))
    prev_energy = None
    for b in range(n_blocks):
        seg = scores[b * block : (b + 1) * block]
        level_energy = np.zeros(levels)
        total_energy = 0.0
        for col in range(seg.shape[1]):
            padded = _reflect_pad_to(seg[:, col], pad_len)
            details, approx = dwt_multilevel(padded, levels)
            level_energy += np.array([(d**2).sum() / pad_len for d in details])
            total_energy += ((approx**2).sum() + sum((d**2).sum() for d in details)) / pad_len
        level_energy /= seg.shape[1]
        total_energy /= seg.shape[1]
        delta = level_energy - prev_energy if prev_energy is not None else np.zeros(levels)
        prev_energy = level_energy

        in_block = (centers >= b * block) & (centers < (b + 1) * block)
        if in_block.any():
            sub = mean_spec.magnitudes[in_block]
        else:
            nearest = int(np.argmin(np.abs(centers - (b + 0.5) * block)))
            sub = mean_spec.magnitudes[nearest : nearest + 1]
        block_spec = Spectrogram(
            magnitudes=sub,
            frame_period=mean_spec.frame_period,
            bin_width=mean_spec.bin_width,
            window_len=mean_spec.window_len,
        )
        speeds = torso_leg_speeds(block_spec, center_frequency)

        vectors[b, :levels] = level_energy
        vectors[b, levels : 2 * levels] = delta
        vectors[b, 2 * levels] = speeds.torso
        vectors[b, 2 * levels + 1] = speeds.leg
        vectors[b, 2 * levels + 2] = total_energy
    return FeatureSequence(vectors=vectors, frame_period=interval_s, kind=FeatureKind.DWT27)


# ---------------------------------------------------------------------------
# phase differences


def phase_difference(stream: CsiStream) -> np.ndarray:
    """Wrapped phase difference between adjacent rx antennas, per tx/subcarrier.

    Oscillator-offset phase errors are common to all receive chains, so the
    difference cancels them while keeping geometry-dependent structure.
    Output column order: (rx_pair, tx, subcarrier), rx-pair-major; values lie
    in (-pi, pi].
    """
    n_rx, n_tx, n_sub = stream.dims
    if n_rx < 2:
        raise SingleAntenna("phase differencing needs at least 2 rx antennas")
    tensor = stream.gains_tensor
    diff = tensor[:, 1:] * np.conj(tensor[:, :-1])
    out = np.angle(diff).reshape(len(stream), -1)
    out[out == -np.pi] = np.pi
    return out


# ---------------------------------------------------------------------------
# spectrogram export


def spectrogram_to_csv(spec: Spectrogram) -> str:
    lines = [
        f"# frame_period={spec.frame_period!r} bin_width={spec.bin_width!r} window_len={spec.window_len}"
    ]
    for row in spec.magnitudes:
        lines.append(",".join(format(float(v), ".9g") for v in row))
    return "\n".join(lines) + "\n"


def spectrogram_to_pgm(spec: Spectrogram) -> bytes:
    """Binary PGM (P5) rendering: columns are frames, rows are bins (low at bottom)."""
    mags = spec.magnitudes
    peak = mags.max()
    scaled = (mags / peak * 255.0).astype(np.uint8) if peak > 0 else np.zeros_like(mags, dtype=np.uint8)
    image = scaled.T[::-1]  # (bins, frames), bin 0 at the bottom row
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode()
    return header + image.tobytes()
