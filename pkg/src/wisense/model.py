"""Core CSI domain types: frames, streams, labels, and their matrix views.

A channel snapshot is a complex gain per (rx antenna, tx antenna, subcarrier).
Flattened matrices returned by :func:`amplitude_matrix` / :func:`phase_matrix`
order columns rx-major: column = rx*(n_tx*n_sub) + tx*n_sub + subcarrier.
That keeps each receive antenna's subcarrier block contiguous, which the
phase-differencing feature relies on.

All types here are immutable after construction and hold no I/O state, so
they are safe to share across threads.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .errors import EmptyInput, NonMonotoneTimestamps, ShapeMismatch

DEFAULT_SUBCARRIER_SPACING_HZ = 1.25e6  # grouped-subcarrier reporting granularity


class ActivityLabel(enum.Enum):
    """Closed set of recognized activity classes.

    NO_ACTIVITY is reserved for stationary segments.
    """

    LAY_DOWN = "LayDown"
    FALL = "Fall"
    WALK = "Walk"
    RUN = "Run"
    SIT_DOWN = "SitDown"
    STAND_UP = "StandUp"
    NO_ACTIVITY = "NoActivity"

    @classmethod
    def from_string(cls, text: str) -> "ActivityLabel":
        key = "".join(ch for ch in text if ch.isalnum()).lower()
        for member in cls:
            if member.value.lower() == key or member.name.replace("_", "").lower() == key:
                return member
        raise ValueError(f"unknown activity label: {text!r}")

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


#: Canonical ordering used when models need "lowest class index" tie-breaking.
LABEL_ORDER: tuple[ActivityLabel, ...] = tuple(ActivityLabel)


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CsiFrame:
    """One timestamped channel snapshot.

    gains has shape (n_rx, n_tx, n_subcarriers), complex. rssi (dB, one per
    rx antenna) and rate_code (MCS/rate field) are optional capture metadata.
    """

    timestamp: float
    gains: np.ndarray
    rssi: tuple[float, ...] | None = None
    rate_code: int | None = None

    def __post_init__(self) -> None:
        gains = np.asarray(self.gains, dtype=np.complex128)
        if gains.ndim != 3:
            raise ShapeMismatch(f"gains must be 3-D (rx, tx, subcarrier), got shape {gains.shape}")
        if min(gains.shape) < 1:
            raise ShapeMismatch(f"gains dimensions must be >= 1, got {gains.shape}")
        if not np.isfinite(gains.view(np.float64)).all():
            raise ValueError("gains must be finite (no NaN/Inf)")
        object.__setattr__(self, "gains", _as_readonly(gains))

    @property
    def n_rx(self) -> int:
        return self.gains.shape[0]

    @property
    def n_tx(self) -> int:
        return self.gains.shape[1]

    @property
    def n_subcarriers(self) -> int:
        return self.gains.shape[2]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.gains.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class CsiStream:
    """Uniformly-sampled sequence of CsiFrames plus capture metadata.

    Timestamps must be strictly increasing and all frames must share one
    (n_rx, n_tx, n_subcarriers) shape. ``gap_filled`` is set by the ingest
    regularizer when it had to hold frames across a long capture gap.
    """

    frames: tuple[CsiFrame, ...]
    sample_rate: float
    center_frequency: float
    subcarrier_spacing: float = DEFAULT_SUBCARRIER_SPACING_HZ
    label: ActivityLabel | None = None
    subject_id: str | None = None
    trial_id: str | None = None
    gap_filled: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.frames:
            dims = self.frames[0].dims
            for fr in self.frames:
                if fr.dims != dims:
                    raise ShapeMismatch(
                        f"all frames must share dims {dims}, found {fr.dims}"
                    )
            ts = np.array([fr.timestamp for fr in self.frames])
            if len(ts) > 1 and not (np.diff(ts) > 0).all():
                raise NonMonotoneTimestamps("frame timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[CsiFrame]:
        return iter(self.frames)

    @property
    def dims(self) -> tuple[int, int, int]:
        if not self.frames:
            raise EmptyInput("stream has no frames")
        return self.frames[0].dims

    @property
    def duration(self) -> float:
        if not self.frames:
            return 0.0
        return self.frames[-1].timestamp - self.frames[0].timestamp

    def timestamps(self) -> np.ndarray:
        return np.array([fr.timestamp for fr in self.frames])

    @cached_property
    def gains_tensor(self) -> np.ndarray:
        """All gains stacked to shape (n_frames, n_rx, n_tx, n_subcarriers)."""
        if not self.frames:
            raise EmptyInput("stream has no frames")
        return _as_readonly(np.stack([fr.gains for fr in self.frames]))

    @classmethod
    def from_tensor(
        cls,
        timestamps: np.ndarray,
        gains: np.ndarray,
        *,
        sample_rate: float,
        center_frequency: float,
        subcarrier_spacing: float = DEFAULT_SUBCARRIER_SPACING_HZ,
        label: ActivityLabel | None = None,
        subject_id: str | None = None,
        trial_id: str | None = None,
        gap_filled: bool = False,
    ) -> "CsiStream":
        gains = _as_readonly(np.asarray(gains, dtype=np.complex128))
        if gains.ndim != 4:
            raise ShapeMismatch(f"tensor must be 4-D (time, rx, tx, subcarrier), got {gains.shape}")
        frames = tuple(
            CsiFrame(timestamp=float(t), gains=gains[k])
            for k, t in enumerate(np.asarray(timestamps, dtype=float))
        )
        stream = cls(
            frames=frames,
            sample_rate=sample_rate,
            center_frequency=center_frequency,
            subcarrier_spacing=subcarrier_spacing,
            label=label,
            subject_id=subject_id,
            trial_id=trial_id,
            gap_filled=gap_filled,
        )
        stream.__dict__["gains_tensor"] = gains
        return stream

    def with_meta(self, **kwargs) -> "CsiStream":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class LabeledDataset:
    """Trial-level labeled examples: one CsiStream per trial."""

    trials: tuple[CsiStream, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "trials", tuple(self.trials))

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self) -> Iterator[CsiStream]:
        return iter(self.trials)

    def labels(self) -> list[ActivityLabel | None]:
        return [t.label for t in self.trials]

    def subjects(self) -> list[str | None]:
        return [t.subject_id for t in self.trials]


def flatten_index(rx: int, tx: int, subcarrier: int, dims: tuple[int, int, int]) -> int:
    """Column index of (rx, tx, subcarrier) in the flattened matrix views."""
    n_rx, n_tx, n_sub = dims
    if not (0 <= rx < n_rx and 0 <= tx < n_tx and 0 <= subcarrier < n_sub):
        raise IndexError(f"({rx},{tx},{subcarrier}) out of range for dims {dims}")
    return rx * (n_tx * n_sub) + tx * n_sub + subcarrier


def unflatten_index(column: int, dims: tuple[int, int, int]) -> tuple[int, int, int]:
    """Inverse of :func:`flatten_index`."""
    n_rx, n_tx, n_sub = dims
    if not 0 <= column < n_rx * n_tx * n_sub:
        raise IndexError(f"column {column} out of range for dims {dims}")
    rx, rem = divmod(column, n_tx * n_sub)
    tx, subcarrier = divmod(rem, n_sub)
    return rx, tx, subcarrier


def amplitude_matrix(stream: CsiStream) -> np.ndarray:
    """Per-frame gain magnitudes, shape (n_frames, n_rx*n_tx*n_subcarriers)."""
    if not stream.frames:
        raise EmptyInput("cannot take amplitudes of an empty stream")
    tensor = stream.gains_tensor
    return np.abs(tensor).reshape(len(stream), -1)


def phase_matrix(stream: CsiStream) -> np.ndarray:
    """Per-frame principal-value phases in (-pi, pi], same ordering as amplitudes."""
    if not stream.frames:
        raise EmptyInput("cannot take phases of an empty stream")
    tensor = stream.gains_tensor
    phases = np.angle(tensor).reshape(len(stream), -1)
    # arctan2 can return exactly -pi (e.g. re<0, im=-0.0); fold onto +pi.
    phases[phases == -np.pi] = np.pi
    return phases


def sorted_labels(labels: Sequence) -> tuple:
    """Deterministic label ordering: enum order for ActivityLabel, str order otherwise."""
    unique = list(dict.fromkeys(labels))
    if all(isinstance(l, ActivityLabel) for l in unique):
        return tuple(sorted(unique, key=LABEL_ORDER.index))
    return tuple(sorted(unique, key=str))
