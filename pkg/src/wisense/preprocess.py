"""Phase sanitization, amplitude denoising, and normalization.

Raw CSI phase carries a time-varying offset (oscillator mismatch) and a
subcarrier-linear ramp (sampling clock mismatch); both dwarf the sub-radian
changes body motion causes. :func:`sanitize_phase` removes the best
endpoint-slope linear trend and the residual mean per frame, which cancels
both impairments while leaving structure across subcarriers intact.

Amplitude denoising offers a zero-phase Butterworth low-pass and PCA
projection (drop the largest component, keep the next few), the trick that
strips correlated static-scene energy while keeping motion-induced
variation, which is spread across several components.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal as _signal

from .errors import (
    DegenerateInput,
    IndexOutOfRange,
    InvalidCutoff,
    TooFewRows,
    TooFewSubcarriers,
)

DEFAULT_KEEP_COMPONENTS: tuple[int, ...] = (1, 2, 3, 4, 5)
DEFAULT_LOWPASS_CUTOFF_HZ = 150.0


def unwrap_subcarrier_phase(phases: np.ndarray) -> np.ndarray:
    """Unwrap along the subcarrier (last) axis: remove 2*pi jumps > pi."""
    return np.unwrap(np.asarray(phases, dtype=float), axis=-1)


def sanitize_phase(phases: np.ndarray, subcarrier_indices: Sequence[float] | None = None) -> np.ndarray:
    """Remove the endpoint-slope linear trend and mean from phase-vs-subcarrier.

    Input is unwrapped along the subcarrier axis first. With slope
    a = (phi_S - phi_1)/(k_S - k_1), the output is
    (phi - a*k) - mean(phi - a*k), so any a*k + b input component vanishes
    and the first and last outputs are equal by construction. Accepts a
    single vector or any array whose last axis is the subcarrier axis.
    """
    phases = np.asarray(phases, dtype=float)
    n_sub = phases.shape[-1]
    if n_sub < 2:
        raise TooFewSubcarriers(f"phase sanitization needs >= 2 subcarriers, got {n_sub}")
    if subcarrier_indices is None:
        k = np.arange(n_sub, dtype=float)
    else:
        k = np.asarray(subcarrier_indices, dtype=float)
        if k.shape != (n_sub,):
            raise ValueError(f"subcarrier_indices must have shape ({n_sub},), got {k.shape}")
    unwrapped = unwrap_subcarrier_phase(phases)
    slope = (unwrapped[..., -1] - unwrapped[..., 0]) / (k[-1] - k[0])
    detrended = unwrapped - slope[..., None] * k
    return detrended - detrended.mean(axis=-1, keepdims=True)


def lowpass(series: np.ndarray, cutoff_hz: float, sample_rate: float, order: int = 4) -> np.ndarray:
    """Zero-phase Butterworth low-pass along axis 0 (DC gain exactly 1).

    Realized as cascaded second-order sections applied forward and backward,
    so event timing is preserved for segmentation.
    """
    if not 0 < cutoff_hz < sample_rate / 2:
        raise InvalidCutoff(
            f"cutoff must lie in (0, {sample_rate / 2}) Hz for fs={sample_rate}, got {cutoff_hz}"
        )
    series = np.asarray(series, dtype=float)
    sos = _signal.butter(order, cutoff_hz, btype="low", fs=sample_rate, output="sos")
    return _signal.sosfiltfilt(sos, series, axis=0)


@dataclass(frozen=True)
class PcaModel:
    """Principal components of a column-centered matrix, variance-ordered."""

    mean: np.ndarray  # (D,)
    components: np.ndarray  # (K, D), orthonormal rows
    explained_variance: np.ndarray  # (K,), non-increasing

    def __post_init__(self) -> None:
        for name in ("mean", "components", "explained_variance"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "wisense-pca",
                "version": 1,
                "mean": self.mean.tolist(),
                "components": self.components.tolist(),
                "explained_variance": self.explained_variance.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PcaModel":
        obj = json.loads(text)
        if obj.get("format") != "wisense-pca":
            raise ValueError("not a PCA model file")
        return cls(
            mean=np.asarray(obj["mean"]),
            components=np.asarray(obj["components"]),
            explained_variance=np.asarray(obj["explained_variance"]),
        )


def fit_pca(matrix: np.ndarray) -> PcaModel:
    """Fit principal components of the column-centered covariance.

    Uses the DxD covariance eigendecomposition when rows >= columns and the
    Gram (row-space) route otherwise, so rank-deficient inputs are handled;
    components beyond the rank carry ~zero variance.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise TooFewRows(f"PCA needs a 2-D matrix with >= 2 rows, got shape {matrix.shape}")
    n, d = matrix.shape
    mean = matrix.mean(axis=0)
    centered = matrix - mean
    total_var = float((centered**2).sum()) / (n - 1)
    if total_var <= 1e-24:
        raise DegenerateInput("all-constant matrix has no principal components")

    if n >= d:
        cov = centered.T @ centered / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1]
        variances = np.clip(eigvals[order], 0.0, None)
        components = eigvecs[:, order].T
    else:
        # Gram route: eigenvectors of the n x n inner-product matrix lift to
        # column-space components; directions beyond rank n-1 get variance 0.
        gram = centered @ centered.T / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(gram)
        order = np.argsort(eigvals)[::-1]
        eigvals = np.clip(eigvals[order], 0.0, None)
        eigvecs = eigvecs[:, order]
        components = np.zeros((d, d))
        variances = np.zeros(d)
        k = 0
        for lam, u in zip(eigvals, eigvecs.T):
            if lam <= 1e-12 * eigvals[0]:
                break
            components[k] = (centered.T @ u) / np.sqrt(lam * (n - 1))
            variances[k] = lam
            k += 1
        # complete to an orthonormal basis so "keep all" spans the space
        if k < d:
            basis = np.linalg.qr(np.concatenate([components[:k].T, np.eye(d)], axis=1))[0]
            components[k:] = basis[:, k:d].T
    return PcaModel(mean=mean, components=components, explained_variance=variances)


def pca_denoise(
    matrix: np.ndarray,
    model: PcaModel,
    keep: Sequence[int] = DEFAULT_KEEP_COMPONENTS,
) -> np.ndarray:
    """Projection scores of centered rows onto the kept components.

    Default keeps components 1..5 (zero-based), discarding the first: the
    largest component is dominated by static-path energy and correlated
    noise, while motion shows up in the next few.
    """
    matrix = np.asarray(matrix, dtype=float)
    keep = list(keep)
    if any(not 0 <= k < model.n_components for k in keep):
        raise IndexOutOfRange(
            f"keep indices {keep} outside available components [0, {model.n_components})"
        )
    centered = matrix - model.mean
    return centered @ model.components[keep].T


def znormalize(matrix: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Per-column zero mean, unit variance; constant columns map to zero."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise TooFewRows(f"znormalize needs >= 2 rows, got shape {matrix.shape}")
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    out = (matrix - mean) / np.maximum(std, eps)
    out[:, std < eps] = 0.0  # don't let the clamp amplify rounding residue
    return out


def sanitize_stream_phases(phases: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    """Sanitize a (time, rx*tx*sub) phase matrix per frame per antenna pair."""
    n_rx, n_tx, n_sub = dims
    shaped = np.asarray(phases, dtype=float).reshape(-1, n_rx, n_tx, n_sub)
    return sanitize_phase(shaped).reshape(phases.shape)
