"""Histogram-fingerprint classifier over denoised CSI amplitudes.

Each class is summarized by normalized amplitude histograms, one per column
group (a group is typically one receive antenna's subcarrier block). A
sample is assigned to the class whose fingerprints are closest in
earth-mover distance, summed over groups. Bin edges are fixed from the
pooled training range so train and test histograms are comparable.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import EmptyClass, ShapeMismatch
from ..model import sorted_labels

DEFAULT_BINS = 64


@dataclass(frozen=True)
class HistogramModel:
    labels: tuple  # class order, used for tie-breaking
    bin_edges: np.ndarray  # (n_bins + 1,), shared by every fingerprint
    group_slices: tuple[tuple[int, int], ...]  # half-open column ranges
    fingerprints: np.ndarray  # (n_labels, n_groups, n_bins), rows sum to 1

    def __post_init__(self) -> None:
        for name in ("bin_edges", "fingerprints"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "wisense-histogram",
                "version": 1,
                "labels": [getattr(l, "value", l) for l in self.labels],
                "bin_edges": self.bin_edges.tolist(),
                "group_slices": [list(g) for g in self.group_slices],
                "fingerprints": self.fingerprints.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str, label_type=None) -> "HistogramModel":
        obj = json.loads(text)
        if obj.get("format") != "wisense-histogram":
            raise ValueError("not a histogram model file")
        labels = obj["labels"]
        if label_type is not None:
            labels = [label_type(l) for l in labels]
        return cls(
            labels=tuple(labels),
            bin_edges=np.asarray(obj["bin_edges"]),
            group_slices=tuple(tuple(g) for g in obj["group_slices"]),
            fingerprints=np.asarray(obj["fingerprints"]),
        )


def _column_groups(n_cols: int, n_groups: int) -> tuple[tuple[int, int], ...]:
    if n_cols % n_groups:
        raise ShapeMismatch(f"{n_cols} columns do not split evenly into {n_groups} groups")
    size = n_cols // n_groups
    return tuple((g * size, (g + 1) * size) for g in range(n_groups))


def _group_histograms(
    sample: np.ndarray,
    edges: np.ndarray,
    groups: Sequence[tuple[int, int]],
) -> np.ndarray:
    hists = np.empty((len(groups), len(edges) - 1))
    for g, (lo, hi) in enumerate(groups):
        values = np.clip(sample[:, lo:hi].ravel(), edges[0], edges[-1])
        counts, _ = np.histogram(values, bins=edges)
        total = counts.sum()
        hists[g] = counts / total if total else counts
    return hists


def hist_fit(
    samples: Sequence[np.ndarray],
    labels: Sequence,
    n_bins: int = DEFAULT_BINS,
    n_groups: int = 1,
    classes: Sequence | None = None,
) -> HistogramModel:
    """Build per-class fingerprints from (time x D) amplitude matrices.

    ``classes`` fixes the label universe (and tie-break order); by default it
    is derived from the labels present.
    """
    if len(samples) != len(labels) or not samples:
        raise ValueError("need one label per sample and at least one sample")
    ordered = tuple(classes) if classes is not None else sorted_labels(labels)
    n_cols = np.asarray(samples[0]).shape[1]
    groups = _column_groups(n_cols, n_groups)

    lo = min(float(np.min(s)) for s in samples)
    hi = max(float(np.max(s)) for s in samples)
    if hi <= lo:
        hi = lo + 1e-6
    edges = np.linspace(lo, hi, n_bins + 1)

    fingerprints = np.zeros((len(ordered), len(groups), n_bins))
    for li, label in enumerate(ordered):
        rows = [np.asarray(s, dtype=float) for s, l in zip(samples, labels) if l == label]
        if not rows:
            raise EmptyClass(f"no training samples for class {label}")
        pooled = np.concatenate(rows, axis=0)
        fingerprints[li] = _group_histograms(pooled, edges, groups)
    return HistogramModel(
        labels=ordered,
        bin_edges=edges,
        group_slices=groups,
        fingerprints=fingerprints,
    )


def _emd(p: np.ndarray, q: np.ndarray, bin_width: float) -> float:
    """Earth-mover distance between histograms on a shared 1-D grid."""
    return float(np.abs(np.cumsum(p - q)).sum() * bin_width)


def hist_predict(model: HistogramModel, sample: np.ndarray):
    """Label whose fingerprints are closest (summed earth-mover distance).

    Ties break toward the earlier label in the model's label order.
    """
    sample = np.asarray(sample, dtype=float)
    hists = _group_histograms(sample, model.bin_edges, model.group_slices)
    bin_width = float(model.bin_edges[1] - model.bin_edges[0])
    best_label, best_dist = None, np.inf
    for li, label in enumerate(model.labels):
        dist = sum(
            _emd(hists[g], model.fingerprints[li, g], bin_width) for g in range(len(model.group_slices))
        )
        if dist < best_dist:
            best_label, best_dist = label, dist
    return best_label
