"""Dataset assembly, cross-validation, and confusion-matrix evaluation.

This is the glue between streams and classifiers: each trial stream is
turned into the representation its model family consumes (filtered
amplitude histogram material, stacked spectral vectors, spectral-frame
sequences, or pooled raw-amplitude windows), split into train/test folds
with no trial leakage, and scored into row-normalized confusion matrices.

Trials may contribute several windows; window votes aggregate to one trial
prediction by majority (ties toward the earlier label), and both window-
and trial-level matrices are reported.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import classifiers as clf
from .config import PipelineConfig
from .errors import DataError, SeriesTooShort, SplitImpossible, UsageError
from .features import FeatureKind, FeatureSequence, stack_window, stft_feature_frames
from .ingest import regularize
from .model import ActivityLabel, CsiStream, LabeledDataset, amplitude_matrix, sorted_labels
from .preprocess import fit_pca, lowpass, pca_denoise, znormalize
from .simulate import scenario_preset, synthesize

MODEL_KINDS = ("hist", "forest", "hmm", "lstm")

#: Filtered-amplitude histograms need at most a few hundred rows per trial;
#: subsample to this effective rate to bound memory on long captures.
_HIST_MAX_RATE = 200.0


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row-normalized actual-vs-predicted proportions plus raw counts."""

    labels: tuple
    counts: np.ndarray  # (L, L) int, rows = actual
    proportions: np.ndarray  # (L, L) float, rows sum to 1 where populated
    zero_rows: tuple[int, ...]  # actual classes with no examples

    @classmethod
    def from_pairs(cls, actual: Sequence, predicted: Sequence, labels: Sequence | None = None) -> "ConfusionMatrix":
        if labels is None:
            labels = sorted_labels(list(actual) + list(predicted))
        labels = tuple(labels)
        index = {l: i for i, l in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for a, p in zip(actual, predicted):
            counts[index[a], index[p]] += 1
        row_sums = counts.sum(axis=1)
        proportions = np.zeros(counts.shape, dtype=float)
        populated = row_sums > 0
        proportions[populated] = counts[populated] / row_sums[populated, None]
        zero_rows = tuple(int(i) for i in np.flatnonzero(~populated))
        return cls(labels=labels, counts=counts, proportions=proportions, zero_rows=zero_rows)

    def per_class_accuracy(self) -> dict:
        return {l: float(self.proportions[i, i]) for i, l in enumerate(self.labels)}

    def macro_accuracy(self) -> float:
        populated = [i for i in range(len(self.labels)) if i not in self.zero_rows]
        if not populated:
            return 0.0
        return float(np.mean([self.proportions[i, i] for i in populated]))

    def micro_accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else 0.0

    def to_csv(self) -> str:
        lines = ["actual,predicted,count,proportion"]
        for i, a in enumerate(self.labels):
            for j, p in enumerate(self.labels):
                lines.append(
                    f"{_label_str(a)},{_label_str(p)},{self.counts[i, j]},{self.proportions[i, j]:.6f}"
                )
        return "\n".join(lines) + "\n"

    def render_text(self) -> str:
        """Aligned actual-vs-predicted table of row proportions."""
        names = [_label_str(l) for l in self.labels]
        width = max(9, max(len(n) for n in names) + 1)
        header = " " * width + "".join(n.rjust(width) for n in names)
        lines = [header]
        for i, name in enumerate(names):
            row = name.rjust(width) + "".join(
                f"{self.proportions[i, j]:.2f}".rjust(width) for j in range(len(names))
            )
            if i in self.zero_rows:
                row += "  (no examples)"
            lines.append(row)
        lines.append(f"macro accuracy: {self.macro_accuracy():.4f}")
        return "\n".join(lines)


def _label_str(label) -> str:
    return getattr(label, "value", str(label))


@dataclass(frozen=True)
class TrialFeatures:
    """One trial's representation for one model kind."""

    label: object
    subject_id: str | None
    trial_id: str
    windows: tuple  # one or more arrays / FeatureSequences


@dataclass(frozen=True)
class EvalResult:
    kind: str
    trial_confusion: ConfusionMatrix
    window_confusion: ConfusionMatrix

    @property
    def macro_accuracy(self) -> float:
        return self.trial_confusion.macro_accuracy()

    def per_class_accuracy(self) -> dict:
        return self.trial_confusion.per_class_accuracy()


# ---------------------------------------------------------------------------
# per-kind featurization


def _denoised_scores(amplitude: np.ndarray, config: PipelineConfig) -> np.ndarray:
    model = fit_pca(amplitude)
    keep = [k for k in config.pca_keep if k < model.n_components]
    if not keep:
        keep = [0]
    return pca_denoise(amplitude, model, keep)


def _spectral_sequence(stream: CsiStream, config: PipelineConfig) -> FeatureSequence:
    scores = _denoised_scores(amplitude_matrix(stream), config)
    return stft_feature_frames(
        scores,
        sample_rate=stream.sample_rate,
        hop_ms=config.hop_ms,
        window_len=config.stft_window,
        fft_len=config.stft_fft,
    )


def featurize_trial(stream: CsiStream, kind: str, config: PipelineConfig) -> TrialFeatures:
    """Build the model-kind representation for one labeled trial."""
    if stream.label is None:
        raise DataError(f"trial {stream.trial_id!r} is unlabeled")
    if kind == "hist":
        amp = amplitude_matrix(stream)
        cutoff = min(config.lowpass_cutoff_hz, 0.45 * stream.sample_rate)
        filtered = lowpass(amp, cutoff, stream.sample_rate)
        # scale out the trial's static level: fingerprints should compare
        # distribution shape, not absolute link gain
        level = np.median(filtered)
        if level > 0:
            filtered = filtered / level
        stride = max(1, int(round(stream.sample_rate / _HIST_MAX_RATE)))
        windows = (filtered[::stride].astype(np.float32),)
    elif kind == "forest":
        seq = _spectral_sequence(stream, config)
        span_frames = int(round(config.stack_span_s / seq.frame_period))
        n = min(span_frames, len(seq))
        windows = (stack_window(seq, n * seq.frame_period),)
    elif kind == "hmm":
        seq = _spectral_sequence(stream, config)
        windows = (seq.vectors,)
    elif kind == "lstm":
        amp = amplitude_matrix(stream)
        pool = config.lstm.pool_factor
        usable = (amp.shape[0] // pool) * pool
        pooled = amp[:usable].reshape(-1, pool, amp.shape[1]).mean(axis=1)
        rate = stream.sample_rate / pool
        steps = int(round(config.lstm.window_s * rate))
        if pooled.shape[0] < steps:
            raise SeriesTooShort(
                f"trial {stream.trial_id!r}: {pooled.shape[0]} pooled steps < window {steps}"
            )
        start = min(int(round(config.lstm.window_offset_s * rate)), pooled.shape[0] - steps)
        windows = (znormalize(pooled[start : start + steps]).astype(np.float32),)
    else:
        raise UsageError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return TrialFeatures(
        label=stream.label,
        subject_id=stream.subject_id,
        trial_id=stream.trial_id or "",
        windows=windows,
    )


def featurize_dataset(dataset: LabeledDataset | Iterable[CsiStream], kind: str, config: PipelineConfig) -> list[TrialFeatures]:
    feats = []
    for i, stream in enumerate(dataset):
        if stream.trial_id is None:
            stream = stream.with_meta(trial_id=f"trial-{i}")
        feats.append(featurize_trial(stream, kind, config))
    return feats


# ---------------------------------------------------------------------------
# training / prediction dispatch


def train_model(kind: str, feats: Sequence[TrialFeatures], config: PipelineConfig):
    windows = [w for f in feats for w in f.windows]
    labels = [f.label for f in feats for _ in f.windows]
    if kind == "hist":
        return clf.hist_fit(windows, labels, n_bins=config.hist_bins, n_groups=config.n_rx)
    if kind == "forest":
        return clf.forest_fit(
            np.asarray(windows, dtype=float),
            labels,
            n_trees=config.forest_trees,
            seed=config.seed,
            min_leaf=config.forest_min_leaf,
        )
    if kind == "hmm":
        return clf.hmm_fit(
            windows,
            labels,
            n_states=config.hmm_states,
            max_iter=config.hmm_max_iter,
            tol=config.hmm_tol,
            seed=config.seed,
        )
    if kind == "lstm":
        train_cfg = clf.TrainConfig(
            batch_size=config.lstm.batch_size,
            learning_rate=config.lstm.learning_rate,
            epochs=config.lstm.epochs,
            seed=config.seed,
            clip_norm=config.lstm.clip_norm,
        )
        model, _ = clf.lstm_fit(
            np.asarray(windows, dtype=np.dtype(config.lstm.dtype)),
            labels,
            train_cfg,
            hidden=config.lstm.hidden,
            dtype=np.dtype(config.lstm.dtype),
        )
        return model
    raise UsageError(f"unknown model kind {kind!r}")


def _predict_windows(kind: str, model, feats: Sequence[TrialFeatures]) -> list[list]:
    """Per-trial lists of window predictions."""
    if kind == "lstm":
        stacked = np.asarray([w for f in feats for w in f.windows], dtype=model.dtype)
        flat = clf.lstm_predict_batch(model, stacked)
        out = []
        pos = 0
        for f in feats:
            out.append(flat[pos : pos + len(f.windows)])
            pos += len(f.windows)
        return out
    predict: Callable
    if kind == "hist":
        predict = lambda w: clf.hist_predict(model, w)
    elif kind == "forest":
        predict = lambda w: clf.forest_predict(model, w)
    elif kind == "hmm":
        predict = lambda w: clf.hmm_predict(model, w)
    else:
        raise UsageError(f"unknown model kind {kind!r}")
    return [[predict(w) for w in f.windows] for f in feats]


def _majority(votes: Sequence, label_order: Sequence):
    order = {l: i for i, l in enumerate(label_order)}
    counts: dict = {}
    for v in votes:
        counts[v] = counts.get(v, 0) + 1
    return max(counts, key=lambda l: (counts[l], -order.get(l, len(order))))


# ---------------------------------------------------------------------------
# splits


def parse_split(spec: str) -> tuple[str, float | int | None]:
    name, _, arg = spec.partition(":")
    name = name.strip().lower()
    if name == "kfold":
        try:
            k = int(arg)
        except ValueError:
            raise UsageError(f"kfold split needs an integer fold count, got {arg!r}")
        return "kfold", k
    if name == "loso":
        return "loso", None
    if name == "fixed":
        try:
            frac = float(arg) if arg else 0.7
        except ValueError:
            raise UsageError(f"fixed split needs a train fraction, got {arg!r}")
        return "fixed", frac
    raise UsageError(f"unknown split spec {spec!r}; use kfold:<k>, loso, or fixed:<frac>")


def make_folds(feats: Sequence[TrialFeatures], split: str, seed: int = 0) -> list[tuple[list[int], list[int]]]:
    """(train_indices, test_indices) pairs for the requested split."""
    kind, arg = parse_split(split)
    n = len(feats)
    if kind == "kfold":
        k = int(arg)
        if k < 2 or k > n:
            raise SplitImpossible(f"cannot make {k} folds from {n} trials")
        rng = np.random.default_rng([401, int(seed)])
        fold_of = np.empty(n, dtype=int)
        by_label: dict = {}
        for i, f in enumerate(feats):
            by_label.setdefault(f.label, []).append(i)
        cursor = 0
        for label in sorted_labels(list(by_label)):
            idx = np.array(by_label[label])
            rng.shuffle(idx)
            for j, i in enumerate(idx):
                fold_of[i] = (cursor + j) % k
            cursor += len(idx)
        folds = []
        for fold in range(k):
            test = [i for i in range(n) if fold_of[i] == fold]
            train = [i for i in range(n) if fold_of[i] != fold]
            if not test or not train:
                raise SplitImpossible(f"fold {fold} is empty with {n} trials in {k} folds")
            folds.append((train, test))
        return folds
    if kind == "loso":
        subjects = sorted({f.subject_id for f in feats}, key=str)
        if len(subjects) < 2 or None in subjects:
            raise SplitImpossible(
                "leave-one-subject-out needs >= 2 identified subjects on every trial"
            )
        folds = []
        for subject in subjects:
            test = [i for i, f in enumerate(feats) if f.subject_id == subject]
            train = [i for i, f in enumerate(feats) if f.subject_id != subject]
            folds.append((train, test))
        return folds
    # fixed split
    frac = float(arg)
    if not 0 < frac < 1:
        raise SplitImpossible(f"fixed split fraction must be in (0, 1), got {frac}")
    rng = np.random.default_rng([402, int(seed)])
    order = rng.permutation(n)
    cut = int(round(frac * n))
    if cut == 0 or cut == n:
        raise SplitImpossible(f"fixed split {frac} leaves an empty side for {n} trials")
    return [(list(map(int, order[:cut])), list(map(int, order[cut:])))]


def _check_disjoint(train: Sequence[TrialFeatures], test: Sequence[TrialFeatures]) -> None:
    train_ids = {f.trial_id for f in train}
    test_ids = {f.trial_id for f in test}
    overlap = train_ids & test_ids
    if overlap:
        raise SplitImpossible(f"trial ids appear in both train and test: {sorted(overlap)[:5]}")


# ---------------------------------------------------------------------------
# evaluation


def evaluate_features(
    kind: str,
    feats: Sequence[TrialFeatures],
    split: str,
    config: PipelineConfig,
    seed: int | None = None,
) -> EvalResult:
    """Cross-validated evaluation over precomputed per-trial features."""
    seed = config.seed if seed is None else seed
    labels_present = sorted_labels([f.label for f in feats])
    if len(labels_present) < 2:
        raise SplitImpossible(f"evaluation needs >= 2 classes, got {labels_present}")
    folds = make_folds(feats, split, seed=seed)

    trial_actual: list = []
    trial_pred: list = []
    window_actual: list = []
    window_pred: list = []
    for train_idx, test_idx in folds:
        train = [feats[i] for i in train_idx]
        test = [feats[i] for i in test_idx]
        _check_disjoint(train, test)
        model = train_model(kind, train, config)
        votes_per_trial = _predict_windows(kind, model, test)
        for f, votes in zip(test, votes_per_trial):
            trial_actual.append(f.label)
            trial_pred.append(_majority(votes, labels_present))
            window_actual.extend([f.label] * len(votes))
            window_pred.extend(votes)
    return EvalResult(
        kind=kind,
        trial_confusion=ConfusionMatrix.from_pairs(trial_actual, trial_pred, labels_present),
        window_confusion=ConfusionMatrix.from_pairs(window_actual, window_pred, labels_present),
    )


def evaluate(
    kind: str,
    dataset: LabeledDataset,
    split: str,
    config: PipelineConfig | None = None,
    seed: int | None = None,
) -> EvalResult:
    """Featurize a labeled dataset for ``kind`` and cross-validate it."""
    config = config or PipelineConfig()
    feats = featurize_dataset(dataset, kind, config)
    return evaluate_features(kind, feats, split, config, seed=seed)


def benchmark_frame_rate(
    dataset: LabeledDataset,
    rates: Sequence[float],
    kind: str = "forest",
    config: PipelineConfig | None = None,
    split: str = "loso",
    seed: int | None = None,
) -> list[dict]:
    """Evaluate the same trials resampled to each rate; rows sorted by rate.

    Decimating a 1 kHz capture toward tens of hertz folds fast-motion
    energy and should visibly hurt the fast classes.
    """
    config = config or PipelineConfig()
    rows = []
    for rate in sorted(float(r) for r in rates):
        trials = []
        for stream in dataset:
            if abs(rate - stream.sample_rate) < 1e-9:
                trials.append(stream)
            else:
                trials.append(regularize(stream, rate))
        result = evaluate(kind, LabeledDataset(tuple(trials)), split, config, seed=seed)
        row = {"rate": rate, "macro_accuracy": result.macro_accuracy}
        row.update({_label_str(l): a for l, a in result.per_class_accuracy().items()})
        rows.append(row)
    return rows


def frame_rate_table_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return "rate,macro_accuracy\n"
    keys = ["rate", "macro_accuracy"] + [k for k in rows[0] if k not in ("rate", "macro_accuracy")]
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join(f"{row[k]:.6f}" if isinstance(row[k], float) else str(row[k]) for k in keys))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# synthetic benchmark assembly


BENCHMARK_LABELS = (
    ActivityLabel.LAY_DOWN,
    ActivityLabel.FALL,
    ActivityLabel.WALK,
    ActivityLabel.RUN,
    ActivityLabel.SIT_DOWN,
    ActivityLabel.STAND_UP,
)


def build_synthetic_features(
    kinds: Sequence[str],
    config: PipelineConfig,
    subjects: int = 6,
    trials_per: int = 20,
    labels: Sequence[ActivityLabel] = BENCHMARK_LABELS,
    extra_rates: Sequence[float] = (),
    extra_rate_kind: str = "forest",
) -> tuple[dict[str, list[TrialFeatures]], dict[float, list[TrialFeatures]]]:
    """Stream the synthetic benchmark: synthesize each trial, featurize for
    every requested kind, and drop the raw stream immediately.

    Each subject is one preset seed (its own speeds/gains/timing); trials
    differ by noise realization. Returns per-kind features at the native
    rate plus, for each extra rate, features for ``extra_rate_kind`` on the
    resampled trials.
    """
    per_kind: dict[str, list[TrialFeatures]] = {k: [] for k in kinds}
    per_rate: dict[float, list[TrialFeatures]] = {float(r): [] for r in extra_rates}
    for subject in range(subjects):
        for label in labels:
            for trial in range(trials_per):
                label_idx = list(ActivityLabel).index(label)
                trial_seed = ((subject * len(ActivityLabel) + label_idx) * trials_per + trial) + 1
                scenario = scenario_preset(label, seed=subject, geometry_seed=trial_seed)
                stream = synthesize(
                    scenario,
                    sample_rate=config.sample_rate,
                    center_frequency=config.center_frequency,
                    dims=config.dims,
                    subcarrier_spacing=config.subcarrier_spacing,
                    seed=trial_seed,
                    subject_id=f"s{subject}",
                    trial_id=f"s{subject}-{label.value}-{trial}",
                )
                for kind in kinds:
                    per_kind[kind].append(featurize_trial(stream, kind, config))
                for rate in per_rate:
                    slow = regularize(stream, rate)
                    per_rate[rate].append(featurize_trial(slow, extra_rate_kind, config))
    return per_kind, per_rate
