"""Per-class hidden Markov models with diagonal-Gaussian emissions.

One model is trained per activity class on that class's feature sequences
via Baum-Welch (EM); classification picks the class whose model gives the
sequence the highest forward log-likelihood. All forward/backward passes
run in log space, so long sequences cannot underflow.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from ..errors import DataError, EmptyClass, NumericalUnderflow
from ..model import sorted_labels

DEFAULT_STATES = 5
DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-4
VAR_FLOOR = 1e-6
_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class HmmParams:
    """One class's model: start distribution, transitions, emission Gaussians."""

    start: np.ndarray  # (K,)
    transition: np.ndarray  # (K, K), rows sum to 1
    means: np.ndarray  # (K, D)
    variances: np.ndarray  # (K, D), floored

    def __post_init__(self) -> None:
        for name in ("start", "transition", "means", "variances"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_states(self) -> int:
        return self.start.shape[0]


@dataclass(frozen=True)
class HmmModel:
    labels: tuple
    n_states: int
    params: tuple[HmmParams, ...]  # aligned with labels

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "wisense-hmm",
                "version": 1,
                "labels": [getattr(l, "value", l) for l in self.labels],
                "n_states": self.n_states,
                "params": [
                    {
                        "start": p.start.tolist(),
                        "transition": p.transition.tolist(),
                        "means": p.means.tolist(),
                        "variances": p.variances.tolist(),
                    }
                    for p in self.params
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str, label_type=None) -> "HmmModel":
        obj = json.loads(text)
        if obj.get("format") != "wisense-hmm":
            raise ValueError("not an HMM model file")
        labels = obj["labels"]
        if label_type is not None:
            labels = [label_type(l) for l in labels]
        params = tuple(
            HmmParams(
                start=np.asarray(p["start"]),
                transition=np.asarray(p["transition"]),
                means=np.asarray(p["means"]),
                variances=np.asarray(p["variances"]),
            )
            for p in obj["params"]
        )
        return cls(labels=tuple(labels), n_states=obj["n_states"], params=params)


def _emission_logprob(params: HmmParams, seq: np.ndarray) -> np.ndarray:
    """(T, K) log density of each frame under each state's diagonal Gaussian."""
    diff = seq[:, None, :] - params.means[None, :, :]  # (T, K, D)
    inv = 1.0 / params.variances
    quad = (diff**2 * inv[None]).sum(axis=2)
    norm = (np.log(params.variances).sum(axis=1) + params.means.shape[1] * _LOG_2PI)
    return -0.5 * (quad + norm[None, :])


def _forward_log(params: HmmParams, log_b: np.ndarray) -> tuple[np.ndarray, float]:
    log_a = np.log(np.maximum(params.transition, 1e-300))
    log_pi = np.log(np.maximum(params.start, 1e-300))
    t_len = log_b.shape[0]
    alpha = np.empty_like(log_b)
    alpha[0] = log_pi + log_b[0]
    for t in range(1, t_len):
        alpha[t] = log_b[t] + logsumexp(alpha[t - 1][:, None] + log_a, axis=0)
    total = float(logsumexp(alpha[-1]))
    if not np.isfinite(total):
        raise NumericalUnderflow("forward pass produced non-finite log-likelihood")
    return alpha, total


def _backward_log(params: HmmParams, log_b: np.ndarray) -> np.ndarray:
    log_a = np.log(np.maximum(params.transition, 1e-300))
    t_len = log_b.shape[0]
    beta = np.zeros_like(log_b)
    for t in range(t_len - 2, -1, -1):
        beta[t] = logsumexp(log_a + (log_b[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def sequence_loglik(params: HmmParams, seq: np.ndarray) -> float:
    """Forward-algorithm log-likelihood of one (T, D) sequence."""
    seq = np.asarray(seq, dtype=float)
    if seq.ndim == 1:
        seq = seq[:, None]
    _, total = _forward_log(params, _emission_logprob(params, seq))
    return total


def _init_params(seqs: list[np.ndarray], n_states: int, seed: int) -> HmmParams:
    """Segment-based init: state k starts near the mean of the k-th time slice."""
    rng = np.random.default_rng([211, int(seed)])
    dim = seqs[0].shape[1]
    chunks = [[] for _ in range(n_states)]
    for seq in seqs:
        bounds = np.linspace(0, seq.shape[0], n_states + 1).astype(int)
        for k in range(n_states):
            chunks[k].append(seq[bounds[k] : max(bounds[k] + 1, bounds[k + 1])])
    pooled = np.concatenate([s for seq_list in chunks for s in seq_list])
    global_var = np.maximum(pooled.var(axis=0), VAR_FLOOR)
    means = np.stack([np.concatenate(c).mean(axis=0) for c in chunks])
    means = means + rng.normal(scale=0.01, size=means.shape) * np.sqrt(global_var)
    transition = np.full((n_states, n_states), 0.2 / max(n_states - 1, 1))
    np.fill_diagonal(transition, 0.8)
    transition /= transition.sum(axis=1, keepdims=True)
    return HmmParams(
        start=np.full(n_states, 1.0 / n_states),
        transition=transition,
        means=means,
        variances=np.tile(global_var, (n_states, 1)),
    )


def fit_single_hmm(
    sequences: Sequence[np.ndarray],
    n_states: int,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    init: HmmParams | None = None,
) -> tuple[HmmParams, list[float]]:
    """Baum-Welch on a set of sequences; returns params and the log-likelihood trace.

    The trace is checked for monotonicity (an EM guarantee) as it is built.
    """
    seqs = [np.asarray(s, dtype=float) for s in sequences]
    seqs = [s[:, None] if s.ndim == 1 else s for s in seqs]
    if not seqs:
        raise EmptyClass("cannot fit an HMM on zero sequences")
    if any(s.shape[0] < n_states for s in seqs):
        raise DataError(f"every sequence must have length >= n_states ({n_states})")
    params = init if init is not None else _init_params(seqs, n_states, seed)
    trace: list[float] = []

    for _ in range(max_iter):
        total_ll = 0.0
        gamma0 = np.zeros(n_states)
        xi_sum = np.zeros((n_states, n_states))
        gamma_sum = np.zeros(n_states)
        mean_acc = np.zeros_like(params.means)
        sq_acc = np.zeros_like(params.variances)

        log_a = np.log(np.maximum(params.transition, 1e-300))
        for seq in seqs:
            log_b = _emission_logprob(params, seq)
            alpha, ll = _forward_log(params, log_b)
            beta = _backward_log(params, log_b)
            total_ll += ll

            log_gamma = alpha + beta - ll
            gamma = np.exp(log_gamma)
            gamma0 += gamma[0]
            gamma_sum += gamma.sum(axis=0)
            mean_acc += gamma.T @ seq
            sq_acc += gamma.T @ (seq**2)

            if seq.shape[0] > 1:
                # xi[t,i,j] ~ alpha[t,i] + logA[i,j] + logB[t+1,j] + beta[t+1,j]
                stacked = (
                    alpha[:-1, :, None]
                    + log_a[None, :, :]
                    + (log_b[1:] + beta[1:])[:, None, :]
                    - ll
                )
                xi_sum += np.exp(logsumexp(stacked, axis=0))

        trace.append(total_ll)
        if len(trace) > 1:
            if trace[-1] < trace[-2] - 1e-6 * max(1.0, abs(trace[-2])):
                raise NumericalUnderflow(
                    f"EM log-likelihood decreased: {trace[-2]} -> {trace[-1]}"
                )
            if trace[-1] - trace[-2] < tol:
                break

        start = gamma0 / gamma0.sum()
        rowsum = xi_sum.sum(axis=1, keepdims=True)
        transition = np.where(rowsum > 0, xi_sum / np.maximum(rowsum, 1e-300), params.transition)
        transition /= transition.sum(axis=1, keepdims=True)
        denom = np.maximum(gamma_sum[:, None], 1e-300)
        means = mean_acc / denom
        variances = np.maximum(sq_acc / denom - means**2, VAR_FLOOR)
        params = HmmParams(start=start, transition=transition, means=means, variances=variances)

    return params, trace


def hmm_fit(
    sequences: Sequence[np.ndarray],
    labels: Sequence,
    n_states: int = DEFAULT_STATES,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    classes: Sequence | None = None,
) -> HmmModel:
    """Train one HMM per class on that class's sequences."""
    ordered = tuple(classes) if classes is not None else sorted_labels(labels)
    params = []
    for label in ordered:
        class_seqs = [s for s, l in zip(sequences, labels) if l == label]
        if not class_seqs:
            raise EmptyClass(f"no training sequences for class {label}")
        fitted, _ = fit_single_hmm(class_seqs, n_states, max_iter=max_iter, tol=tol, seed=seed)
        params.append(fitted)
    return HmmModel(labels=ordered, n_states=n_states, params=tuple(params))


def hmm_predict(model: HmmModel, sequence: np.ndarray):
    """Class with the highest forward log-likelihood; ties to the lower index."""
    scores = [sequence_loglik(p, sequence) for p in model.params]
    return model.labels[int(np.argmax(scores))]


def sample_hmm(params: HmmParams, length: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Draw (observations, states) from the model; handy for oracle tests."""
    rng = np.random.default_rng(seed)
    states = np.empty(length, dtype=int)
    obs = np.empty((length, params.means.shape[1]))
    states[0] = rng.choice(params.n_states, p=params.start)
    for t in range(1, length):
        states[t] = rng.choice(params.n_states, p=params.transition[states[t - 1]])
    for t in range(length):
        k = states[t]
        obs[t] = rng.normal(params.means[k], np.sqrt(params.variances[k]))
    return obs, states
