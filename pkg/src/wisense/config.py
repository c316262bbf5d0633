"""Declarative pipeline configuration: one JSON document drives every stage.

Values are validated (types, ranges) before any run; unknown keys are
rejected so typos fail loudly. The WISENSE_SEED environment variable, when
set, overrides the seed at CLI level.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

SEED_ENV_VAR = "WISENSE_SEED"


@dataclass(frozen=True)
class LstmSettings:
    hidden: int = 200
    batch_size: int = 200
    learning_rate: float = 1e-4
    epochs: int = 10
    clip_norm: float = 5.0
    pool_factor: int = 5  # mean-pool raw 1 kHz amplitudes by this factor
    window_s: float = 2.0
    window_offset_s: float = 0.3  # window start into the trial, clipped to fit
    dtype: str = "float64"


@dataclass(frozen=True)
class PipelineConfig:
    # capture / simulation geometry
    sample_rate: float = 1000.0
    center_frequency: float = 5.0e9
    n_rx: int = 3
    n_tx: int = 1
    n_subcarriers: int = 30
    subcarrier_spacing: float = 1.25e6
    # preprocessing
    lowpass_cutoff_hz: float = 150.0
    pca_keep: tuple[int, ...] = (1, 2, 3, 4, 5)
    # spectral features
    stft_window: int = 128
    stft_fft: int = 256
    hop_ms: float = 50.0
    stack_span_s: float = 2.0
    # wavelet features
    dwt_levels: int = 12
    dwt_interval_s: float = 0.2
    # classifiers
    hist_bins: int = 64
    forest_trees: int = 100
    forest_min_leaf: int = 2
    hmm_states: int = 5
    hmm_max_iter: int = 100
    hmm_tol: float = 1e-4
    lstm: LstmSettings = field(default_factory=LstmSettings)
    # reproducibility
    seed: int = 0

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.n_rx, self.n_tx, self.n_subcarriers)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "lstm" in kwargs:
            lstm_raw = kwargs["lstm"]
            if not isinstance(lstm_raw, dict):
                raise ConfigError("config key 'lstm' must be an object")
            lstm_known = {f.name for f in fields(LstmSettings)}
            lstm_unknown = set(lstm_raw) - lstm_known
            if lstm_unknown:
                raise ConfigError(f"unknown lstm config keys: {sorted(lstm_unknown)}")
            kwargs["lstm"] = LstmSettings(**lstm_raw)
        if "pca_keep" in kwargs:
            kwargs["pca_keep"] = tuple(kwargs["pca_keep"])
        config = cls(**kwargs)
        config.validate()
        return config

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_json(Path(path).read_text())

    def validate(self) -> None:
        checks = [
            (self.sample_rate > 0, "sample_rate must be > 0"),
            (self.center_frequency > 0, "center_frequency must be > 0"),
            (self.n_rx >= 1 and self.n_tx >= 1 and self.n_subcarriers >= 1, "antenna/subcarrier counts must be >= 1"),
            (0 < self.lowpass_cutoff_hz < self.sample_rate / 2, "lowpass cutoff must lie in (0, sample_rate/2)"),
            (len(self.pca_keep) >= 1 and min(self.pca_keep) >= 0, "pca_keep must be non-negative indices"),
            (0 < self.stft_window <= self.stft_fft, "need 0 < stft_window <= stft_fft"),
            (self.hop_ms > 0, "hop_ms must be > 0"),
            (self.stack_span_s > 0, "stack_span_s must be > 0"),
            (self.dwt_levels >= 1, "dwt_levels must be >= 1"),
            (self.dwt_interval_s > 0, "dwt_interval_s must be > 0"),
            (self.hist_bins >= 2, "hist_bins must be >= 2"),
            (self.forest_trees >= 1 and self.forest_min_leaf >= 1, "forest settings must be >= 1"),
            (self.hmm_states >= 1 and self.hmm_max_iter >= 1 and self.hmm_tol > 0, "hmm settings invalid"),
            (self.lstm.hidden >= 1 and self.lstm.batch_size >= 1, "lstm hidden/batch must be >= 1"),
            (self.lstm.learning_rate > 0 and self.lstm.clip_norm > 0, "lstm rates must be > 0"),
            (self.lstm.epochs >= 1 and self.lstm.pool_factor >= 1, "lstm epochs/pool_factor must be >= 1"),
            (self.lstm.window_s > 0, "lstm window_s must be > 0"),
            (self.lstm.dtype in ("float32", "float64"), "lstm dtype must be float32 or float64"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
