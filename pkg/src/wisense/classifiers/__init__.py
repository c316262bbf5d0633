"""Classifier families: histogram fingerprints, random forest, per-class
Gaussian HMMs, and a from-scratch LSTM. All models serialize losslessly."""

from .forest import ForestModel, forest_fit, forest_predict, forest_predict_batch
from .histogram import HistogramModel, hist_fit, hist_predict
from .hmm import (
    HmmModel,
    HmmParams,
    fit_single_hmm,
    hmm_fit,
    hmm_predict,
    sample_hmm,
    sequence_loglik,
)
from .lstm import (
    LstmModel,
    TrainConfig,
    load_lstm,
    lstm_fit,
    lstm_loss_and_grads,
    lstm_predict,
    lstm_predict_batch,
    read_lstm_header,
    save_lstm,
)

__all__ = [
    "ForestModel",
    "forest_fit",
    "forest_predict",
    "forest_predict_batch",
    "HistogramModel",
    "hist_fit",
    "hist_predict",
    "HmmModel",
    "HmmParams",
    "fit_single_hmm",
    "hmm_fit",
    "hmm_predict",
    "sample_hmm",
    "sequence_loglik",
    "LstmModel",
    "TrainConfig",
    "load_lstm",
    "read_lstm_header",
    "lstm_fit",
    "lstm_loss_and_grads",
    "lstm_predict",
    "lstm_predict_batch",
    "save_lstm",
]
