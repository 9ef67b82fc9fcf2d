"""Benchmark harness for early classification of time series: per-timestamp
calibrated classifiers composed with pluggable trigger functions, priced
under configurable misclassification/delay cost models."""

from .core import (
    CostModel,
    Decision,
    DelayCurve,
    EvalRecord,
    LabeledSeries,
    SampledTimeline,
    anomaly_cost_model,
    delay_cost,
    loss,
    misclassification_cost,
    standard_cost_model,
    weighted_loss,
)

__all__ = [
    "CostModel",
    "Decision",
    "DelayCurve",
    "EvalRecord",
    "LabeledSeries",
    "SampledTimeline",
    "anomaly_cost_model",
    "delay_cost",
    "loss",
    "misclassification_cost",
    "standard_cost_model",
    "weighted_loss",
]

__version__ = "0.1.0"
