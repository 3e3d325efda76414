"""Metrics, key-instance retrieval and the two baselines."""

from .forest import Forest, RFConfig, rf_predict, rf_train
from .metrics import MetricsReport, accuracy, auprc, auroc, classification_report
from .retrieval import RetrievalReport, lowest_energy_baseline, retrieval_report, topk_retrieval

__all__ = [
    "Forest",
    "RFConfig",
    "rf_predict",
    "rf_train",
    "MetricsReport",
    "accuracy",
    "auprc",
    "auroc",
    "classification_report",
    "RetrievalReport",
    "lowest_energy_baseline",
    "retrieval_report",
    "topk_retrieval",
]
