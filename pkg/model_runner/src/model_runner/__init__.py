"""Thin seq2seq adapter over the cbqa TrainExample/PredictionRecord JSONL formats."""

__version__ = "0.1.0"
