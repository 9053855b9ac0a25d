"""Quantitative EEG background analysis with rule-based abnormality detection
and language-model report generation."""

__version__ = "0.1.0"
