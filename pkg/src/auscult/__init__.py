"""Auscultation audio to six biosignals, window features and tree-ensemble LOSO evaluation."""

__version__ = "0.1.0"
