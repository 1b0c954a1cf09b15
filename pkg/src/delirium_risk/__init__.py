"""Delirium risk toolkit: ICD cohorts, Charlson profiles, survival curves and a numpy LSTM."""

__version__ = "0.1.0"
