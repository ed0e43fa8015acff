#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Exceptions raised by the sdq models, engines and analyzers."""

from typing import List, Optional


class ConfigError(ValueError):
    """
    Raised when an experiment description fails validation.

    All problems found during one validation pass are collected so that a
    single error names every offending field.

    Parameters:
        errors (List[str]): One message per offending field, each starting
                            with the field path (e.g. "model.regions[1].mu")
    """

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("Invalid experiment configuration:\n  - " + "\n  - ".join(self.errors))


class UnstableSystemError(RuntimeError):
    """Raised when a simulation is requested for a system with gamma_inf >= 0 without an override."""

    def __init__(self, gamma_inf: Optional[float], message: Optional[str] = None):
        self.gamma_inf = gamma_inf
        super().__init__(
            message
            or f"System is not stable (gamma_inf = {gamma_inf}); rerun with --allow-unstable to simulate anyway"
        )


class QueueOverflowError(RuntimeError):
    """Raised when the simulated queue length exceeds the configured cap."""


class SimulationFault(RuntimeError):
    """Raised when the next event time is not finite (a zero speed reached the scheduler)."""


class NotIntegrableError(ValueError):
    """Raised when the limit density cannot be normalized (b_inf >= 0)."""


class BracketError(RuntimeError):
    """Raised when a clock equation root cannot be bracketed."""
