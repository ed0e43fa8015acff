#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Euler scheme for the reflected diffusion dZ = b(Z) dt + sigma(Z) dW + dY on R_+.

Drift and volatility are step functions of the level (left-continuous, as
in the queue profile). An ensemble of independent paths is advanced together,
each one strictly sequentially.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Tuple

import numpy as np

from app.utils.common import make_generator
from app.utils.config import config
from app.utils.errors import NotIntegrableError
from app.utils.interrupt import check_interrupted

if TYPE_CHECKING:
    from app.utils.analyzer import LimitDensity

REFLECTIONS = ("mirror", "projection")


@dataclass(frozen=True)
class DiffusionConfig:
    """
    Reflected Euler run settings.

    Attributes:
        levels (tuple): Breakpoints of the step coefficients
        b (tuple): Drift per segment (len(levels) + 1)
        sigma2 (tuple): Squared volatility per segment
        step (float): Time step Delta
        steps (int): Steps per path, burn-in included
        burn_in (int): Steps discarded per path
        seed (int): Experiment seed
        paths (int): Independent paths advanced together
        reflection (str): "mirror" (|x|) or "projection" (max(0, x))
        epsilon (float): Level above which reflection counts against complementarity
        bin_width (float): Histogram bin width
    """

    levels: Tuple[float, ...]
    b: Tuple[float, ...]
    sigma2: Tuple[float, ...]
    step: float
    steps: int
    burn_in: int = 0
    seed: int = 0
    paths: int = 1
    reflection: str = "mirror"
    epsilon: float = 0.01
    bin_width: float = 0.01

    @classmethod
    def from_density(cls, density: "LimitDensity", step: float, steps: int, burn_in: int = 0, seed: int = 0, paths: int = 1, **kwargs) -> "DiffusionConfig":
        """Take drift and volatility from a limit density's segments."""
        return cls(
            levels=tuple(float(level) for level in density.profile.levels),
            b=tuple(float(v) for v in density.b),
            sigma2=tuple(float(v) for v in density.sigma2),
            step=step,
            steps=steps,
            burn_in=burn_in,
            seed=seed,
            paths=paths,
            reflection=kwargs.get("reflection", str(config.diffusion.reflection).lower()),
            epsilon=kwargs.get("epsilon", float(config.diffusion.epsilon)),
            bin_width=kwargs.get("bin_width", float(config.diffusion.binWidth)),
        )

    def validate(self) -> None:
        """
        Raises:
            ValueError: For a step >= diffusion.maxStep or other invalid settings
            NotIntegrableError: If the tail drift is not negative
        """
        errors = []
        max_step = float(config.diffusion.maxStep)
        if not 0 < self.step < max_step:
            errors.append(f"step must lie in (0, {max_step}), got {self.step}")
        if self.steps < 0 or self.burn_in < 0 or self.paths < 1:
            errors.append("steps and burn_in must be nonnegative and paths at least 1")
        if len(self.b) != len(self.levels) + 1 or len(self.sigma2) != len(self.levels) + 1:
            errors.append("b and sigma2 need one value per segment")
        if any(s <= 0 for s in self.sigma2):
            errors.append("sigma2 must be positive")
        if self.reflection not in REFLECTIONS:
            errors.append(f"reflection must be one of: {', '.join(REFLECTIONS)}")
        if self.bin_width <= 0:
            errors.append("bin_width must be positive")
        if errors:
            raise ValueError("Invalid diffusion configuration: " + "; ".join(errors))
        if self.b[-1] >= 0:
            raise NotIntegrableError(f"Reflected diffusion has no stationary law: tail drift {self.b[-1]:.6g} must be negative")


@dataclass
class HistogramLaw:
    """
    Histogram of stored states plus boundary statistics.

    Attributes:
        bin_width (float): Bin width
        counts (np.ndarray): Samples per bin [k w, (k + 1) w)
        samples (int): Stored states
        reflection_total (float): Sum of all regulator increments (Y total)
        complementarity (float): Average of 1(Z_k > epsilon) times the increment at k
        at_zero (float): Fraction of stored states equal to 0
        min_state (float): Smallest stored state
    """

    bin_width: float
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    samples: int = 0
    reflection_total: float = 0.0
    complementarity: float = 0.0
    at_zero: float = 0.0
    min_state: float = math.inf
    seed: Optional[int] = None
    reflection: str = "mirror"

    @property
    def is_empty(self) -> bool:
        return self.samples == 0

    def masses(self) -> np.ndarray:
        return self.counts / self.samples if self.samples else self.counts.astype(float)

    def centers(self) -> np.ndarray:
        return (np.arange(len(self.counts)) + 0.5) * self.bin_width

    def density(self) -> np.ndarray:
        return self.masses() / self.bin_width

    def cdf(self, u) -> np.ndarray:
        """Piecewise-linear CDF of the histogram."""
        masses = self.masses()
        if not len(masses):
            return np.zeros_like(np.asarray(u, dtype=float))
        position = np.clip(np.asarray(u, dtype=float) / self.bin_width, 0.0, None)
        cell = np.floor(position).astype(int)
        cumulative = np.concatenate(([0.0], np.cumsum(masses)))
        below = cumulative[np.minimum(cell, len(masses))]
        inside = np.where(cell < len(masses), masses[np.minimum(cell, len(masses) - 1)], 0.0)
        return below + inside * (position - cell)

    def edges(self) -> np.ndarray:
        return np.arange(len(self.counts) + 1) * self.bin_width

    def to_csv_rows(self) -> List[Dict[str, Any]]:
        masses = self.masses()
        return [
            {"ell": k, "scaled_u": k * self.bin_width, "mass": float(m), "density": float(m) / self.bin_width}
            for k, m in enumerate(masses)
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bin_width": self.bin_width,
            "samples": self.samples,
            "seed": self.seed,
            "reflection": self.reflection,
            "reflection_total": self.reflection_total,
            "complementarity": self.complementarity,
            "at_zero": self.at_zero,
            "min_state": None if math.isinf(self.min_state) else self.min_state,
            "counts": self.counts.tolist(),
        }


def simulate_rbm(cfg: DiffusionConfig, chunk: int = 512) -> HistogramLaw:
    """
    Run the reflected Euler recursion and histogram the post-burn-in states.

    mirror:     Z_{k+1} = |Z_k + b(Z_k) Delta + sigma(Z_k) sqrt(Delta) xi_k|, increment 2 max(0, -x)
    projection: Z_{k+1} = max(0, Z_k + b(Z_k) Delta + sigma(Z_k) sqrt(Delta) xi_k), increment max(0, -x)

    All paths start at 0.

    Parameters:
        cfg (DiffusionConfig): Run settings
        chunk (int): Steps drawn and histogrammed per batch

    Returns:
        HistogramLaw: Stationary histogram and boundary statistics
    """
    cfg.validate()
    law = HistogramLaw(bin_width=cfg.bin_width, seed=cfg.seed, reflection=cfg.reflection)
    if cfg.steps == 0:
        return law

    rng = make_generator(cfg.seed, 0)
    levels = np.asarray(cfg.levels, dtype=float)
    drift = np.asarray(cfg.b, dtype=float) * cfg.step
    scale = np.sqrt(np.asarray(cfg.sigma2, dtype=float) * cfg.step)
    mirror = cfg.reflection == "mirror"
    check_every = int(config.simulation.interruptCheckEvery)

    z = np.zeros(cfg.paths)
    counts = np.zeros(0, dtype=np.int64)
    stored = 0
    zeros = 0
    regulator = 0.0
    off_boundary = 0.0
    min_state = math.inf
    since_check = 0

    logging.debug(
        f"Reflected Euler: {cfg.paths} paths x {cfg.steps} steps, Delta={cfg.step}, {cfg.reflection} reflection",
        extra={"indent": 2},
    )

    done = 0
    while done < cfg.steps:
        size = min(chunk, cfg.steps - done)
        noise = rng.standard_normal((size, cfg.paths))
        block = np.empty((size, cfg.paths))
        increments = np.empty((size, cfg.paths))
        away = np.empty((size, cfg.paths), dtype=bool)
        for i in range(size):
            idx = np.searchsorted(levels, z, side="left")
            away[i] = z > cfg.epsilon
            x = z + drift[idx] + scale[idx] * noise[i]
            negative = np.maximum(-x, 0.0)
            if mirror:
                z = np.abs(x)
                increments[i] = 2.0 * negative
            else:
                z = np.maximum(x, 0.0)
                increments[i] = negative
            block[i] = z

        keep = np.arange(done, done + size) >= cfg.burn_in
        if keep.any():
            kept = block[keep].ravel()
            bins = np.floor(kept / cfg.bin_width).astype(np.int64)
            binned = np.bincount(bins)
            if len(binned) > len(counts):
                counts = np.concatenate((counts, np.zeros(len(binned) - len(counts), dtype=np.int64)))
            counts[: len(binned)] += binned
            stored += kept.size
            zeros += int(np.count_nonzero(kept == 0.0))
            min_state = min(min_state, float(kept.min()))
            regulator += float(increments[keep].sum())
            off_boundary += float((increments[keep] * away[keep]).sum())

        done += size
        since_check += size
        if since_check >= check_every:
            since_check = 0
            check_interrupted()
            logging.debug(f"Reflected Euler: {done}/{cfg.steps} steps", extra={"indent": 4})

    law.counts = counts
    law.samples = stored
    law.reflection_total = regulator
    law.complementarity = off_boundary / stored if stored else 0.0
    law.at_zero = zeros / stored if stored else 0.0
    law.min_state = min_state
    return law
