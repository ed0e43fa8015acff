#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Clock equations of the exponential test functions.

eta^(n)(theta) and zeta^(n)(theta) solve

    e^{theta}  E[exp(-eta  (T_A ^ n^{1/2}))] = 1
    e^{-theta} E[exp(-zeta (T_S ^ n^{1/2}))] = 1

i.e. they invert the truncated Laplace transforms at e^{-theta} and e^{theta}.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from app.utils.config import config
from app.utils.errors import BracketError
from app.utils.primitives import INFINITE_CAP, RenewalSpec

MAX_SEARCH = 1e300


@dataclass(frozen=True)
class ClockSolution:
    theta: float
    eta: float
    zeta: float
    n: int
    residuals: Tuple[float, float]
    cap: float

    def to_row(self) -> Dict[str, float]:
        return {
            "theta": self.theta,
            "n": self.n,
            "eta": self.eta,
            "zeta": self.zeta,
            "residual_eta": self.residuals[0],
            "residual_zeta": self.residuals[1],
        }


def _log_transform(spec: RenewalSpec, cap: float) -> Tuple[Callable[[float], float], Callable[[float], float]]:
    """log E[exp(-s (T ^ cap))] and its derivative in s."""

    def value(s: float) -> float:
        lt = spec.truncated_laplace(s, cap)
        if lt <= 0:
            return -math.inf
        return math.log(lt) if math.isfinite(lt) else math.inf

    def derivative(s: float) -> float:
        return spec.truncated_laplace_derivative(s, cap) / spec.truncated_laplace(s, cap)

    return value, derivative


def _bracket(G: Callable[[float], float], start: float) -> Tuple[float, float]:
    """
    Bracket the root of the decreasing function G starting from s = 0.

    The trial point moves away from 0 by doubling; a non-finite value marks a
    wall (the transform diverges or underflows), after which the trial point
    bisects towards the wall instead.

    Returns:
        Tuple[float, float]: (lo, hi) with G(lo) > 0 > G(hi), both finite
    """
    g0 = G(0.0)
    direction = 1.0 if g0 > 0 else -1.0
    near, trial, wall = 0.0, direction * start, None

    for _ in range(4000):
        g = G(trial)
        if not math.isfinite(g):
            wall = trial
            trial = 0.5 * (near + trial)
            continue
        if g * direction < 0:
            return (near, trial) if direction > 0 else (trial, near)
        near = trial
        trial = 2.0 * trial if wall is None else 0.5 * (trial + wall)
        if abs(trial) > MAX_SEARCH or (wall is not None and abs(trial - near) <= 1e-15 * abs(near)):
            break
    raise BracketError(f"Could not bracket the clock equation root (last trial s={trial:.6g})")


def _invert(spec: RenewalSpec, target_log: float, cap: float, tolerance: float, start: float) -> Tuple[float, float]:
    """
    Solve log E[exp(-s (T ^ cap))] = target_log for s.

    Returns:
        Tuple[float, float]: (root, residual of exp(-target_log) E[...] - 1)
    """
    if target_log == 0.0:
        return 0.0, 0.0
    log_lt, dlog_lt = _log_transform(spec, cap)

    def G(s: float) -> float:
        return log_lt(s) - target_log

    lo, hi = _bracket(G, start)
    root = optimize.brentq(G, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)

    # Newton polish with the analytic derivative, kept inside the bracket
    for _ in range(3):
        g = G(root)
        if abs(g) <= tolerance:
            break
        slope = dlog_lt(root)
        if not math.isfinite(slope) or slope == 0:
            break
        candidate = root - g / slope
        if not lo <= candidate <= hi:
            break
        root = candidate

    residual = math.expm1(G(root))
    return root, residual


def solve_clocks(arrival: RenewalSpec, service: RenewalSpec, theta: float, n: int, cap: Optional[float] = None) -> ClockSolution:
    """
    Solve both clock equations at theta.

    Parameters:
        arrival (RenewalSpec): T_A
        service (RenewalSpec): T_S
        theta (float): Test-function parameter
        n (int): Scaling index
        cap (float): Truncation level; defaults to n^{1/2}, INFINITE_CAP gives the untruncated transform

    Returns:
        ClockSolution: eta, zeta and the residuals e^{theta} E[...] - 1, e^{-theta} E[...] - 1

    Raises:
        ValueError: If |theta| exceeds clocks.radiusFactor * n^{1/2}
        BracketError: If a root cannot be bracketed
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    sqrt_n = math.sqrt(n)
    radius = float(config.clocks.radiusFactor) * sqrt_n
    if abs(theta) > radius:
        raise ValueError(f"|theta| = {abs(theta):.6g} exceeds the safe radius {radius:.6g} at n={n}")
    cap = sqrt_n if cap is None else cap
    tolerance = float(config.clocks.tolerance)
    start = float(config.clocks.bracket)

    if theta == 0:
        return ClockSolution(theta=0.0, eta=0.0, zeta=0.0, n=n, residuals=(0.0, 0.0), cap=cap)

    eta, residual_eta = _invert(arrival, -theta, cap, tolerance, start)
    zeta, residual_zeta = _invert(service, theta, cap, tolerance, start)
    logging.debug(f"Clocks n={n} theta={theta:.6g}: eta={eta:.15g}, zeta={zeta:.15g}", extra={"indent": 4})
    return ClockSolution(theta=theta, eta=eta, zeta=zeta, n=n, residuals=(residual_eta, residual_zeta), cap=cap)


def expansion_residual(arrival: RenewalSpec, service: RenewalSpec, theta: float, n: int, cap: Optional[float] = None) -> Tuple[float, float]:
    """
    Distance of eta^(n), zeta^(n) at n^{-1/2} theta from their second-order expansions.

    Returns:
        Tuple[float, float]: (|eta - n^{-1/2} theta - sigma_A^2 theta^2 / (2n)|,
                              |zeta + n^{-1/2} theta - sigma_S^2 theta^2 / (2n)|)
    """
    scaled = theta / math.sqrt(n)
    sol = solve_clocks(arrival, service, scaled, n, cap)
    quadratic = theta * theta / (2.0 * n)
    return (
        abs(sol.eta - scaled - arrival.scv * quadratic),
        abs(sol.zeta + scaled - service.scv * quadratic),
    )


def expansion_slope(arrival: RenewalSpec, service: RenewalSpec, theta: float, n_list: Sequence[int]) -> Dict[str, float]:
    """
    Fit log(residual) against log(n) for both expansions.

    Residuals that vanish (e.g. a deterministic clock) are left out of the fit;
    a side with fewer than two usable points reports a NaN slope.

    Returns:
        dict: slope_eta and slope_zeta
    """
    log_n = np.log(np.asarray(n_list, dtype=float))
    residuals = np.array([expansion_residual(arrival, service, theta, n) for n in n_list])
    slopes = {}
    for column, name in enumerate(["slope_eta", "slope_zeta"]):
        usable = residuals[:, column] > 0
        if usable.sum() < 2:
            slopes[name] = float("nan")
            continue
        slopes[name] = float(np.polyfit(log_n[usable], np.log(residuals[usable, column]), 1)[0])
    return slopes


def fit_safe_radius_constants(
    arrival: RenewalSpec,
    service: RenewalSpec,
    n: int,
    theta_grid: Sequence[float],
    u_grid: Sequence[float],
) -> Dict[str, float]:
    """
    Fit d_A, d_S so that |eta (u1 ^ n^{1/2}) + zeta (u2 ^ n^{1/2})| <= |theta| (d_A (u1/n^{1/2} ^ 1) + d_S (u2/n^{1/2} ^ 1))
    with eta, zeta evaluated at n^{-1/2} theta, and verify it on the (u1, u2) grid.

    Returns:
        dict: d_A, d_S, the largest ratio left/right over the grid and whether the bound holds
    """
    sqrt_n = math.sqrt(n)
    u = np.asarray(u_grid, dtype=float)
    capped = np.minimum(u, sqrt_n)
    relative = np.minimum(u / sqrt_n, 1.0)
    solutions = [solve_clocks(arrival, service, theta / sqrt_n, n) for theta in theta_grid if theta != 0]
    thetas = [theta for theta in theta_grid if theta != 0]

    d_A = max((sqrt_n * abs(s.eta) / abs(t) for s, t in zip(solutions, thetas)), default=0.0)
    d_S = max((sqrt_n * abs(s.zeta) / abs(t) for s, t in zip(solutions, thetas)), default=0.0)

    worst = 0.0
    for sol, theta in zip(solutions, thetas):
        left = np.abs(sol.eta * capped[:, None] + sol.zeta * capped[None, :])
        right = abs(theta) * (d_A * relative[:, None] + d_S * relative[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(right > 0, left / right, 0.0)
        worst = max(worst, float(ratio.max()))
    return {"d_A": d_A, "d_S": d_S, "max_ratio": worst, "holds": worst <= 1.0 + 1e-12}


def exponential_factor(sol: ClockSolution, r_e, r_d, n: int) -> np.ndarray:
    """g^(n)_theta(R) = exp(-eta (R_e ^ n^{1/2}) - zeta (R_d ^ n^{1/2})) for residual samples."""
    cap = math.sqrt(n)
    return np.exp(-sol.eta * np.minimum(np.asarray(r_e, dtype=float), cap) - sol.zeta * np.minimum(np.asarray(r_d, dtype=float), cap))


def clock_table(arrival: RenewalSpec, service: RenewalSpec, theta_grid: Sequence[float], n_list: Sequence[int]) -> List[Dict[str, float]]:
    """One row per (theta, n) with eta, zeta and their residuals."""
    return [solve_clocks(arrival, service, theta, n).to_row() for n in n_list for theta in theta_grid]
