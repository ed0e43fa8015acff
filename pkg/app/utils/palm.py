#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Event-epoch (Palm) estimators.

Palm expectations are epoch averages over one long stationary path. The
simulator keeps, for every queue length, the count of arrival and departure
epochs and the power sums of the checked residuals R ^ n^{1/2} seen there;
everything in this module is computed from those sums and the time-weighted
law of the same run.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

from app.utils.config import config
from app.utils.profile import ScaledSystem, SpeedProfile

POWERS = 4


@dataclass
class PalmAccumulators:
    """
    Per-level epoch counts and checked-residual power sums of one or more runs.

    Attributes:
        n (int): Scaling index
        arr_count (list): Arrivals by pre-jump queue length L(0-)
        dep_count (list): Departures by post-jump queue length L(0)
        arr_sums (list): arr_sums[j-1][ell] = sum of R_d(0-)^j (checked) over arrivals with L(0-) = ell
        dep_sums (list): dep_sums[j-1][ell] = sum of R_e(0)^j (checked) over departures with L(0) = ell
        total_time (float): Observation time
    """

    n: int
    arr_count: List[int] = field(default_factory=list)
    dep_count: List[int] = field(default_factory=list)
    arr_sums: List[List[float]] = field(default_factory=lambda: [[] for _ in range(POWERS)])
    dep_sums: List[List[float]] = field(default_factory=lambda: [[] for _ in range(POWERS)])
    total_time: float = 0.0

    def grow(self, ell: int) -> None:
        """Extend every per-level list in place so that index ell exists."""
        size = max(ell + 1, 2 * len(self.arr_count))
        for values in [self.arr_count, self.dep_count]:
            values.extend([0] * (size - len(values)))
        for values in self.arr_sums + self.dep_sums:
            values.extend([0.0] * (size - len(values)))

    @property
    def arrivals(self) -> int:
        return int(sum(self.arr_count))

    @property
    def departures(self) -> int:
        return int(sum(self.dep_count))

    @property
    def alpha_e(self) -> float:
        return self.arrivals / self.total_time if self.total_time > 0 else 0.0

    @property
    def alpha_d(self) -> float:
        return self.departures / self.total_time if self.total_time > 0 else 0.0

    def at(self, values: List[float], ell: int) -> float:
        return values[ell] if 0 <= ell < len(values) else 0.0

    def merge(self, other: "PalmAccumulators") -> "PalmAccumulators":
        """Exact combination of two runs: counts, sums and times add."""
        if other.n != self.n:
            raise ValueError(f"Cannot merge accumulators of different systems (n={self.n} vs n={other.n})")

        def add(a, b):
            size = max(len(a), len(b))
            return [(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(size)]

        return PalmAccumulators(
            n=self.n,
            arr_count=add(self.arr_count, other.arr_count),
            dep_count=add(self.dep_count, other.dep_count),
            arr_sums=[add(a, b) for a, b in zip(self.arr_sums, other.arr_sums)],
            dep_sums=[add(a, b) for a, b in zip(self.dep_sums, other.dep_sums)],
            total_time=self.total_time + other.total_time,
        )

    def trimmed(self) -> "PalmAccumulators":
        """Copy without the trailing unused levels left by grow()."""
        used = max(
            [i + 1 for i, c in enumerate(self.arr_count) if c] + [i + 1 for i, c in enumerate(self.dep_count) if c] + [0]
        )
        return PalmAccumulators(
            n=self.n,
            arr_count=self.arr_count[:used],
            dep_count=self.dep_count[:used],
            arr_sums=[s[:used] for s in self.arr_sums],
            dep_sums=[s[:used] for s in self.dep_sums],
            total_time=self.total_time,
        )

    def to_dict(self) -> Dict[str, Any]:
        trimmed = self.trimmed()
        return {
            "n": trimmed.n,
            "total_time": trimmed.total_time,
            "arr_count": trimmed.arr_count,
            "dep_count": trimmed.dep_count,
            "arr_sums": trimmed.arr_sums,
            "dep_sums": trimmed.dep_sums,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PalmAccumulators":
        return cls(
            n=int(data["n"]),
            arr_count=[int(c) for c in data["arr_count"]],
            dep_count=[int(c) for c in data["dep_count"]],
            arr_sums=[[float(v) for v in s] for s in data["arr_sums"]],
            dep_sums=[[float(v) for v in s] for s in data["dep_sums"]],
            total_time=float(data["total_time"]),
        )


@dataclass(frozen=True)
class PalmEstimate:
    """A probe-level statistic with its naive standard error and the data-sufficiency flag."""

    x: float
    q: int
    value: float
    stderr: float
    epochs: int
    sufficient: bool


def _min_epochs(min_epochs: Optional[int]) -> int:
    return int(config.simulation.minEpochs) if min_epochs is None else int(min_epochs)


def estimate_H(acc: PalmAccumulators, sys: ScaledSystem, x: float, min_epochs: int = None) -> PalmEstimate:
    """
    Estimate the correction term H^(n)_x at q = floor(n^{1/2} x).

    H = (alpha_e / 2) { E_e[(sigma_S^2 R_d(0-) - R_d(0-)^2) 1(L(0-) = q)]
                       - E_d[((sigma_A^2 + 2) R_e(0) - R_e(0)^2) 1(L(0) = q)] }
    with checked residuals and epoch averages over all arrivals / departures.

    Parameters:
        acc (PalmAccumulators): Palm sums of the run(s)
        sys (ScaledSystem): System that produced them
        x (float): Scaled probe level
        min_epochs (int): Epochs needed at q for a sufficient estimate (default simulation.minEpochs)

    Returns:
        PalmEstimate: Value 0 with sufficient=False when q was never visited
    """
    q = sys.q_of(x)
    epochs = int(acc.at(acc.arr_count, q) + acc.at(acc.dep_count, q))
    T = acc.total_time
    n_d = acc.departures
    if epochs == 0 or T <= 0 or n_d == 0:
        return PalmEstimate(x=x, q=q, value=0.0, stderr=0.0, epochs=epochs, sufficient=False)

    s_s, c = sys.service.scv, sys.arrival.scv + 2.0
    a1, a2, a3, a4 = (acc.at(s, q) for s in acc.arr_sums)
    d1, d2, d3, d4 = (acc.at(s, q) for s in acc.dep_sums)
    alpha_e = acc.alpha_e

    f_sum = s_s * a1 - a2
    g_sum = c * d1 - d2
    value = 0.5 * (f_sum / T - alpha_e * g_sum / n_d)

    f_sq = s_s * s_s * a2 - 2.0 * s_s * a3 + a4
    g_sq = c * c * d2 - 2.0 * c * d3 + d4
    stderr = 0.5 * math.sqrt(max(f_sq, 0.0) / T ** 2 + (alpha_e / n_d) ** 2 * max(g_sq, 0.0))
    return PalmEstimate(x=x, q=q, value=value, stderr=stderr, epochs=epochs, sufficient=epochs >= _min_epochs(min_epochs))


def estimate_Delta(acc: PalmAccumulators, law, sys: ScaledSystem, x: float, min_epochs: int = None) -> PalmEstimate:
    """
    Estimate Delta^(n)_x = alpha_e (E_e[R_d(0-) 1(L(0-) = q)] + E_d[R_e(0) 1(L(0) = q)] - P_e[L(0-) = q]).

    The law argument is accepted so that callers pass the pair produced by one
    run; only the Palm sums enter the estimate.

    The standard error adds the spread of the fresh clock draws (sigma_A^2 per
    arrival, sigma_S^2 per departure) to the spread of the epoch residuals.
    Those draws drive the gap between Delta_hat and the delta_identity() values.
    """
    q = sys.q_of(x)
    epochs = int(acc.at(acc.arr_count, q) + acc.at(acc.dep_count, q))
    T = acc.total_time
    n_d = acc.departures
    if epochs == 0 or T <= 0 or n_d == 0:
        return PalmEstimate(x=x, q=q, value=0.0, stderr=0.0, epochs=epochs, sufficient=False)

    count = acc.at(acc.arr_count, q)
    a1, a2 = acc.at(acc.arr_sums[0], q), acc.at(acc.arr_sums[1], q)
    d1, d2 = acc.at(acc.dep_sums[0], q), acc.at(acc.dep_sums[1], q)
    alpha_e = acc.alpha_e

    value = (a1 - count) / T + alpha_e * d1 / n_d
    centered_sq = a2 - 2.0 * a1 + count
    draws = sys.arrival.scv * acc.arrivals + sys.service.scv * acc.departures
    stderr = math.sqrt((max(centered_sq, 0.0) + draws) / T ** 2 + (alpha_e / n_d) ** 2 * d2)
    return PalmEstimate(x=x, q=q, value=value, stderr=stderr, epochs=epochs, sufficient=epochs >= _min_epochs(min_epochs))


def _gap_array(sys: ScaledSystem, size: int) -> np.ndarray:
    return np.array([sys.rate_gap(ell) for ell in range(size)])


def delta_identity(law, sys: ScaledSystem, x: float) -> Dict[str, float]:
    """
    Law-side values of the two Delta identities at q = floor(n^{1/2} x).

    Returns:
        dict: upper = -n^{-1/2} E[b_hat(L_hat) 1(L > q)] and
              lower = n^{-1/2} E[b_hat(L_hat) 1(L <= q)] + mu^(n)(0) P[L = 0]
    """
    q = sys.q_of(x)
    masses = np.asarray(law.masses(), dtype=float)
    gaps = _gap_array(sys, len(masses))
    above = float(np.sum(gaps[q + 1:] * masses[q + 1:]))
    below = float(np.sum(gaps[: q + 1] * masses[: q + 1]))
    _, mu0 = sys.speeds_at(0)
    p0 = float(masses[0]) if len(masses) else 0.0
    return {"upper": -above, "lower": below + mu0 * p0}


@dataclass(frozen=True)
class IntensityReport:
    """Residuals of the rate-conservation identities of one run."""

    alpha_e: float
    alpha_d: float
    r1: float
    r2: float
    r3: float
    bound: float
    r1_within_bound: bool
    r2_relative: float
    lambda_sup: float
    alpha_bounded: bool
    crossing_max_diff: float
    crossing_stderr: float
    crossing_level: int

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def level_crossing(acc: PalmAccumulators) -> Dict[str, float]:
    """
    Compare P_e[L(0-) <= ell] with P_d[L(0) <= ell] over all ell.

    Returns:
        dict: max_diff, its binomial standard error and the level where it occurs
    """
    n_e, n_d = acc.arrivals, acc.departures
    if n_e == 0 or n_d == 0:
        return {"max_diff": 0.0, "stderr": 0.0, "level": 0}
    size = max(len(acc.arr_count), len(acc.dep_count))
    arr = np.zeros(size)
    dep = np.zeros(size)
    arr[: len(acc.arr_count)] = acc.arr_count
    dep[: len(acc.dep_count)] = acc.dep_count
    cdf_e = np.cumsum(arr) / n_e
    cdf_d = np.cumsum(dep) / n_d
    diff = np.abs(cdf_e - cdf_d)
    level = int(np.argmax(diff))
    p = cdf_e[level]
    stderr = math.sqrt(max(p * (1 - p), 0.0) * (1.0 / n_e + 1.0 / n_d))
    return {"max_diff": float(diff[level]), "stderr": stderr, "level": level}


def intensity_identity_report(law, acc: PalmAccumulators, sys: ScaledSystem) -> IntensityReport:
    """
    Check alpha_e = alpha_d and both rate-conservation identities on one run.

    r1 = |alpha_e - alpha_d| is bounded by (L(0) + L(T)) / T on every path;
    r2 = |alpha_e - sum_ell lambda^(n)(ell) P[L = ell]|;
    r3 = |alpha_d - sum_{ell >= 1} mu^(n)(ell) P[L = ell]|.
    """
    T = law.observed_time
    alpha_e = law.arrivals / T if T > 0 else 0.0
    alpha_d = law.departures / T if T > 0 else 0.0
    masses = law.masses()
    speeds = [sys.speeds_at(ell) for ell in range(len(masses))]
    lam = np.array([s[0] for s in speeds])
    mu = np.array([s[1] for s in speeds])
    if len(mu):
        mu[0] = 0.0

    r1 = abs(alpha_e - alpha_d)
    bound = (law.L_start + law.L_end) / T if T > 0 else 0.0
    r2 = abs(alpha_e - float(np.dot(lam, masses)))
    r3 = abs(alpha_d - float(np.dot(mu, masses)))
    lambda_sup, _ = sys.speed_bounds()
    crossing = level_crossing(acc)

    report = IntensityReport(
        alpha_e=alpha_e,
        alpha_d=alpha_d,
        r1=r1,
        r2=r2,
        r3=r3,
        bound=bound,
        r1_within_bound=r1 <= bound * (1 + 1e-12),
        r2_relative=r2 / alpha_e if alpha_e > 0 else 0.0,
        lambda_sup=lambda_sup,
        alpha_bounded=alpha_e <= lambda_sup * (1 + 1e-12),
        crossing_max_diff=crossing["max_diff"],
        crossing_stderr=crossing["stderr"],
        crossing_level=crossing["level"],
    )
    logging.debug(f"Intensity identities at n={sys.n}: r1={r1:.3g} (bound {bound:.3g}), r2={r2:.3g}, r3={r3:.3g}", extra={"indent": 2})
    return report


@dataclass(frozen=True)
class BoundaryReport:
    lhs: float
    rhs: float
    rel_err: float
    limit_rhs: Optional[float] = None
    limit_rel_err: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def boundary_identity_report(law, sys: ScaledSystem, limit_rhs: Optional[float] = None) -> BoundaryReport:
    """
    Compare mu^(n)(0) n^{1/2} P[L = 0] with -E[b_hat^(n)(L_hat)].

    Both sides agree exactly under the stationary law; on a finite run or a
    truncated oracle the residual measures the estimation error. When
    limit_rhs (= -integral of b against the limit law) is given, the left side
    is also compared with it.

    Parameters:
        law: EmpiricalLaw or BirthDeathLaw (anything with masses())
        sys (ScaledSystem): The n-th system
        limit_rhs (float): Optional heavy-traffic limit of the right side

    Returns:
        BoundaryReport: lhs, rhs, rel_err and the optional limit comparison
    """
    masses = np.asarray(law.masses(), dtype=float)
    gaps = _gap_array(sys, len(masses))
    _, mu0 = sys.speeds_at(0)
    lhs = mu0 * sys.sqrt_n * (float(masses[0]) if len(masses) else 0.0)
    rhs = -sys.sqrt_n * float(np.dot(gaps, masses))
    rel_err = abs(lhs - rhs) / abs(rhs) if rhs != 0 else (0.0 if lhs == 0 else math.inf)
    limit_rel_err = None
    if limit_rhs is not None:
        limit_rel_err = abs(lhs - limit_rhs) / abs(limit_rhs) if limit_rhs != 0 else math.inf
    return BoundaryReport(lhs=lhs, rhs=rhs, rel_err=rel_err, limit_rhs=limit_rhs, limit_rel_err=limit_rel_err)


def moment_table(acc: PalmAccumulators, sys: ScaledSystem, probes: Iterable[float]) -> List[Dict[str, Any]]:
    """
    alpha_e E_e[R_d(0-)^j 1(L(0-) = q)] and alpha_d E_d[R_e(0)^j 1(L(0) = q)] for j = 1, 2, 3 per probe.

    These stay bounded in n for a tight family.
    """
    rows = []
    T = acc.total_time
    for x in probes:
        q = sys.q_of(x)
        row = {"x": x, "q": q}
        for j in range(1, 4):
            row[f"arr_m{j}"] = acc.at(acc.arr_sums[j - 1], q) / T if T > 0 else 0.0
            row[f"dep_m{j}"] = acc.at(acc.dep_sums[j - 1], q) / T if T > 0 else 0.0
        rows.append(row)
    return rows


def default_probes(profile: SpeedProfile, max_levels: int = 20) -> List[float]:
    """Probe levels: 0.25, 0.5, the first max_levels level points and the midpoints of their regions."""
    probes = {0.25, 0.5}
    previous = 0.0
    for level in profile.levels[:max_levels]:
        probes.add(float(level))
        probes.add(0.5 * (previous + level))
        previous = level
    return sorted(probes)


def palm_report(law, acc: PalmAccumulators, sys: ScaledSystem, probes: Iterable[float], min_epochs: int = None) -> List[Dict[str, Any]]:
    """
    One row per probe: H and Delta estimates with standard errors and both Delta identities.

    Returns:
        List[dict]: Rows with x, q, H_hat, H_stderr, Delta_hat, Delta_stderr, epochs_used,
                    sufficient, Delta_upper, Delta_lower and the identity residuals
    """
    rows = []
    for x in probes:
        h = estimate_H(acc, sys, x, min_epochs)
        d = estimate_Delta(acc, law, sys, x, min_epochs)
        identity = delta_identity(law, sys, x)
        rows.append(
            {
                "x": x,
                "q": h.q,
                "H_hat": h.value,
                "H_stderr": h.stderr,
                "Delta_hat": d.value,
                "Delta_stderr": d.stderr,
                "epochs_used": h.epochs,
                "sufficient": h.sufficient,
                "Delta_upper": identity["upper"],
                "Delta_lower": identity["lower"],
                "upper_residual": d.value - identity["upper"],
                "lower_residual": d.value - identity["lower"],
            }
        )
        if not h.sufficient:
            logging.debug(f"Probe x={x} (q={h.q}) has only {h.epochs} epochs", extra={"indent": 4})
    return rows
