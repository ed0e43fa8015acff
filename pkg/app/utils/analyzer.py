#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Heavy-traffic limit density, the birth-death oracle and law comparisons.

The limit of the scaled stationary law has density

    h(u) = exp(int_0^u beta(v) dv) / (C sigma^2(u)),   beta = 2 b / sigma^2,

which is piecewise exponential for step profiles. g = h sigma^2 is continuous,
so h jumps by sigma_i^2 / sigma_{i+1}^2 across a level.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from app.utils.config import config
from app.utils.engines import run_replications
from app.utils.engines.simulator import ScaledLaw
from app.utils.errors import NotIntegrableError, UnstableSystemError
from app.utils.primitives import RenewalKind, RenewalSpec
from app.utils.profile import ProfileKind, ScaledSystem, SpeedProfile, stability_report


def _exprel(beta, width):
    """int_0^width exp(beta t) dt, elementwise, with the beta -> 0 limit."""
    beta = np.asarray(beta, dtype=float)
    width = np.asarray(width, dtype=float)
    small = np.abs(beta * width) < 1e-12
    safe_beta = np.where(small, 1.0, beta)
    return np.where(small, width * (1 + 0.5 * beta * width), np.expm1(beta * width) / safe_beta)


def _segment_moments(beta: float, width: float) -> Tuple[float, float]:
    """(int_0^w e^{beta t} dt, int_0^w t e^{beta t} dt); width may be inf when beta < 0."""
    if math.isinf(width):
        return -1.0 / beta, 1.0 / beta ** 2
    e0 = float(_exprel(beta, width))
    if abs(beta * width) < 1e-8:
        return e0, width ** 2 / 2 + beta * width ** 3 / 3
    return e0, (width * math.exp(beta * width) - e0) / beta


@dataclass
class LimitDensity:
    """
    Closed-form limit law for a step profile.

    Attributes:
        profile (SpeedProfile): Profile the density belongs to
        lower (np.ndarray): Segment lower ends (0, l_1, l_2, ...)
        width (np.ndarray): Segment widths (inf for the tail)
        beta (np.ndarray): beta_i = 2 b_i / sigma_i^2 per segment
        sigma2 (np.ndarray): sigma_i^2 per segment
        b (np.ndarray): b_i = lambda*_i - mu*_i per segment
        log_start (np.ndarray): int_0^{lower_i} beta at every segment start
        C (float): Normalizing constant
        label (str): "theorem" for multi-level profiles, "conjecture" for tabular ones
    """

    profile: SpeedProfile
    lower: np.ndarray
    width: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    b: np.ndarray
    log_start: np.ndarray
    C: float
    label: str
    segment_mass: np.ndarray = field(default=None, repr=False)

    def _index(self, u) -> np.ndarray:
        # left-continuous: u in (l_{i-1}, l_i] belongs to segment i
        return np.searchsorted(np.asarray(self.profile.levels, dtype=float), u, side="left")

    def log_g(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        idx = self._index(u)
        return self.log_start[idx] + self.beta[idx] * (u - self.lower[idx]) - math.log(self.C)

    def g(self, u) -> np.ndarray:
        """Continuous auxiliary function exp(int_0^u beta) / C."""
        return np.exp(self.log_g(u))

    def h(self, u) -> np.ndarray:
        """Limit density at u (left-continuous at the levels)."""
        u = np.asarray(u, dtype=float)
        return np.where(u < 0, 0.0, self.g(np.maximum(u, 0.0)) / self.sigma2[self._index(np.maximum(u, 0.0))])

    def h_right(self, u: float) -> float:
        """Right limit h(u+)."""
        idx = int(np.searchsorted(np.asarray(self.profile.levels, dtype=float), u, side="right"))
        return float(self.g(u)) / float(self.sigma2[idx])

    def Hcdf(self, u) -> np.ndarray:
        """Limit CDF at u."""
        u = np.maximum(np.asarray(u, dtype=float), 0.0)
        idx = self._index(u)
        before = np.concatenate(([0.0], np.cumsum(self.segment_mass)))[idx]
        within = np.exp(self.log_start[idx]) / (self.C * self.sigma2[idx]) * _exprel(self.beta[idx], u - self.lower[idx])
        return np.minimum(before + within, 1.0)

    def mean(self) -> float:
        """Mean of the limit law (closed form per segment)."""
        total = 0.0
        for lo, w, beta, s2, start in zip(self.lower, self.width, self.beta, self.sigma2, self.log_start):
            e0, e1 = _segment_moments(beta, w)
            total += math.exp(start) / (self.C * s2) * (lo * e0 + e1)
        return total

    def expected_b(self) -> float:
        """int b dnu; its negative is the heavy-traffic limit of n^{1/2} mu^(n)(0) P[L = 0]."""
        return float(np.dot(self.b, self.segment_mass))

    def quantile(self, p: float) -> float:
        """Smallest u with Hcdf(u) >= p (bisection on the monotone CDF)."""
        hi = 1.0
        while float(self.Hcdf(hi)) < p and hi < 1e12:
            hi *= 2.0
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(self.Hcdf(mid)) < p:
                lo = mid
            else:
                hi = mid
        return hi

    def jump_ratio(self, level: float) -> float:
        """h(level+) / h(level-) = sigma^2 left / sigma^2 right."""
        return self.h_right(level) / float(self.h(level))

    def grid_rows(self, u_grid: Sequence[float]) -> List[Dict[str, float]]:
        u = np.asarray(u_grid, dtype=float)
        return [{"u": float(a), "h": float(b), "Hcdf": float(c)} for a, b, c in zip(u, self.h(u), self.Hcdf(u))]

    def to_dict(self, u_grid: Sequence[float]) -> Dict[str, Any]:
        return {
            "C": self.C,
            "label": self.label,
            "mean": self.mean(),
            "expected_b": self.expected_b(),
            "levels": list(self.profile.levels),
            "segments": [
                {"lower": float(lo), "width": None if math.isinf(w) else float(w), "beta": float(bt), "sigma2": float(s2), "b": float(b)}
                for lo, w, bt, s2, b in zip(self.lower, self.width, self.beta, self.sigma2, self.b)
            ],
            "grid": self.grid_rows(u_grid),
        }


def _segment_integral_quad(start: float, beta: float, sigma2: float, width: float, tolerance: float, tail: float) -> float:
    """int over one segment of exp(start + beta t) / sigma2, by adaptive quadrature."""
    if math.isinf(width):
        # truncate where the integrand drops below the tail threshold
        width = max((math.log(tail * sigma2) - start) / beta, 0.0) if beta < 0 else 0.0
    if width <= 0:
        return 0.0
    value, _ = integrate.quad(lambda t: math.exp(start + beta * t) / sigma2, 0.0, width, epsabs=tolerance, epsrel=1e-12, limit=200)
    return value


def limit_density(profile: SpeedProfile, arrival: RenewalSpec, service: RenewalSpec) -> LimitDensity:
    """
    Build the heavy-traffic limit density of a balanced step profile.

    Multi-level profiles get C and the segment masses in closed form;
    tabular profiles are integrated by adaptive quadrature with analyzer.quadTolerance,
    truncating the tail where the integrand falls below analyzer.tailThreshold.

    Raises:
        ValueError: If lambda != mu somewhere (no heavy-traffic limit)
        NotIntegrableError: If b_inf >= 0
    """
    if not profile.balanced:
        raise ValueError("The heavy-traffic limit needs lambda(u) = mu(u) in every region")
    segments = profile.segments()
    lower = np.array([lo for lo, _, _ in segments])
    width = np.array([hi - lo for lo, hi, _ in segments])
    b = np.array([r.b for _, _, r in segments])
    sigma2 = np.array([r.sigma2(arrival, service) for _, _, r in segments])
    beta = 2.0 * b / sigma2

    if b[-1] >= 0:
        raise NotIntegrableError(f"Limit density is not integrable: b_inf = {b[-1]:.6g} must be negative")

    finite = np.isfinite(width)
    increments = np.where(finite, beta * np.where(finite, width, 0.0), 0.0)
    log_start = np.concatenate(([0.0], np.cumsum(increments[:-1])))

    if profile.kind is ProfileKind.TABULAR:
        tolerance = float(config.analyzer.quadTolerance)
        tail = float(config.analyzer.tailThreshold)
        raw = np.array([_segment_integral_quad(s, bt, s2, w, tolerance, tail) for s, bt, s2, w in zip(log_start, beta, sigma2, width)])
        label = "conjecture"
    else:
        raw = np.exp(log_start) / sigma2 * np.array([_segment_moments(bt, w)[0] for bt, w in zip(beta, width)])
        label = "theorem"

    C = float(raw.sum())
    density = LimitDensity(
        profile=profile,
        lower=lower,
        width=width,
        beta=beta,
        sigma2=sigma2,
        b=b,
        log_start=log_start,
        C=C,
        label=label,
        segment_mass=raw / C,
    )
    logging.debug(f"Limit density: C={C:.12g}, {len(segments)} segments, label={label}", extra={"indent": 2})
    return density


@dataclass
class BirthDeathLaw:
    """Product-form stationary law of the Markovian system, truncated where the tail drops below analyzer.oracleTail."""

    n: int
    probabilities: np.ndarray
    truncation: int
    tail_mass: float
    detailed_balance_residual: float = 0.0

    def masses(self) -> np.ndarray:
        return self.probabilities

    def mass(self, ell: int) -> float:
        return float(self.probabilities[ell]) if 0 <= ell < len(self.probabilities) else 0.0

    def scaled(self) -> ScaledLaw:
        return ScaledLaw(n=self.n, atoms=np.arange(len(self.probabilities)) / math.sqrt(self.n), masses=self.probabilities)

    def to_csv_rows(self) -> List[Dict[str, Any]]:
        sqrt_n = math.sqrt(self.n)
        return [{"ell": ell, "scaled_u": ell / sqrt_n, "mass": float(p)} for ell, p in enumerate(self.probabilities)]


def birth_death_oracle(sys: ScaledSystem, tail: float = None, block: int = 1024) -> BirthDeathLaw:
    """
    Exact stationary law when both clocks are exponential.

    pi_ell is proportional to prod_{k=1..ell} lambda^(n)(k-1) / mu^(n)(k). Levels are
    added in blocks; past the last level the ratio is constant, so the
    remaining tail mass is known in closed form and the product stops once it
    falls below tail.

    Raises:
        ValueError: For non-exponential primitives
        UnstableSystemError: If gamma_inf >= 0
    """
    if sys.arrival.kind is not RenewalKind.EXPONENTIAL or sys.service.kind is not RenewalKind.EXPONENTIAL:
        raise ValueError("The birth-death oracle needs exponential arrival and service times")
    report = stability_report(sys)
    if not report.stable:
        raise UnstableSystemError(report.gamma_inf)
    tail = float(config.analyzer.oracleTail) if tail is None else tail

    lam_tail, mu_tail = sys.region_speeds(sys.profile.tail)
    log_rho_tail = math.log(lam_tail / mu_tail)
    first_constant = (math.floor(sys.scaled_levels[-1]) + 1) if sys.scaled_levels else 0

    log_p = [0.0]
    lam_prev, _ = sys.speeds_at(0)
    while True:
        start = len(log_p)
        for ell in range(start, start + block):
            lam, mu = sys.speeds_at(ell)
            log_p.append(log_p[-1] + math.log(lam_prev) - math.log(mu))
            lam_prev = lam
        last = len(log_p) - 1
        if last > first_constant:
            log_values = np.asarray(log_p)
            peak = log_values.max()
            total = np.exp(log_values - peak).sum()
            # geometric tail beyond the last index
            remainder = math.exp(log_values[-1] - peak + log_rho_tail) / -math.expm1(log_rho_tail)
            if remainder / (total + remainder) < tail:
                break

    log_values = np.asarray(log_p)
    weights = np.exp(log_values - log_values.max())
    total = weights.sum() + remainder
    probabilities = weights / weights.sum()
    law = BirthDeathLaw(n=sys.n, probabilities=probabilities, truncation=last, tail_mass=remainder / total)

    lam = np.array([sys.speeds_at(ell)[0] for ell in range(last)])
    mu = np.array([sys.speeds_at(ell)[1] for ell in range(1, last + 1)])
    law.detailed_balance_residual = float(np.max(np.abs(lam * probabilities[:-1] - mu * probabilities[1:]))) if last else 0.0
    logging.debug(f"Oracle n={sys.n}: truncated at {last}, tail mass {law.tail_mass:.3g}", extra={"indent": 2})
    return law


def ks_distance(
    cdf_a: Callable,
    cdf_b: Callable,
    points: Optional[Sequence[float]] = None,
    upper: float = 20.0,
    grid_points: int = None,
) -> float:
    """
    Sup-norm distance of two CDFs on R_+.

    Both CDFs are evaluated on a uniform grid over [0, upper] and at the given
    points (atoms or cell edges) together with their left limits.

    Parameters:
        cdf_a, cdf_b (Callable): Vectorized CDFs
        points (Sequence[float]): Extra evaluation points
        upper (float): Right end of the uniform grid
        grid_points (int): Grid size (default analyzer.ksGridPoints)

    Returns:
        float: Distance in [0, 1]
    """
    grid_points = int(config.analyzer.ksGridPoints) if grid_points is None else grid_points
    u = np.linspace(0.0, upper, grid_points)
    if points is not None and len(points):
        points = np.asarray(points, dtype=float)
        u = np.concatenate((u, points, np.nextafter(points, -np.inf)))
    u = u[u >= 0]
    return float(np.max(np.abs(np.asarray(cdf_a(u), dtype=float) - np.asarray(cdf_b(u), dtype=float)))) if u.size else 0.0


def ks_to_density(law, density, atomic: bool = False, upper: Optional[float] = None) -> float:
    """
    KS distance between a lattice law (EmpiricalLaw or BirthDeathLaw) scaled by n^{-1/2} and a limit CDF.

    By default each atom's mass is spread over its lattice cell; atomic=True
    compares the raw atom CDF, whose distance to a continuous law never drops
    below the largest atom.
    """
    scaled = law.scaled()
    cdf = scaled.cdf if atomic else scaled.histogram_cdf
    reference = density.Hcdf if hasattr(density, "Hcdf") else density
    edges = np.append(scaled.atoms, scaled.atoms[-1] + 1.0 / math.sqrt(scaled.n)) if len(scaled.atoms) else None
    if upper is None:
        upper = float(edges[-1]) if edges is not None else 20.0
        if hasattr(density, "quantile"):
            upper = max(upper, density.quantile(1 - 1e-12))
    return ks_distance(cdf, reference, points=edges, upper=upper)


def _side_fit(u: np.ndarray, log_density: np.ndarray, level: float) -> float:
    if len(u) == 1:
        return float(log_density[0])
    slope, intercept = np.polyfit(u, log_density, 1)
    return float(slope * level + intercept)


def jump_ratio_estimate(u: Sequence[float], density: Sequence[float], level: float, window: float) -> float:
    """
    Estimate density(level+) / density(level-) from sampled values.

    A log-linear fit is made on each side of the level over the given window
    and both fits are evaluated at the level.

    Parameters:
        u (Sequence[float]): Sample locations (lattice points or bin centers)
        density (Sequence[float]): Density or mass at those points
        level (float): Level point
        window (float): Width of the fitting window on each side

    Returns:
        float: Estimated ratio (nan when one side has no positive samples)
    """
    u = np.asarray(u, dtype=float)
    density = np.asarray(density, dtype=float)
    tol = 1e-9 * max(1.0, level)
    left = (u <= level + tol) & (u > level - window) & (density > 0)
    right = (u > level + tol) & (u <= level + window) & (density > 0)
    if not left.any() or not right.any():
        return float("nan")
    return math.exp(_side_fit(u[right], np.log(density[right]), level) - _side_fit(u[left], np.log(density[left]), level))


def lattice_jump_ratio(law, level: float, window: float = None) -> float:
    """Jump ratio of a lattice law at a scaled level (masses on the points ell / n^{1/2})."""
    scaled = law.scaled()
    window = 0.25 if window is None else window
    return jump_ratio_estimate(scaled.atoms, scaled.masses, level, window)


@dataclass
class ConvergenceRow:
    n: int
    ks: float
    boundary_mass: float
    boundary_rel_err: Optional[float] = None
    jump_ratio: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        row = {"n": self.n, "ks": self.ks, "boundary_mass": self.boundary_mass, "boundary_rel_err": self.boundary_rel_err}
        if self.jump_ratio is not None:
            row["jump_ratio"] = self.jump_ratio
        return row


@dataclass
class ConvergenceTable:
    rows: List[ConvergenceRow]
    monotone: Optional[bool]
    label: str
    boundary_monotone: Optional[bool] = None

    def to_csv_rows(self) -> List[Dict[str, Any]]:
        return [row.to_dict() for row in self.rows]


def convergence_study(
    base: ScaledSystem,
    n_list: Sequence[int],
    target: LimitDensity,
    source: str = "oracle",
    events: int = None,
    seed: int = 0,
    replications: int = 1,
    workers: int = None,
    allow_unstable: bool = False,
    atomic: bool = False,
) -> ConvergenceTable:
    """
    KS distance and boundary mass of the n-th stationary law against the limit, over n_list.

    Parameters:
        base (ScaledSystem): Any member of the family (only profile and primitives are used)
        n_list (Sequence[int]): Scaling indices, in the order reported
        target (LimitDensity): Limit law
        source (str): "oracle" (birth-death product form) or "simulation"
        events, seed, replications, workers, allow_unstable: Simulation settings

    Returns:
        ConvergenceTable: One row per n, with flags telling whether KS and the boundary
                          relative error strictly decrease (None for a single row)
    """
    if source not in ("oracle", "simulation"):
        raise ValueError(f"source must be 'oracle' or 'simulation', got {source!r}")
    systems = [base.with_n(int(n)) for n in n_list]
    limit_rhs = -target.expected_b()

    if source == "oracle":
        workers = workers or config.worker_count()
        if workers > 1 and len(systems) > 1:
            with ProcessPoolExecutor(max_workers=min(workers, len(systems))) as pool:
                laws = list(pool.map(birth_death_oracle, systems))
        else:
            laws = [birth_death_oracle(sys) for sys in systems]
    else:
        laws = [
            run_replications(sys, events, seed=seed, replications=replications, workers=workers, allow_unstable=allow_unstable)[0]
            for sys in systems
        ]

    rows = []
    first_level = target.profile.levels[0] if target.profile.levels else None
    for sys, law in zip(systems, laws):
        _, mu0 = sys.speeds_at(0)
        boundary = sys.sqrt_n * mu0 * law.masses()[0]
        rows.append(
            ConvergenceRow(
                n=sys.n,
                ks=ks_to_density(law, target, atomic=atomic),
                boundary_mass=float(boundary),
                boundary_rel_err=abs(boundary - limit_rhs) / abs(limit_rhs),
                jump_ratio=lattice_jump_ratio(law, first_level) if first_level is not None else None,
            )
        )
        logging.info(f"n={sys.n}: KS={rows[-1].ks:.5f}, n^1/2 mu(0) P[L=0]={boundary:.5f}", extra={"indent": 2})

    if len(rows) < 2:
        monotone = boundary_monotone = None
    else:
        monotone = all(b.ks < a.ks for a, b in zip(rows, rows[1:]))
        boundary_monotone = all(b.boundary_rel_err < a.boundary_rel_err for a, b in zip(rows, rows[1:]))
    return ConvergenceTable(rows=rows, monotone=monotone, label=target.label, boundary_monotone=boundary_monotone)
