#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Arrival/service speed profiles and their heavy-traffic family.

A profile is stored in scaled units: region i covers S_1 = [0, l_1] and
S_i = (l_{i-1}, l_i] for i > 1, the last region extends to infinity. The n-th
system runs at lambda + n^{-1/2} lambda_star (likewise mu) on the unscaled
level sets (n^{1/2} l_{i-1}, n^{1/2} l_i].
"""

import logging
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from app.utils.errors import ConfigError
from app.utils.primitives import RenewalSpec

# Scaled level points closer than this to an integer are snapped onto it
LATTICE_SNAP = 1e-9

_REGION_KEYS = ("lambda", "mu", "lambda_star", "mu_star")
_warned_deterministic = set()


class ProfileKind(str, Enum):
    MULTILEVEL = "multilevel"
    TABULAR = "tabular"


@dataclass(frozen=True)
class Region:
    """Limit speeds (lam, mu) and their heavy-traffic corrections (lam_star, mu_star) on one level set."""

    lam: float
    mu: float
    lam_star: float = 0.0
    mu_star: float = 0.0

    @property
    def b(self) -> float:
        return self.lam_star - self.mu_star

    def sigma2(self, arrival: RenewalSpec, service: RenewalSpec) -> float:
        return self.lam * arrival.scv + self.mu * service.scv

    def to_dict(self) -> Dict[str, float]:
        return {"lambda": self.lam, "mu": self.mu, "lambda_star": self.lam_star, "mu_star": self.mu_star}


@dataclass(frozen=True)
class SpeedProfile:
    """
    Piecewise-constant speed profile.

    Attributes:
        levels (tuple): Strictly increasing positive breakpoints l_1 < l_2 < ...
        regions (tuple): len(levels) + 1 Region objects; the last one is the tail
        kind (ProfileKind): MULTILEVEL, or TABULAR when built from per-function steps
        source (dict): Original JSON form, kept for serialization
    """

    levels: Tuple[float, ...]
    regions: Tuple[Region, ...]
    kind: ProfileKind = ProfileKind.MULTILEVEL
    source: Optional[Dict[str, Any]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if len(self.regions) != len(self.levels) + 1:
            raise ValueError(f"{len(self.levels)} levels need {len(self.levels) + 1} regions, got {len(self.regions)}")

    @property
    def tail(self) -> Region:
        return self.regions[-1]

    @property
    def balanced(self) -> bool:
        """True when lambda(u) = mu(u) everywhere, as the heavy-traffic family requires."""
        return all(abs(r.lam - r.mu) <= 1e-12 * max(1.0, abs(r.mu)) for r in self.regions)

    def region_at(self, u: float) -> Region:
        """Region of the scaled level u under the left-continuous convention."""
        return self.regions[bisect_left(self.levels, u)]

    def segments(self) -> List[Tuple[float, float, Region]]:
        """Return (lower, upper, region) for every level set; the tail has upper = inf."""
        bounds = (0.0,) + tuple(self.levels) + (math.inf,)
        return [(bounds[i], bounds[i + 1], region) for i, region in enumerate(self.regions)]

    def to_dict(self) -> Dict[str, Any]:
        if self.source is not None:
            return self.source
        return {"levels": list(self.levels), "regions": [r.to_dict() for r in self.regions]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "model") -> "SpeedProfile":
        """
        Parse the JSON model description.

        Accepted forms:
            {"levels": [l_1, ...], "regions": [{lambda, mu, lambda_star, mu_star}, ...]}
            {"levels": {"rule": "arithmetic"|"periodic", ...}, "regions": [...]} (regions cycle)
            {"tabular": {"lambda": {"breaks": [...], "values": [...]}, "mu": ..., ...}}

        Raises:
            ConfigError: Naming every offending field path
        """
        errors = []
        if not isinstance(data, dict):
            raise ConfigError([f"{path} must be an object"])

        if "tabular" in data:
            profile = _parse_tabular(data["tabular"], f"{path}.tabular", errors)
        else:
            profile = _parse_multilevel(data, path, errors)

        if errors:
            raise ConfigError(errors)
        return profile


def _number(value: Any, where: str, errors: List[str], positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        errors.append(f"{where} must be a finite number")
        return 1.0
    if positive and value <= 0:
        errors.append(f"{where} must be positive")
    return float(value)


def _parse_region(data: Any, where: str, errors: List[str]) -> Region:
    if not isinstance(data, dict):
        errors.append(f"{where} must be an object with keys {', '.join(_REGION_KEYS)}")
        return Region(1.0, 1.0)
    unknown = set(data) - set(_REGION_KEYS)
    if unknown:
        errors.append(f"{where} has unknown keys: {', '.join(sorted(unknown))}")
    for key in ("lambda", "mu"):
        if key not in data:
            errors.append(f"{where}.{key} is required")
    return Region(
        lam=_number(data.get("lambda", 1.0), f"{where}.lambda", errors, positive=True),
        mu=_number(data.get("mu", 1.0), f"{where}.mu", errors, positive=True),
        lam_star=_number(data.get("lambda_star", 0.0), f"{where}.lambda_star", errors),
        mu_star=_number(data.get("mu_star", 0.0), f"{where}.mu_star", errors),
    )


def _check_increasing(values: Sequence[float], where: str, errors: List[str]) -> None:
    previous = 0.0
    for i, value in enumerate(values):
        if value <= previous:
            errors.append(f"{where}[{i}] must be positive and strictly greater than the previous level")
            return
        previous = value


def generate_levels(rule: Dict[str, Any], where: str = "levels", errors: Optional[List[str]] = None) -> List[float]:
    """
    Expand a level generator rule into explicit breakpoints up to rule["until"].

    Rules:
        arithmetic: {"rule": "arithmetic", "first": a, "spacing": d, "until": u}
                    gives a, a + d, a + 2d, ... <= u
        periodic:   {"rule": "periodic", "pattern": [p_1, ...], "period": T, "until": u}
                    gives k T + p_j for k = 0, 1, ... with 0 < p_1 < ... <= T

    Returns:
        List[float]: Strictly increasing levels
    """
    errors = errors if errors is not None else []
    kind = rule.get("rule")
    until = _number(rule.get("until"), f"{where}.until", errors, positive=True)
    levels = []

    if kind == "arithmetic":
        first = _number(rule.get("first"), f"{where}.first", errors, positive=True)
        spacing = _number(rule.get("spacing"), f"{where}.spacing", errors, positive=True)
        if errors:
            return []
        k = 0
        while first + k * spacing <= until * (1 + 1e-12):
            levels.append(first + k * spacing)
            k += 1
    elif kind == "periodic":
        period = _number(rule.get("period"), f"{where}.period", errors, positive=True)
        pattern = rule.get("pattern")
        if not isinstance(pattern, list) or not pattern:
            errors.append(f"{where}.pattern must be a non-empty list")
            return []
        pattern = [_number(p, f"{where}.pattern[{i}]", errors, positive=True) for i, p in enumerate(pattern)]
        if errors:
            return []
        _check_increasing(pattern, f"{where}.pattern", errors)
        if pattern[-1] > period:
            errors.append(f"{where}.pattern entries must not exceed the period")
        if errors:
            return []
        k = 0
        while k * period + pattern[0] <= until * (1 + 1e-12):
            levels.extend(k * period + p for p in pattern if k * period + p <= until * (1 + 1e-12))
            k += 1
    else:
        errors.append(f"{where}.rule must be 'arithmetic' or 'periodic', got {kind!r}")
    return levels


def _parse_multilevel(data: Dict[str, Any], path: str, errors: List[str]) -> SpeedProfile:
    raw_levels = data.get("levels", [])
    raw_regions = data.get("regions")
    if not isinstance(raw_regions, list) or not raw_regions:
        errors.append(f"{path}.regions must be a non-empty list")
        return SpeedProfile(levels=(), regions=(Region(1.0, 1.0),))
    regions = [_parse_region(r, f"{path}.regions[{i}]", errors) for i, r in enumerate(raw_regions)]

    if isinstance(raw_levels, dict):
        levels = generate_levels(raw_levels, f"{path}.levels", errors)
        if errors:
            return SpeedProfile(levels=(), regions=(regions[0],))
        # regions cycle over the generated level sets; the set after the last level is the tail
        expanded = [regions[i % len(regions)] for i in range(len(levels) + 1)]
        source = {"levels": dict(raw_levels), "regions": [r.to_dict() for r in regions]}
        logging.debug(f"Level rule '{raw_levels.get('rule')}' produced {len(levels)} levels", extra={"indent": 2})
        return SpeedProfile(levels=tuple(levels), regions=tuple(expanded), source=source)

    if not isinstance(raw_levels, list):
        errors.append(f"{path}.levels must be a list or a generator rule object")
        return SpeedProfile(levels=(), regions=(regions[0],))
    levels = [_number(v, f"{path}.levels[{i}]", errors, positive=True) for i, v in enumerate(raw_levels)]
    _check_increasing(levels, f"{path}.levels", errors)
    if len(regions) != len(levels) + 1:
        errors.append(f"{path}.regions must have len(levels) + 1 = {len(levels) + 1} entries, got {len(regions)}")
        return SpeedProfile(levels=(), regions=(regions[0],))
    return SpeedProfile(levels=tuple(levels), regions=tuple(regions))


def _parse_tabular(data: Any, path: str, errors: List[str]) -> SpeedProfile:
    if not isinstance(data, dict):
        errors.append(f"{path} must be an object")
        return SpeedProfile(levels=(), regions=(Region(1.0, 1.0),))

    steps = {}
    for key in _REGION_KEYS:
        where = f"{path}.{key}"
        entry = data.get(key, {"breaks": [], "values": [0.0]} if key.endswith("_star") else None)
        if entry is None:
            errors.append(f"{where} is required")
            continue
        if isinstance(entry, (int, float)) and not isinstance(entry, bool):
            entry = {"breaks": [], "values": [entry]}
        if not isinstance(entry, dict):
            errors.append(f"{where} must be a number or an object with 'breaks' and 'values'")
            continue
        breaks = [_number(v, f"{where}.breaks[{i}]", errors, positive=True) for i, v in enumerate(entry.get("breaks", []))]
        values = [
            _number(v, f"{where}.values[{i}]", errors, positive=not key.endswith("_star"))
            for i, v in enumerate(entry.get("values", []))
        ]
        _check_increasing(breaks, f"{where}.breaks", errors)
        if len(values) != len(breaks) + 1:
            errors.append(f"{where}.values must have len(breaks) + 1 entries (the last one is the tail constant)")
            continue
        steps[key] = (breaks, values)

    if errors:
        return SpeedProfile(levels=(), regions=(Region(1.0, 1.0),))

    # merge the per-function breakpoints into one partition
    levels = sorted({b for breaks, _ in steps.values() for b in breaks})
    regions = []
    for upper in levels + [math.inf]:
        probe = upper if math.isfinite(upper) else (levels[-1] + 1.0 if levels else 1.0)
        values = {key: vals[bisect_left(brk, probe)] for key, (brk, vals) in steps.items()}
        regions.append(Region(values["lambda"], values["mu"], values["lambda_star"], values["mu_star"]))

    source = {"tabular": {key: {"breaks": brk, "values": vals} for key, (brk, vals) in steps.items()}}
    return SpeedProfile(levels=tuple(levels), regions=tuple(regions), kind=ProfileKind.TABULAR, source=source)


def limit_fields(profile: SpeedProfile, arrival: RenewalSpec, service: RenewalSpec, u: float) -> Tuple[float, float, float]:
    """
    Limit drift and variance fields at the scaled level u.

    Returns:
        Tuple[float, float, float]: (b(u), sigma^2(u), beta(u)) with b = lambda* - mu*,
                                    sigma^2 = lambda sigma_A^2 + mu sigma_S^2, beta = 2b / sigma^2
    """
    region = profile.region_at(u)
    sigma2 = region.sigma2(arrival, service)
    return region.b, sigma2, 2.0 * region.b / sigma2


@dataclass(frozen=True)
class ScaledSystem:
    """
    The n-th system of the heavy-traffic family.

    Attributes:
        n (int): Scaling index
        profile (SpeedProfile): Limit speeds and corrections
        arrival (RenewalSpec): Unit-mean inter-arrival distribution T_A
        service (RenewalSpec): Unit-mean service distribution T_S
    """

    n: int
    profile: SpeedProfile
    arrival: RenewalSpec
    service: RenewalSpec
    sqrt_n: float = field(init=False, repr=False)
    scaled_levels: Tuple[float, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if self.arrival.scv + self.service.scv <= 0:
            raise ValueError("sigma_A^2 + sigma_S^2 must be positive: arrival and service cannot both be deterministic")
        for role, spec in (("arrival", self.arrival), ("service", self.service)):
            if spec.is_deterministic and role not in _warned_deterministic:
                _warned_deterministic.add(role)
                logging.warning(
                    f"Deterministic {role} times: the spread-out condition on inter-arrival times "
                    f"{'fails' if role == 'arrival' else 'is unaffected'}; arrival-first tie-breaking applies"
                )

        sqrt_n = math.sqrt(self.n)
        object.__setattr__(self, "sqrt_n", sqrt_n)
        object.__setattr__(self, "scaled_levels", tuple(_snap(sqrt_n * level) for level in self.profile.levels))

        for i, region in enumerate(self.profile.regions):
            lam, mu = self.region_speeds(region)
            if lam <= 0 or mu <= 0:
                raise ValueError(
                    f"Speeds of region {i} are not positive at n={self.n} (lambda^(n)={lam:.6g}, mu^(n)={mu:.6g})"
                )

    def region_speeds(self, region: Region) -> Tuple[float, float]:
        return region.lam + region.lam_star / self.sqrt_n, region.mu + region.mu_star / self.sqrt_n

    def region_index(self, ell: int) -> int:
        """Index of the region containing queue length ell (ell in (n^{1/2} l_{i-1}, n^{1/2} l_i])."""
        return bisect_left(self.scaled_levels, ell)

    def speeds_at(self, ell: int) -> Tuple[float, float]:
        """
        Arrival and service speeds at queue length ell.

        Parameters:
            ell (int): Queue length (>= 0)

        Returns:
            Tuple[float, float]: (lambda^(n)(ell), mu^(n)(ell)); mu^(n)(0) = lambda^(n)(0) by convention
        """
        if ell < 0:
            raise ValueError("Queue length must be nonnegative")
        lam, mu = self.region_speeds(self.profile.regions[self.region_index(ell)])
        if ell == 0:
            mu = lam
        return lam, mu

    def rate_gap(self, ell: int) -> float:
        """lambda^(n)(ell) - mu^(n)(ell), which equals n^{-1/2} b_hat^(n)(n^{-1/2} ell)."""
        lam, mu = self.speeds_at(ell)
        return lam - mu

    def lattice_index(self, u: float) -> int:
        """Integer queue length carrying the hat functions at u (left-continuous steps on (l-1, l])."""
        return max(0, math.ceil(_snap(self.sqrt_n * u)))

    def q_of(self, x: float) -> int:
        """q^(n)_x, the largest integer not greater than n^{1/2} x."""
        return math.floor(_snap(self.sqrt_n * x))

    def hat_fields(self, u: float) -> Tuple[float, float, float]:
        """
        Pre-limit drift and variance at the scaled level u.

        Returns:
            Tuple[float, float, float]: (b_hat, sigma_hat^2, beta_hat) with
                b_hat = n^{1/2}(lambda_hat - mu_hat), sigma_hat^2 = lambda_hat sigma_A^2 + mu_hat sigma_S^2,
                beta_hat = 2 b_hat / sigma_hat^2
        """
        if u < 0:
            raise ValueError("Scaled level must be nonnegative")
        lam, mu = self.speeds_at(self.lattice_index(u))
        b_hat = self.sqrt_n * (lam - mu)
        sigma2_hat = lam * self.arrival.scv + mu * self.service.scv
        return b_hat, sigma2_hat, 2.0 * b_hat / sigma2_hat

    def speed_bounds(self) -> Tuple[float, float]:
        """(sup of lambda^(n), inf of mu^(n) over ell >= 1) across all regions."""
        speeds = [self.region_speeds(r) for r in self.profile.regions]
        return max(lam for lam, _ in speeds), min(mu for _, mu in speeds)

    def with_n(self, n: int) -> "ScaledSystem":
        return ScaledSystem(n=n, profile=self.profile, arrival=self.arrival, service=self.service)


def _snap(x: float) -> float:
    nearest = round(x)
    return float(nearest) if abs(x - nearest) <= LATTICE_SNAP * max(1.0, abs(x)) else x


@dataclass(frozen=True)
class StabilityReport:
    gamma_inf: float
    b_inf: Optional[float]
    stable: bool
    ht_stable: bool

    def to_dict(self) -> Dict[str, Any]:
        return {"gamma_inf": self.gamma_inf, "b_inf": self.b_inf, "stable": self.stable, "ht_stable": self.ht_stable}


def stability_report(sys: ScaledSystem) -> StabilityReport:
    """
    Tail drift of the n-th system and of its heavy-traffic limit.

    gamma_inf is the tail value of lambda^(n) - mu^(n) (positive recurrence iff < 0);
    b_inf is the tail value of b = lambda* - mu*, reported only when the tail is balanced
    (lambda = mu), since otherwise the heavy-traffic limit does not exist.

    Parameters:
        sys (ScaledSystem): System to inspect

    Returns:
        StabilityReport: gamma_inf, b_inf (or None), stable, ht_stable
    """
    tail = sys.profile.tail
    lam, mu = sys.region_speeds(tail)
    gamma_inf = lam - mu
    b_inf = tail.b if abs(tail.lam - tail.mu) <= 1e-12 * max(1.0, tail.mu) else None
    report = StabilityReport(
        gamma_inf=gamma_inf,
        b_inf=b_inf,
        stable=gamma_inf < 0,
        ht_stable=b_inf is not None and b_inf < 0,
    )
    logging.debug(f"Stability at n={sys.n}: {report.to_dict()}", extra={"indent": 2})
    return report
