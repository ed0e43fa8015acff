#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Unit-mean inter-event distributions.

Every kind in the catalog has closed-form moments and a closed-form truncated
Laplace transform E[exp(-s (T ^ cap))], which the clock solver inverts. All
parameters are normalized at construction so that E[T] = 1.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, Tuple

import numpy as np
from scipy import special

INFINITE_CAP = math.inf


class RenewalKind(str, Enum):
    EXPONENTIAL = "exponential"
    DETERMINISTIC = "deterministic"
    ERLANG = "erlang"
    HYPEREXPONENTIAL = "hyperexponential"
    UNIFORM = "uniform"


def _power_integral(m: int, a: float, c: float) -> float:
    """
    Evaluate the integral of t^m exp(-a t) over [0, c].

    Parameters:
        m (int): Nonnegative integer power
        a (float): Exponential rate, any real
        c (float): Upper limit in (0, inf]

    Returns:
        float: Value of the integral (inf when it diverges)
    """
    if c <= 0:
        return 0.0
    if math.isinf(c):
        if a <= 0:
            return math.inf
        return math.gamma(m + 1) / a ** (m + 1)
    if a > 0 and a * c > 0.5:
        return math.gamma(m + 1) / a ** (m + 1) * float(special.gammainc(m + 1, a * c))

    # termwise integration of the exponential series; alternating for small a > 0
    x = -a * c
    term = c ** (m + 1)
    total = term / (m + 1)
    j = 0
    while True:
        j += 1
        term *= x / j
        increment = term / (m + j + 1)
        total += increment
        if abs(increment) <= 1e-17 * abs(total) or math.isinf(total):
            return total


def _exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _interval_integral(m: int, a: float, lo: float, hi: float) -> float:
    """Integral of t^m exp(-a t) over [lo, hi], 0 <= lo <= hi."""
    if hi <= lo:
        return 0.0
    if m == 0 and a != 0 and abs(a) * (hi - lo) < 700:
        # exp(-a lo) * (1 - exp(-a (hi - lo))) / a, without cancellation for small a
        return _exp(-a * lo) * -math.expm1(-a * (hi - lo)) / a
    return _power_integral(m, a, hi) - _power_integral(m, a, lo)


@dataclass(frozen=True)
class RenewalSpec:
    """
    A unit-mean inter-event distribution.

    Attributes:
        kind (RenewalKind): Distribution family
        params (tuple): Normalized parameters: () for exponential/deterministic,
                        (k,) for Erlang, (p, r1, r2) for hyperexponential,
                        (half_width,) for uniform
        scv (float): Variance of T (the mean is 1)
        third_moment (float): E[T^3]
    """

    kind: RenewalKind
    params: Tuple[float, ...] = field(default_factory=tuple)
    scv: float = 1.0
    third_moment: float = 6.0

    @property
    def mean(self) -> float:
        return 1.0

    @property
    def is_deterministic(self) -> bool:
        return self.kind is RenewalKind.DETERMINISTIC or (
            self.kind is RenewalKind.UNIFORM and self.params[0] == 0.0
        )

    def moment(self, j: int) -> float:
        """
        Closed-form raw moment E[T^j].

        Parameters:
            j (int): Order of the moment (>= 0)

        Returns:
            float: E[T^j]
        """
        if self.kind is RenewalKind.EXPONENTIAL:
            return float(math.factorial(j))
        if self.kind is RenewalKind.DETERMINISTIC:
            return 1.0
        if self.kind is RenewalKind.ERLANG:
            k = int(self.params[0])
            return math.prod(k + i for i in range(j)) / k ** j
        if self.kind is RenewalKind.HYPEREXPONENTIAL:
            p, r1, r2 = self.params
            return math.factorial(j) * (p / r1 ** j + (1 - p) / r2 ** j)
        w = self.params[0]
        if w == 0:
            return 1.0
        return ((1 + w) ** (j + 1) - (1 - w) ** (j + 1)) / ((j + 1) * 2 * w)

    def pdf(self, t: float) -> float:
        """
        Density of T at t (continuous kinds only).

        Raises:
            ValueError: For the deterministic kind, which has no density
        """
        if self.is_deterministic:
            raise ValueError("Deterministic inter-event times have no density")
        if t < 0:
            return 0.0
        if self.kind is RenewalKind.EXPONENTIAL:
            return math.exp(-t)
        if self.kind is RenewalKind.ERLANG:
            k = int(self.params[0])
            if t == 0:
                return 1.0 if k == 1 else 0.0
            return math.exp(k * math.log(k) + (k - 1) * math.log(t) - k * t - math.lgamma(k))
        if self.kind is RenewalKind.HYPEREXPONENTIAL:
            p, r1, r2 = self.params
            return p * r1 * math.exp(-r1 * t) + (1 - p) * r2 * math.exp(-r2 * t)
        w = self.params[0]
        return 1.0 / (2 * w) if 1 - w <= t <= 1 + w else 0.0

    def _partial(self, j: int, s: float, cap: float) -> Tuple[float, float]:
        """
        Split E[(T ^ cap)^j exp(-s (T ^ cap))] into its density and atom parts.

        Returns:
            Tuple[float, float]: (integral over [0, cap] of t^j e^{-st} dF(t), P[T > cap])
        """
        if self.kind in (RenewalKind.EXPONENTIAL, RenewalKind.ERLANG):
            k = 1 if self.kind is RenewalKind.EXPONENTIAL else int(self.params[0])
            scale = math.exp(k * math.log(k) - math.lgamma(k))
            body = scale * _power_integral(j + k - 1, k + s, cap)
            tail = 0.0 if math.isinf(cap) else float(special.gammaincc(k, k * cap))
            return body, tail
        if self.kind is RenewalKind.HYPEREXPONENTIAL:
            p, r1, r2 = self.params
            body = p * r1 * _power_integral(j, r1 + s, cap) + (1 - p) * r2 * _power_integral(j, r2 + s, cap)
            tail = 0.0 if math.isinf(cap) else p * math.exp(-r1 * cap) + (1 - p) * math.exp(-r2 * cap)
            return body, tail
        if self.is_deterministic:
            if cap < 1.0:
                return 0.0, 1.0
            return _exp(-s), 0.0
        w = self.params[0]
        lo, hi = 1 - w, 1 + w
        if cap <= lo:
            return 0.0, 1.0
        body = _interval_integral(j, s, lo, min(hi, cap)) / (2 * w)
        tail = 0.0 if cap >= hi else (hi - cap) / (2 * w)
        return body, tail

    def truncated_laplace(self, s: float, cap: float = INFINITE_CAP) -> float:
        """
        Truncated Laplace transform E[exp(-s (T ^ cap))].

        Parameters:
            s (float): Transform argument, any real
            cap (float): Truncation level (> 0); INFINITE_CAP gives the plain transform

        Returns:
            float: Transform value in (0, inf]
        """
        if cap <= 0:
            raise ValueError("cap must be positive")
        if s == 0:
            return 1.0
        body, tail = self._partial(0, s, cap)
        if tail > 0:
            body += tail * _exp(-s * cap)
        return body

    def truncated_laplace_derivative(self, s: float, cap: float = INFINITE_CAP) -> float:
        """Derivative in s of the truncated transform: -E[(T ^ cap) exp(-s (T ^ cap))]."""
        if cap <= 0:
            raise ValueError("cap must be positive")
        body, tail = self._partial(1, s, cap)
        if tail > 0:
            body += tail * cap * _exp(-s * cap)
        return -body

    def truncated_moment(self, j: int, cap: float = INFINITE_CAP) -> float:
        """E[(T ^ cap)^j], the checked moment used by the Palm estimators."""
        if math.isinf(cap):
            return self.moment(j)
        body, tail = self._partial(j, 0.0, cap)
        return body + tail * cap ** j

    def sample_block(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """
        Draw `size` independent inter-event times.

        Parameters:
            rng (np.random.Generator): Random stream
            size (int): Number of draws

        Returns:
            np.ndarray: Array of positive draws
        """
        if self.kind is RenewalKind.EXPONENTIAL:
            return rng.exponential(1.0, size)
        if self.is_deterministic:
            return np.ones(size)
        if self.kind is RenewalKind.ERLANG:
            k = self.params[0]
            return rng.gamma(k, 1.0 / k, size)
        if self.kind is RenewalKind.HYPEREXPONENTIAL:
            p, r1, r2 = self.params
            rates = np.where(rng.random(size) < p, r1, r2)
            return rng.exponential(1.0, size) / rates
        w = self.params[0]
        return rng.uniform(1 - w, 1 + w, size)

    def to_dict(self) -> Dict[str, Any]:
        """Serialize to the JSON fragment accepted by make_renewal."""
        if self.kind is RenewalKind.ERLANG:
            return {"kind": self.kind.value, "k": int(self.params[0])}
        if self.kind is RenewalKind.HYPEREXPONENTIAL:
            p, r1, r2 = self.params
            return {"kind": self.kind.value, "p": p, "r1": r1, "r2": r2}
        if self.kind is RenewalKind.UNIFORM:
            return {"kind": self.kind.value, "half_width": self.params[0]}
        return {"kind": self.kind.value}


def make_renewal(kind: str, params: Dict[str, Any] = None) -> RenewalSpec:
    """
    Build a unit-mean RenewalSpec from a kind and its parameters.

    Parameters:
        kind (str): One of exponential, deterministic, erlang, hyperexponential, uniform
        params (dict): Kind-specific parameters: {"k": int} for erlang,
                       {"p", "r1", "r2"} for hyperexponential (rates are rescaled
                       so that the mean is 1), {"half_width"} in [0, 1) for uniform

    Returns:
        RenewalSpec: Normalized spec with scv and third_moment filled in

    Raises:
        ValueError: If the parameters are not admissible
    """
    params = dict(params or {})
    try:
        kind_enum = RenewalKind(str(kind).lower())
    except ValueError:
        raise ValueError(f"Unknown renewal kind '{kind}' (expected one of: {', '.join(k.value for k in RenewalKind)})")

    if kind_enum is RenewalKind.ERLANG:
        k = params.get("k")
        if isinstance(k, bool) or not isinstance(k, (int, float)) or int(k) != k or k < 1:
            raise ValueError(f"erlang.k must be a positive integer, got {k!r}")
        norm = (float(int(k)),)
    elif kind_enum is RenewalKind.HYPEREXPONENTIAL:
        p, r1, r2 = params.get("p"), params.get("r1"), params.get("r2")
        for name, value in (("p", p), ("r1", r1), ("r2", r2)):
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"hyperexponential.{name} must be a finite number, got {value!r}")
        if not 0 < p < 1:
            raise ValueError(f"hyperexponential.p must lie in (0, 1), got {p}")
        if r1 <= 0 or r2 <= 0:
            raise ValueError("hyperexponential rates r1 and r2 must be positive")
        mean = p / r1 + (1 - p) / r2
        norm = (float(p), float(r1 * mean), float(r2 * mean))
    elif kind_enum is RenewalKind.UNIFORM:
        w = params.get("half_width", params.get("w"))
        if isinstance(w, bool) or not isinstance(w, (int, float)) or not 0 <= w < 1:
            raise ValueError(f"uniform.half_width must lie in [0, 1) so the support stays positive, got {w!r}")
        norm = (float(w),)
    else:
        norm = ()

    draft = RenewalSpec(kind=kind_enum, params=norm)
    second, third = draft.moment(2), draft.moment(3)
    spec = RenewalSpec(kind=kind_enum, params=norm, scv=max(second - 1.0, 0.0), third_moment=third)
    if abs(spec.moment(1) - 1.0) > 1e-12:
        raise ValueError(f"{kind_enum.value} parameters cannot be normalized to unit mean")
    logging.debug(f"Renewal spec {spec.to_dict()} (scv={spec.scv:.6g}, E[T^3]={spec.third_moment:.6g})", extra={"indent": 2})
    return spec


def renewal_from_dict(data: Dict[str, Any]) -> RenewalSpec:
    """Build a RenewalSpec from its JSON fragment, e.g. {"kind": "erlang", "k": 2}."""
    if not isinstance(data, dict) or "kind" not in data:
        raise ValueError("renewal fragment must be an object with a 'kind' field")
    params = {key: value for key, value in data.items() if key != "kind"}
    return make_renewal(data["kind"], params)


def sample(spec: RenewalSpec, rng_stream: np.random.Generator) -> float:
    """Draw a single inter-event time from spec."""
    return float(spec.sample_block(rng_stream, 1)[0])


def truncated_laplace(spec: RenewalSpec, s: float, cap: float = INFINITE_CAP) -> float:
    """E[exp(-s (T ^ cap))] for spec (see RenewalSpec.truncated_laplace)."""
    return spec.truncated_laplace(s, cap)


class RenewalStream:
    """
    Block-buffered iterator of draws from one RenewalSpec.

    Refills draw `block` values at once from the owning Generator, so the draw
    sequence only depends on (spec, generator state, block).
    """

    def __init__(self, spec: RenewalSpec, rng: np.random.Generator, block: int = 4096):
        self.spec = spec
        self.rng = rng
        self.block = int(block)
        self._buffer = []
        self._iter = iter(self._buffer)

    def __iter__(self) -> Iterator[float]:
        return self

    def __next__(self) -> float:
        try:
            return next(self._iter)
        except StopIteration:
            self._buffer = self.spec.sample_block(self.rng, self.block).tolist()
            self._iter = iter(self._buffer)
            return next(self._iter)
