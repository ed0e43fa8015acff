#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Event-driven simulation of the state-dependent single-server queue.

The state (L, R_e, R_d) is a piecewise-deterministic Markov process: between
events both residual clocks decrease linearly at the speeds of the current
queue length, so the next event time is computed exactly and no time grid is
involved.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.utils.common import make_generator
from app.utils.config import config
from app.utils.errors import QueueOverflowError, SimulationFault, UnstableSystemError
from app.utils.interrupt import check_interrupted
from app.utils.palm import PalmAccumulators
from app.utils.primitives import RenewalStream, sample
from app.utils.profile import ScaledSystem, stability_report


class Event(str, Enum):
    ARRIVAL = "arrival"
    DEPARTURE = "departure"
    SIMULTANEOUS = "simultaneous"


@dataclass
class SystemState:
    """Queue length L, nominal residual arrival time R_e, nominal residual service time R_d, clock t."""

    L: int = 0
    R_e: float = 0.0
    R_d: float = 0.0
    t: float = 0.0


def next_event(L: int, R_e: float, R_d: float, lam: float, mu: float, tie_tolerance: float) -> Tuple[float, Event]:
    """
    Time to the next event and its type.

    The service clock is frozen while the queue is empty. Two clocks that
    expire within a relative distance of tie_tolerance fire together.

    Raises:
        SimulationFault: If a speed is not positive or the event time is not finite
    """
    if lam <= 0 or (L > 0 and mu <= 0):
        raise SimulationFault(f"Speeds must be positive at L={L} (lambda={lam}, mu={mu})")
    t_e = R_e / lam
    if L > 0:
        t_d = R_d / mu
        if abs(t_e - t_d) <= tie_tolerance * max(t_e, t_d):
            dt, event = max(t_e, t_d), Event.SIMULTANEOUS
        elif t_e < t_d:
            dt, event = t_e, Event.ARRIVAL
        else:
            dt, event = t_d, Event.DEPARTURE
    else:
        dt, event = t_e, Event.ARRIVAL
    if not math.isfinite(dt) or dt < 0:
        raise SimulationFault(f"Next event time is not finite (L={L}, R_e={R_e}, R_d={R_d}, lambda={lam}, mu={mu})")
    return dt, event


def step(sys: ScaledSystem, state: SystemState, rng: np.random.Generator, tie_tolerance: float = None) -> Tuple[SystemState, Event]:
    """
    Advance the process to its next event.

    Arrivals are applied before departures at a simultaneous epoch, so a tie
    leaves L unchanged and redraws both clocks.

    Parameters:
        sys (ScaledSystem): System providing speeds and primitives
        state (SystemState): Current state (not modified)
        rng (np.random.Generator): Source of the redrawn clocks

    Returns:
        Tuple[SystemState, Event]: New state and the event that occurred
    """
    tie_tolerance = config.simulation.tieTolerance if tie_tolerance is None else tie_tolerance
    lam, mu = sys.speeds_at(state.L)
    dt, event = next_event(state.L, state.R_e, state.R_d, lam, mu, tie_tolerance)

    L = state.L
    R_e = state.R_e - lam * dt
    R_d = state.R_d - mu * dt if L > 0 else state.R_d

    if event is not Event.DEPARTURE:
        R_e = sample(sys.arrival, rng)
        L += 1
    if event is not Event.ARRIVAL:
        R_d = sample(sys.service, rng)
        L -= 1
    return SystemState(L=L, R_e=max(R_e, 0.0), R_d=max(R_d, 0.0), t=state.t + dt), event


@dataclass
class EmpiricalLaw:
    """
    Time-weighted estimate of the stationary queue-length law.

    Attributes:
        n (int): Scaling index
        time_weights (list): Post-burn-in sojourn time at each queue length (index = L)
        total_time (float): Clock time at the end of the run
        burn_in (float): Clock time at which statistics started
        arrivals (int): Post-burn-in arrivals N_e
        departures (int): Post-burn-in departures N_d
        horizon (int): Events simulated (burn-in included)
        burn_in_events (int): Events discarded
        L_start (int): Queue length when statistics started
        L_end (int): Queue length at the end
        diagnostics (dict): Invariant counters of the run
    """

    n: int
    time_weights: List[float] = field(default_factory=list)
    total_time: float = 0.0
    burn_in: float = 0.0
    arrivals: int = 0
    departures: int = 0
    horizon: int = 0
    burn_in_events: int = 0
    L_start: int = 0
    L_end: int = 0
    seed: Optional[int] = None
    replications: int = 1
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def observed_time(self) -> float:
        return self.total_time - self.burn_in

    @property
    def is_empty(self) -> bool:
        return self.observed_time <= 0 or not self.time_weights

    def masses(self) -> np.ndarray:
        """P_hat[L = ell] for ell = 0 .. max visited."""
        weights = np.asarray(self.time_weights, dtype=float)
        total = weights.sum()
        return weights / total if total > 0 else weights

    def mass(self, ell: int) -> float:
        masses = self.masses()
        return float(masses[ell]) if 0 <= ell < len(masses) else 0.0

    def scaled(self) -> "ScaledLaw":
        """The law of n^{-1/2} L as atoms on the scaled lattice."""
        masses = self.masses()
        return ScaledLaw(n=self.n, atoms=np.arange(len(masses)) / math.sqrt(self.n), masses=masses)

    def merge(self, other: "EmpiricalLaw") -> "EmpiricalLaw":
        """
        Combine two independent runs of the same system.

        Sojourn times, clock times and counters add; invariant maxima take the
        larger value. The operation is associative and commutative.
        """
        if other.n != self.n:
            raise ValueError(f"Cannot merge laws of different systems (n={self.n} vs n={other.n})")
        size = max(len(self.time_weights), len(other.time_weights))
        weights = [
            (self.time_weights[i] if i < len(self.time_weights) else 0.0)
            + (other.time_weights[i] if i < len(other.time_weights) else 0.0)
            for i in range(size)
        ]
        diagnostics = {}
        for key in set(self.diagnostics) | set(other.diagnostics):
            a, b = self.diagnostics.get(key, 0.0), other.diagnostics.get(key, 0.0)
            diagnostics[key] = max(a, b) if key.startswith("max_") else a + b
        return EmpiricalLaw(
            n=self.n,
            time_weights=weights,
            total_time=self.total_time + other.total_time,
            burn_in=self.burn_in + other.burn_in,
            arrivals=self.arrivals + other.arrivals,
            departures=self.departures + other.departures,
            horizon=self.horizon + other.horizon,
            burn_in_events=self.burn_in_events + other.burn_in_events,
            L_start=self.L_start + other.L_start,
            L_end=self.L_end + other.L_end,
            seed=self.seed if self.seed == other.seed else None,
            replications=self.replications + other.replications,
            diagnostics=diagnostics,
        )

    def to_csv_rows(self) -> List[Dict[str, Any]]:
        sqrt_n = math.sqrt(self.n)
        return [
            {"ell": ell, "scaled_u": ell / sqrt_n, "mass": float(mass)}
            for ell, mass in enumerate(self.masses())
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "seed": self.seed,
            "events": self.horizon,
            "burn_in_events": self.burn_in_events,
            "replications": self.replications,
            "total_time": self.total_time,
            "burn_in": self.burn_in,
            "arrivals": self.arrivals,
            "departures": self.departures,
            "L_start": self.L_start,
            "L_end": self.L_end,
            "diagnostics": dict(self.diagnostics),
            "time_weights": list(self.time_weights),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EmpiricalLaw":
        return cls(
            n=int(data["n"]),
            time_weights=[float(w) for w in data.get("time_weights", [])],
            total_time=float(data.get("total_time", 0.0)),
            burn_in=float(data.get("burn_in", 0.0)),
            arrivals=int(data.get("arrivals", 0)),
            departures=int(data.get("departures", 0)),
            horizon=int(data.get("events", 0)),
            burn_in_events=int(data.get("burn_in_events", 0)),
            L_start=int(data.get("L_start", 0)),
            L_end=int(data.get("L_end", 0)),
            seed=data.get("seed"),
            replications=int(data.get("replications", 1)),
            diagnostics=dict(data.get("diagnostics", {})),
        )


@dataclass
class ScaledLaw:
    """Atomic law on the scaled lattice {ell / n^{1/2}}."""

    n: int
    atoms: np.ndarray
    masses: np.ndarray

    def cdf(self, u) -> np.ndarray:
        """Right-continuous atomic CDF."""
        cumulative = np.cumsum(self.masses)
        idx = np.searchsorted(self.atoms, np.asarray(u, dtype=float), side="right")
        return np.where(idx > 0, cumulative[np.maximum(idx - 1, 0)], 0.0)

    def histogram_cdf(self, u) -> np.ndarray:
        """CDF with each atom's mass spread uniformly over [ell, ell + 1) / n^{1/2}."""
        if not len(self.masses):
            return np.zeros_like(np.asarray(u, dtype=float))
        width = 1.0 / math.sqrt(self.n)
        position = np.clip(np.asarray(u, dtype=float) / width, 0.0, None)
        cell = np.floor(position).astype(int)
        cumulative = np.concatenate(([0.0], np.cumsum(self.masses)))
        below = cumulative[np.minimum(cell, len(self.masses))]
        inside = np.where(cell < len(self.masses), self.masses[np.minimum(cell, len(self.masses) - 1)], 0.0)
        return below + inside * (position - cell)


def _prepare_speeds(sys: ScaledSystem, lam_of: List[float], mu_of: List[float], upto: int) -> None:
    for ell in range(len(lam_of), upto + 1):
        lam, mu = sys.speeds_at(ell)
        lam_of.append(lam)
        mu_of.append(mu)


def run_stationary(
    sys: ScaledSystem,
    horizon_events: int,
    burn_in_fraction: float = None,
    seed: int = 0,
    replication: int = 0,
    allow_unstable: bool = False,
    initial: Optional[SystemState] = None,
) -> Tuple[EmpiricalLaw, PalmAccumulators]:
    """
    Simulate one path and collect its time-weighted law and Palm sums.

    The first burn_in_fraction * horizon_events events are discarded. Palm
    sums are kept for every queue length: at arrivals the checked pre-jump
    service residual R_d(0-) ^ n^{1/2} keyed by L(0-), at departures the
    checked arrival residual R_e(0) ^ n^{1/2} keyed by L(0).

    Parameters:
        sys (ScaledSystem): System to simulate
        horizon_events (int): Events to simulate, burn-in included
        burn_in_fraction (float): Discarded share of events (default simulation.burnInFraction)
        seed (int): Experiment seed
        replication (int): Replication index selecting the private random stream
        allow_unstable (bool): Simulate even when gamma_inf >= 0
        initial (SystemState): Start state; default L=0 with fresh clock draws

    Returns:
        Tuple[EmpiricalLaw, PalmAccumulators]: Law and Palm accumulators of the run

    Raises:
        UnstableSystemError: gamma_inf >= 0 and allow_unstable is False
        QueueOverflowError: L exceeded simulation.queueCap
        SimulationFault: A non-finite event time occurred
    """
    report = stability_report(sys)
    if not report.stable:
        if not allow_unstable:
            raise UnstableSystemError(report.gamma_inf)
        logging.warning(f"Simulating an unstable system (gamma_inf = {report.gamma_inf:.6g}) on explicit override")

    burn_in_fraction = config.simulation.burnInFraction if burn_in_fraction is None else burn_in_fraction
    horizon_events = int(horizon_events)
    burn_in_events = int(burn_in_fraction * horizon_events)
    tie_tolerance = float(config.simulation.tieTolerance)
    queue_cap = int(config.simulation.queueCap)
    check_every = int(config.simulation.interruptCheckEvery)
    block = int(config.simulation.samplerBlock)
    cap = sys.sqrt_n

    rng = make_generator(seed, replication)
    arrival_rng, service_rng = rng.spawn(2)
    draw_arrival = RenewalStream(sys.arrival, arrival_rng, block).__next__
    draw_service = RenewalStream(sys.service, service_rng, block).__next__

    if initial is None:
        L, R_e, R_d, t = 0, draw_arrival(), draw_service(), 0.0
    else:
        L, R_e, R_d, t = initial.L, initial.R_e, initial.R_d, initial.t

    law = EmpiricalLaw(n=sys.n, horizon=horizon_events, burn_in_events=burn_in_events, seed=seed)
    acc = PalmAccumulators(n=sys.n)
    lam_of, mu_of = [], []
    _prepare_speeds(sys, lam_of, mu_of, L + 1)

    weights = law.time_weights
    arr_count, dep_count = acc.arr_count, acc.dep_count
    arr_1, arr_2, arr_3, arr_4 = acc.arr_sums
    dep_1, dep_2, dep_3, dep_4 = acc.dep_sums

    recording = burn_in_events == 0
    t_start, L_start = t, L
    arrivals = departures = simultaneous = 0
    max_arrival_residual = max_departure_residual = 0.0
    countdown = check_every

    logging.debug(
        f"Simulating n={sys.n}, events={horizon_events}, burn-in={burn_in_events}, seed={seed}, replication={replication}",
        extra={"indent": 2},
    )

    for index in range(horizon_events):
        if not recording and index >= burn_in_events:
            recording = True
            t_start, L_start = t, L

        lam = lam_of[L]
        mu = mu_of[L]

        # inline next_event() for speed
        t_e = R_e / lam
        if L > 0:
            t_d = R_d / mu
            if abs(t_e - t_d) <= tie_tolerance * (t_e if t_e > t_d else t_d):
                dt = t_e if t_e > t_d else t_d
                event_arrival = event_departure = True
            elif t_e < t_d:
                dt, event_arrival, event_departure = t_e, True, False
            else:
                dt, event_arrival, event_departure = t_d, False, True
        else:
            dt, event_arrival, event_departure = t_e, True, False
        if not math.isfinite(dt):
            raise SimulationFault(f"Next event time is not finite at L={L} (R_e={R_e}, R_d={R_d})")

        R_e -= lam * dt
        if L > 0:
            R_d -= mu * dt
        t += dt

        if recording:
            if L >= len(weights):
                weights.extend([0.0] * (L + 1 - len(weights)))
            weights[L] += dt

        if event_arrival:
            if recording:
                residual = abs(R_e)
                if residual > max_arrival_residual:
                    max_arrival_residual = residual
                if L >= len(arr_count):
                    acc.grow(L)
                r = R_d if R_d < cap else cap
                r2 = r * r
                arr_count[L] += 1
                arr_1[L] += r
                arr_2[L] += r2
                arr_3[L] += r2 * r
                arr_4[L] += r2 * r2
                arrivals += 1
            R_e = draw_arrival()
            L += 1
            if L > queue_cap:
                raise QueueOverflowError(f"Queue length exceeded the cap of {queue_cap} at t={t:.6g}")
            if L + 1 >= len(lam_of):
                _prepare_speeds(sys, lam_of, mu_of, 2 * L + 1)

        if event_departure:
            if recording:
                residual = abs(R_d)
                if residual > max_departure_residual:
                    max_departure_residual = residual
            R_d = draw_service()
            L -= 1
            if recording:
                if L >= len(dep_count):
                    acc.grow(L)
                r = R_e if R_e < cap else cap
                r2 = r * r
                dep_count[L] += 1
                dep_1[L] += r
                dep_2[L] += r2
                dep_3[L] += r2 * r
                dep_4[L] += r2 * r2
                departures += 1
                if event_arrival:
                    simultaneous += 1

        countdown -= 1
        if countdown == 0:
            countdown = check_every
            check_interrupted()
            logging.debug(f"n={sys.n} rep={replication}: {index + 1}/{horizon_events} events, t={t:.6g}, L={L}", extra={"indent": 4})

    if not recording:
        t_start, L_start = t, L

    law.total_time = t
    law.burn_in = t_start
    law.arrivals = arrivals
    law.departures = departures
    law.L_start = L_start
    law.L_end = L
    law.diagnostics = {
        "max_arrival_residual": max_arrival_residual,
        "max_departure_residual": max_departure_residual,
        "counting_residual": float(abs((arrivals - departures) - (L - L_start))),
        "simultaneous": float(simultaneous),
    }
    acc.total_time = law.observed_time
    return law, acc


@dataclass
class FluidTrajectory:
    """Sampled path of L(y t) / y."""

    y: float
    t_grid: np.ndarray
    values: np.ndarray
    initial: str

    def to_csv_rows(self, reference: Optional[Sequence[float]] = None) -> List[Dict[str, Any]]:
        rows = []
        for i, (t, value) in enumerate(zip(self.t_grid, self.values)):
            row = {"t": float(t), "L_bar": float(value)}
            if reference is not None:
                row["reference"] = float(reference[i])
                row["abs_error"] = abs(float(value) - float(reference[i]))
            rows.append(row)
        return rows


def _fluid_start(sys: ScaledSystem, y: float, initial: str, draw_arrival: Callable, draw_service: Callable) -> SystemState:
    if initial == "delayed":
        return SystemState(L=math.floor(y), R_e=float(y), R_d=float(y))
    if initial == "fresh":
        return SystemState(L=math.floor(y), R_e=draw_arrival(), R_d=draw_service())
    raise ValueError(f"initial must be 'delayed' or 'fresh', got {initial!r}")


def run_fluid(
    sys: ScaledSystem,
    y: float,
    t_grid: Sequence[float],
    initial: str = "delayed",
    seed: int = 0,
) -> FluidTrajectory:
    """
    Simulate the fluid-scaled path L(y t) / y from a large initial level.

    Parameters:
        sys (ScaledSystem): Stable system (gamma_inf < 0)
        y (float): Initial level and time scale
        t_grid (Sequence[float]): Nondecreasing nonnegative sample times
        initial (str): "delayed" starts at (floor(y), y, y); "fresh" draws both clocks
        seed (int): Experiment seed

    Returns:
        FluidTrajectory: Sampled trajectory
    """
    report = stability_report(sys)
    if not report.stable:
        raise UnstableSystemError(report.gamma_inf, f"Fluid check needs gamma_inf < 0, got {report.gamma_inf:.6g}")
    grid = np.asarray(t_grid, dtype=float)
    if grid.size and (np.any(np.diff(grid) < 0) or grid[0] < 0):
        raise ValueError("t_grid must be nondecreasing and nonnegative")

    rng = make_generator(seed, 0)
    arrival_rng, service_rng = rng.spawn(2)
    block = int(config.simulation.samplerBlock)
    draw_arrival = RenewalStream(sys.arrival, arrival_rng, block).__next__
    draw_service = RenewalStream(sys.service, service_rng, block).__next__
    tie_tolerance = float(config.simulation.tieTolerance)
    check_every = int(config.simulation.interruptCheckEvery)

    state = _fluid_start(sys, y, initial, draw_arrival, draw_service)
    L, R_e, R_d, t = state.L, state.R_e, state.R_d, 0.0
    values = np.empty(grid.size)
    countdown = check_every

    for i, target in enumerate(grid * y):
        while True:
            lam, mu = sys.speeds_at(L)
            dt, event = next_event(L, R_e, R_d, lam, mu, tie_tolerance)
            if t + dt > target:
                break
            R_e -= lam * dt
            if L > 0:
                R_d -= mu * dt
            t += dt
            if event is not Event.DEPARTURE:
                R_e = draw_arrival()
                L += 1
            if event is not Event.ARRIVAL:
                R_d = draw_service()
                L -= 1
            countdown -= 1
            if countdown == 0:
                countdown = check_every
                check_interrupted()
        values[i] = L / y

    logging.debug(f"Fluid path y={y} ({initial} start) sampled at {grid.size} points", extra={"indent": 2})
    return FluidTrajectory(y=float(y), t_grid=grid, values=values, initial=initial)


def fluid_reference(sys: ScaledSystem, t_grid: Sequence[float], initial: str = "delayed") -> np.ndarray:
    """
    Exact fluid limit of L(y t) / y for the tail speeds of sys.

    From a fresh start the limit is (1 + gamma_inf t)^+. From the (floor(y), y, y)
    start the arrival clock first fires at t = 1/lambda and the service clock
    at t = 1/mu, which delays the linear decrease:
    (1 + lambda (t - 1/lambda)^+ - mu (t - 1/mu)^+)^+.
    """
    grid = np.asarray(t_grid, dtype=float)
    lam, mu = sys.region_speeds(sys.profile.tail)
    if initial == "fresh":
        return np.maximum(0.0, 1.0 + (lam - mu) * grid)
    if initial == "delayed":
        path = 1.0 + lam * np.maximum(grid - 1.0 / lam, 0.0) - mu * np.maximum(grid - 1.0 / mu, 0.0)
        return np.maximum(0.0, path)
    raise ValueError(f"initial must be 'delayed' or 'fresh', got {initial!r}")
