#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
JSON experiment descriptions.

A document looks like

    {
      "model":   {"levels": [1.0], "regions": [{"lambda": 1, "mu": 1, "lambda_star": 0, "mu_star": 0.5}, ...]},
      "arrival": {"kind": "exponential"},
      "service": {"kind": "erlang", "k": 2},
      "n_list": [25, 100, 400],
      "events": 1000000,
      "burn_in_fraction": 0.1,
      "seed": 42,
      "replications": 4,
      "probes": [0.5, 1.0],
      "outputs": "./results",
      "clocks":    {"theta": [-1, 0, 1], "u_grid": [0, 1, 10, 100]},
      "fluid":     {"y": 10000, "t_grid": [0, 1, 2, 3], "initial": "fresh"},
      "diffusion": {"step": 0.001, "steps": 100000, "burn_in": 5000, "paths": 100, "reflection": "mirror"},
      "limit":     {"u_max": 8.0, "points": 801}
    }

Only model, arrival, service and n_list are required.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

from app.utils.config import config
from app.utils.errors import ConfigError
from app.utils.primitives import RenewalSpec, renewal_from_dict
from app.utils.profile import ScaledSystem, SpeedProfile

MIN_EVENTS = 10_000
SEED_LIMIT = 1 << 64


@dataclass(frozen=True)
class ClockSettings:
    theta: Tuple[float, ...] = (-1.0, -0.5, 0.0, 0.5, 1.0)
    u_grid: Tuple[float, ...] = (0.0, 0.5, 1.0, 5.0, 10.0, 100.0)

    def to_dict(self) -> Dict[str, Any]:
        return {"theta": list(self.theta), "u_grid": list(self.u_grid)}


@dataclass(frozen=True)
class FluidSettings:
    y: float = 10_000.0
    t_grid: Tuple[float, ...] = tuple(0.25 * k for k in range(25))
    initial: str = "fresh"

    def to_dict(self) -> Dict[str, Any]:
        return {"y": self.y, "t_grid": list(self.t_grid), "initial": self.initial}


@dataclass(frozen=True)
class DiffusionSettings:
    step: float = 1e-3
    steps: int = 100_000
    burn_in: int = 5_000
    paths: int = 100
    reflection: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {"step": self.step, "steps": self.steps, "burn_in": self.burn_in, "paths": self.paths}
        if self.reflection is not None:
            data["reflection"] = self.reflection
        return data


@dataclass(frozen=True)
class LimitSettings:
    u_max: Optional[float] = None
    points: int = 801

    def to_dict(self) -> Dict[str, Any]:
        data = {"points": self.points}
        if self.u_max is not None:
            data["u_max"] = self.u_max
        return data


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One experiment: a speed profile, two renewal primitives and run-scale settings.

    Attributes:
        model (SpeedProfile): Speed profile of the family
        arrival (RenewalSpec): Unit-mean inter-arrival law
        service (RenewalSpec): Unit-mean service law
        n_list (tuple): Scaling indices
        events (int): Events per replication (burn-in included)
        burn_in_fraction (float): Discarded share of events
        seed (int): 64-bit experiment seed
        replications (int): Independent replications per n
        probes (tuple): Scaled levels x for the Palm report (empty: levels and their midpoints)
        outputs (str): Output directory
    """

    model: SpeedProfile
    arrival: RenewalSpec
    service: RenewalSpec
    n_list: Tuple[int, ...]
    events: int = 1_000_000
    burn_in_fraction: float = 0.1
    seed: int = 0
    replications: int = 1
    probes: Tuple[float, ...] = ()
    outputs: str = "./results"
    clocks: ClockSettings = field(default_factory=ClockSettings)
    fluid: FluidSettings = field(default_factory=FluidSettings)
    diffusion: DiffusionSettings = field(default_factory=DiffusionSettings)
    limit: LimitSettings = field(default_factory=LimitSettings)

    def system(self, n: int) -> ScaledSystem:
        return ScaledSystem(n=int(n), profile=self.model, arrival=self.arrival, service=self.service)

    def systems(self) -> List[ScaledSystem]:
        return [self.system(n) for n in self.n_list]

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """
        Apply command-line overrides (None values are ignored) and re-validate.

        Raises:
            ConfigError: If an override breaks an invariant
        """
        changes = {key: value for key, value in overrides.items() if value is not None}
        if "n_list" in changes:
            changes["n_list"] = tuple(int(n) for n in changes["n_list"])
        updated = replace(self, **changes)
        errors = []
        _check_run_scale(updated.to_dict(), errors)
        if errors:
            raise ConfigError(errors)
        return updated

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model.to_dict(),
            "arrival": self.arrival.to_dict(),
            "service": self.service.to_dict(),
            "n_list": list(self.n_list),
            "events": self.events,
            "burn_in_fraction": self.burn_in_fraction,
            "seed": self.seed,
            "replications": self.replications,
            "probes": list(self.probes),
            "outputs": self.outputs,
            "clocks": self.clocks.to_dict(),
            "fluid": self.fluid.to_dict(),
            "diffusion": self.diffusion.to_dict(),
            "limit": self.limit.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """
        Parse and validate an experiment document.

        Raises:
            ConfigError: Listing every offending field path
        """
        if not isinstance(data, dict):
            raise ConfigError(["experiment must be a JSON object"])
        errors: List[str] = []

        model = None
        if "model" not in data:
            errors.append("model is required")
        else:
            try:
                model = SpeedProfile.from_dict(data["model"], "model")
            except ConfigError as e:
                errors.extend(e.errors)

        renewals = {}
        for key in ("arrival", "service"):
            if key not in data:
                errors.append(f"{key} is required")
                continue
            try:
                renewals[key] = renewal_from_dict(data[key])
            except ValueError as e:
                errors.append(f"{key}: {e}")

        _check_run_scale(data, errors)
        clocks = _parse_clocks(data.get("clocks", {}), errors)
        fluid = _parse_fluid(data.get("fluid", {}), errors)
        diffusion = _parse_diffusion(data.get("diffusion", {}), errors)
        limit = _parse_limit(data.get("limit", {}), errors)

        unknown = set(data) - {
            "model", "arrival", "service", "n_list", "events", "burn_in_fraction", "seed",
            "replications", "probes", "outputs", "clocks", "fluid", "diffusion", "limit",
        }
        for key in sorted(unknown):
            errors.append(f"{key} is not a known field")

        if errors:
            raise ConfigError(errors)

        return cls(
            model=model,
            arrival=renewals["arrival"],
            service=renewals["service"],
            n_list=tuple(int(n) for n in data["n_list"]),
            events=int(data.get("events", cls.events)),
            burn_in_fraction=float(data.get("burn_in_fraction", config.simulation.burnInFraction)),
            seed=int(data.get("seed", 0)),
            replications=int(data.get("replications", 1)),
            probes=tuple(float(x) for x in data.get("probes", [])),
            outputs=str(data.get("outputs", config.general.outputs)),
            clocks=clocks,
            fluid=fluid,
            diffusion=diffusion,
            limit=limit,
        )


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _number_list(value: Any, where: str, errors: List[str], nonnegative: bool = False) -> Tuple[float, ...]:
    if not isinstance(value, list):
        errors.append(f"{where} must be a list of numbers")
        return ()
    result = []
    for i, item in enumerate(value):
        if not _is_number(item) or (nonnegative and item < 0):
            errors.append(f"{where}[{i}] must be a {'nonnegative ' if nonnegative else ''}finite number")
        else:
            result.append(float(item))
    return tuple(result)


def _check_run_scale(data: Dict[str, Any], errors: List[str]) -> None:
    n_list = data.get("n_list")
    if not isinstance(n_list, (list, tuple)) or not n_list:
        errors.append("n_list must be a non-empty list of positive integers")
    else:
        for i, n in enumerate(n_list):
            if not _is_int(n) or n < 1:
                errors.append(f"n_list[{i}] must be a positive integer")

    events = data.get("events", ExperimentConfig.events)
    if not _is_int(events) or events < MIN_EVENTS:
        errors.append(f"events must be an integer >= {MIN_EVENTS}")

    fraction = data.get("burn_in_fraction", 0.1)
    if not _is_number(fraction) or not 0 <= fraction < 1:
        errors.append("burn_in_fraction must be a number in [0, 1)")

    seed = data.get("seed", 0)
    if not _is_int(seed) or not 0 <= seed < SEED_LIMIT:
        errors.append("seed must be an unsigned 64-bit integer")

    replications = data.get("replications", 1)
    if not _is_int(replications) or replications < 1:
        errors.append("replications must be an integer >= 1")

    if "probes" in data:
        _number_list(data["probes"], "probes", errors, nonnegative=True)

    outputs = data.get("outputs", "")
    if not isinstance(outputs, str):
        errors.append("outputs must be a directory path")


def _section(data: Any, where: str, errors: List[str]) -> Optional[Dict[str, Any]]:
    if not isinstance(data, dict):
        errors.append(f"{where} must be an object")
        return None
    return data


def _parse_clocks(data: Any, errors: List[str]) -> ClockSettings:
    data = _section(data, "clocks", errors)
    if data is None:
        return ClockSettings()
    defaults = ClockSettings()
    theta = _number_list(data["theta"], "clocks.theta", errors) if "theta" in data else defaults.theta
    u_grid = _number_list(data["u_grid"], "clocks.u_grid", errors, nonnegative=True) if "u_grid" in data else defaults.u_grid
    return ClockSettings(theta=theta, u_grid=u_grid)


def _parse_fluid(data: Any, errors: List[str]) -> FluidSettings:
    data = _section(data, "fluid", errors)
    if data is None:
        return FluidSettings()
    defaults = FluidSettings()
    y = data.get("y", defaults.y)
    if not _is_number(y) or y < 1:
        errors.append("fluid.y must be a number >= 1")
        y = defaults.y
    t_grid = _number_list(data["t_grid"], "fluid.t_grid", errors, nonnegative=True) if "t_grid" in data else defaults.t_grid
    if any(b < a for a, b in zip(t_grid, t_grid[1:])):
        errors.append("fluid.t_grid must be nondecreasing")
    initial = data.get("initial", defaults.initial)
    if initial not in ("delayed", "fresh"):
        errors.append("fluid.initial must be 'delayed' or 'fresh'")
    return FluidSettings(y=float(y), t_grid=t_grid, initial=initial)


def _parse_diffusion(data: Any, errors: List[str]) -> DiffusionSettings:
    data = _section(data, "diffusion", errors)
    if data is None:
        return DiffusionSettings()
    defaults = DiffusionSettings()
    step = data.get("step", defaults.step)
    max_step = float(config.diffusion.maxStep)
    if not _is_number(step) or not 0 < step < max_step:
        errors.append(f"diffusion.step must lie in (0, {max_step})")
    values = {}
    for key in ("steps", "burn_in", "paths"):
        value = data.get(key, getattr(defaults, key))
        if not _is_int(value) or value < (1 if key == "paths" else 0):
            errors.append(f"diffusion.{key} must be a {'positive' if key == 'paths' else 'nonnegative'} integer")
        values[key] = value
    reflection = data.get("reflection")
    if reflection is not None and reflection not in ("mirror", "projection"):
        errors.append("diffusion.reflection must be 'mirror' or 'projection'")
    return DiffusionSettings(step=step, reflection=reflection, **values)


def _parse_limit(data: Any, errors: List[str]) -> LimitSettings:
    data = _section(data, "limit", errors)
    if data is None:
        return LimitSettings()
    u_max = data.get("u_max")
    if u_max is not None and (not _is_number(u_max) or u_max <= 0):
        errors.append("limit.u_max must be a positive number")
    points = data.get("points", LimitSettings.points)
    if not _is_int(points) or points < 2:
        errors.append("limit.points must be an integer >= 2")
    return LimitSettings(u_max=u_max, points=points)


def load_experiment(path: str) -> ExperimentConfig:
    """
    Read and validate an experiment JSON file.

    Parameters:
        path (str): Path to the JSON document

    Returns:
        ExperimentConfig: Parsed experiment

    Raises:
        ConfigError: If the file is missing, not valid JSON or fails validation
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError([f"config file '{path}' does not exist"])
    except json.JSONDecodeError as e:
        raise ConfigError([f"config file '{path}' is not valid JSON: {e}"])
    experiment = ExperimentConfig.from_dict(data)
    logging.debug(f"Loaded experiment from {path}: n_list={list(experiment.n_list)}", extra={"indent": 2})
    return experiment
