import logging
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence, Tuple

from app.utils.config import config
from app.utils.palm import PalmAccumulators
from app.utils.profile import ScaledSystem, stability_report
from app.utils.errors import UnstableSystemError

from . import diffusion, simulator
from .diffusion import DiffusionConfig, HistogramLaw
from .simulator import EmpiricalLaw, FluidTrajectory, ScaledLaw, fluid_reference


def run_stationary(sys: ScaledSystem, horizon_events: int, burn_in_fraction: float = None, seed: int = 0, replication: int = 0, allow_unstable: bool = False):
    """
    Simulate one stationary path of the n-th system.

    This function provides a unified interface to the path engines. Currently
    the event-driven simulator is the only engine for the queue itself.

    Parameters:
        sys (ScaledSystem): System to simulate
        horizon_events (int): Events per replication, burn-in included
        burn_in_fraction (float): Discarded share of events
        seed (int): Experiment seed
        replication (int): Replication index
        allow_unstable (bool): Simulate even when gamma_inf >= 0

    Returns:
        Tuple[EmpiricalLaw, PalmAccumulators]: Law and Palm sums of the path
    """
    engine = "event"

    if engine == "event":
        return simulator.run_stationary(sys, horizon_events, burn_in_fraction, seed, replication, allow_unstable)


def run_fluid(sys: ScaledSystem, y: float, t_grid: Sequence[float], initial: str = "delayed", seed: int = 0) -> FluidTrajectory:
    """
    Simulate the fluid-scaled path L(y t) / y.

    Parameters:
        sys (ScaledSystem): Stable system
        y (float): Initial level and time scale
        t_grid (Sequence[float]): Sample times
        initial (str): "delayed" or "fresh" start
        seed (int): Experiment seed

    Returns:
        FluidTrajectory: Sampled trajectory
    """
    engine = "event"

    if engine == "event":
        return simulator.run_fluid(sys, y, t_grid, initial, seed)


def simulate_rbm(cfg: DiffusionConfig) -> HistogramLaw:
    """
    Simulate the reflected diffusion limit with a reflected Euler scheme.

    Parameters:
        cfg (DiffusionConfig): Drift, volatility and discretisation settings

    Returns:
        HistogramLaw: Histogram of the stationary states and boundary statistics
    """
    engine = "euler"

    if engine == "euler":
        return diffusion.simulate_rbm(cfg)


def _replication_worker(args: Tuple[ScaledSystem, int, Optional[float], int, int, bool]) -> Tuple[EmpiricalLaw, PalmAccumulators]:
    sys, events, burn_in_fraction, seed, replication, allow_unstable = args
    return run_stationary(sys, events, burn_in_fraction, seed, replication, allow_unstable)


def run_replications(
    sys: ScaledSystem,
    events: int,
    burn_in_fraction: float = None,
    seed: int = 0,
    replications: int = 1,
    workers: int = None,
    allow_unstable: bool = False,
) -> Tuple[EmpiricalLaw, PalmAccumulators]:
    """
    Run independent replications and merge them.

    Replication r uses the stream (seed, r), so the merged result does not
    depend on the number of workers.

    Parameters:
        sys (ScaledSystem): System to simulate
        events (int): Events per replication
        burn_in_fraction (float): Discarded share of events per replication
        seed (int): Experiment seed
        replications (int): Number of replications
        workers (int): Worker processes (default: config.worker_count())
        allow_unstable (bool): Simulate even when gamma_inf >= 0

    Returns:
        Tuple[EmpiricalLaw, PalmAccumulators]: Merged law and Palm sums
    """
    if replications < 1:
        raise ValueError("replications must be at least 1")
    report = stability_report(sys)
    if not report.stable and not allow_unstable:
        raise UnstableSystemError(report.gamma_inf)

    tasks = [(sys, int(events), burn_in_fraction, seed, r, allow_unstable) for r in range(replications)]
    workers = min(workers or config.worker_count(), replications)

    logging.info(f"n={sys.n}: {replications} replication(s) of {events} events on {workers} worker(s)", extra={"indent": 2})
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results: List[Tuple[EmpiricalLaw, PalmAccumulators]] = list(pool.map(_replication_worker, tasks))
    else:
        results = [_replication_worker(task) for task in tasks]

    law, acc = results[0]
    for other_law, other_acc in results[1:]:
        law = law.merge(other_law)
        acc = acc.merge(other_acc)
    law.replications = replications
    return law, acc


__all__ = [
    "DiffusionConfig",
    "EmpiricalLaw",
    "FluidTrajectory",
    "HistogramLaw",
    "ScaledLaw",
    "fluid_reference",
    "run_fluid",
    "run_replications",
    "run_stationary",
    "simulate_rbm",
]
