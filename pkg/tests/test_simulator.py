"""Event-driven simulator, replications and the fluid path."""

import numpy as np
import pytest

from app.utils import engines, interrupt
from app.utils.engines.simulator import (
    EmpiricalLaw,
    Event,
    SystemState,
    fluid_reference,
    next_event,
    run_fluid,
    run_stationary,
    step,
)
from app.utils.common import make_generator
from app.utils.errors import SimulationFault, UnstableSystemError
from app.utils.palm import PalmAccumulators
from app.utils.profile import ScaledSystem, SpeedProfile

EVENTS = 20_000


def test_empty_queue_only_sees_arrivals():
    dt, event = next_event(0, 2.0, 0.5, 1.0, 1.0, 1e-12)
    assert event is Event.ARRIVAL
    assert dt == 2.0


def test_earliest_clock_fires():
    assert next_event(3, 2.0, 0.5, 1.0, 1.0, 1e-12) == (0.5, Event.DEPARTURE)
    assert next_event(3, 1.0, 3.0, 2.0, 1.0, 1e-12) == (0.5, Event.ARRIVAL)


def test_ties_fire_together():
    _, event = next_event(2, 1.0, 1.0 + 1e-14, 1.0, 1.0, 1e-12)
    assert event is Event.SIMULTANEOUS


def test_zero_speed_is_a_fault():
    with pytest.raises(SimulationFault):
        next_event(0, 1.0, 1.0, 0.0, 1.0, 1e-12)


def test_step_applies_one_event(single_system):
    sys = single_system(25)
    state, event = step(sys, SystemState(L=0, R_e=0.3, R_d=0.8), make_generator(0))
    assert event is Event.ARRIVAL
    assert state.L == 1
    assert state.t == pytest.approx(0.3)
    assert state.R_d == 0.8


def test_run_keeps_its_invariants(single_system):
    law, acc = run_stationary(single_system(25), EVENTS, seed=1)
    assert law.horizon == EVENTS
    assert law.arrivals + law.departures <= EVENTS
    assert law.diagnostics["max_arrival_residual"] < 1e-9
    assert law.diagnostics["max_departure_residual"] < 1e-9
    assert law.diagnostics["counting_residual"] == 0.0
    assert sum(law.time_weights) == pytest.approx(law.observed_time, rel=1e-9)
    assert law.masses().sum() == pytest.approx(1.0)
    assert acc.arrivals == law.arrivals
    assert acc.departures == law.departures
    assert acc.total_time == law.observed_time


def test_burn_in_is_discarded(single_system):
    law, _ = run_stationary(single_system(25), EVENTS, burn_in_fraction=0.5, seed=1)
    assert law.burn_in_events == EVENTS // 2
    assert law.burn_in > 0
    assert law.arrivals + law.departures <= EVENTS // 2


def test_fixed_seed_reproduces_the_run(single_system):
    first, _ = run_stationary(single_system(25), EVENTS, seed=5)
    second, _ = run_stationary(single_system(25), EVENTS, seed=5)
    other, _ = run_stationary(single_system(25), EVENTS, seed=5, replication=1)
    assert first.time_weights == second.time_weights
    assert first.time_weights != other.time_weights


def test_unstable_system_needs_override(exponential):
    profile = SpeedProfile.from_dict({"levels": [], "regions": [{"lambda": 1.0, "mu": 1.0, "lambda_star": 1.0}]})
    sys = ScaledSystem(n=16, profile=profile, arrival=exponential, service=exponential)
    with pytest.raises(UnstableSystemError) as info:
        run_stationary(sys, EVENTS)
    assert info.value.gamma_inf == pytest.approx(0.25)
    law, _ = run_stationary(sys, EVENTS, allow_unstable=True)
    assert law.L_end > 0


def test_merge_adds_times_and_counts(single_system):
    a, _ = run_stationary(single_system(25), EVENTS, seed=2, replication=0)
    b, _ = run_stationary(single_system(25), EVENTS, seed=2, replication=1)
    merged = a.merge(b)
    assert merged.replications == 2
    assert merged.observed_time == pytest.approx(a.observed_time + b.observed_time)
    assert merged.arrivals == a.arrivals + b.arrivals
    assert merged.diagnostics["max_arrival_residual"] == max(
        a.diagnostics["max_arrival_residual"], b.diagnostics["max_arrival_residual"]
    )
    assert a.merge(b).time_weights == pytest.approx(b.merge(a).time_weights)


def test_law_round_trip(single_system):
    law, acc = run_stationary(single_system(25), EVENTS, seed=4)
    assert EmpiricalLaw.from_dict(law.to_dict()) == law
    rebuilt = PalmAccumulators.from_dict(acc.to_dict())
    assert rebuilt.arr_count == acc.trimmed().arr_count
    assert rebuilt.total_time == acc.total_time


def test_replications_do_not_depend_on_workers(single_system):
    sys = single_system(25)
    serial, serial_acc = engines.run_replications(sys, EVENTS, seed=9, replications=3, workers=1)
    parallel, parallel_acc = engines.run_replications(sys, EVENTS, seed=9, replications=3, workers=2)
    assert serial.replications == 3
    assert serial.time_weights == pytest.approx(parallel.time_weights)
    assert serial_acc.arr_count == parallel_acc.arr_count


def test_merged_replications_equal_concatenated_streams(single_system):
    sys = single_system(25)
    merged, _ = engines.run_replications(sys, EVENTS, seed=9, replications=2, workers=1)
    runs = [run_stationary(sys, EVENTS, seed=9, replication=r)[0] for r in range(2)]
    total = np.zeros(max(len(r.time_weights) for r in runs))
    for run in runs:
        total[: len(run.time_weights)] += run.time_weights
    assert merged.time_weights == pytest.approx(total.tolist())


def test_scaled_law_cdfs(single_system):
    law, _ = run_stationary(single_system(25), EVENTS, seed=1)
    scaled = law.scaled()
    assert scaled.atoms[1] == pytest.approx(0.2)
    assert scaled.cdf(1e6) == pytest.approx(1.0)
    assert scaled.histogram_cdf(0.0) == 0.0
    assert scaled.histogram_cdf(0.1) == pytest.approx(0.5 * law.mass(0))
    assert scaled.cdf(0.0) == pytest.approx(law.mass(0))


def test_fluid_reference_paths(fluid_system):
    grid = [0.0, 0.5, 2.0, 2.5, 5.0, 6.0]
    fresh = fluid_reference(fluid_system, grid, "fresh")
    delayed = fluid_reference(fluid_system, grid, "delayed")
    assert fresh == pytest.approx([1.0, 0.9, 0.6, 0.5, 0.0, 0.0])
    assert delayed[:2] == pytest.approx([1.0, 1.0])
    assert delayed[2:] == pytest.approx(fresh[2:])


@pytest.mark.parametrize("initial", ["fresh", "delayed"])
def test_fluid_path_follows_its_limit(fluid_system, initial):
    grid = np.linspace(0.0, 6.0, 25)
    path = run_fluid(fluid_system, 10_000, grid, initial=initial, seed=3)
    reference = fluid_reference(fluid_system, grid, initial)
    assert path.values[0] == 1.0
    assert np.max(np.abs(path.values - reference)) < 0.15


def test_fluid_rejects_unstable_systems(exponential):
    profile = SpeedProfile.from_dict({"levels": [], "regions": [{"lambda": 1.2, "mu": 1.0}]})
    sys = ScaledSystem(n=1, profile=profile, arrival=exponential, service=exponential)
    with pytest.raises(UnstableSystemError):
        run_fluid(sys, 100, [0.0, 1.0])


def test_pending_interrupt_stops_the_run(single_system):
    interrupt._interrupt_requested.set()
    try:
        with pytest.raises(KeyboardInterrupt):
            run_stationary(single_system(25), 70_000)
    finally:
        interrupt.reset_interrupt()
    interrupt.check_interrupted()
