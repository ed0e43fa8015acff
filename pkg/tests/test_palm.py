"""Palm estimators and the rate-conservation checks."""

import math

import pytest

from app.utils.engines.simulator import EmpiricalLaw, run_stationary
from app.utils.palm import (
    PalmAccumulators,
    boundary_identity_report,
    default_probes,
    delta_identity,
    estimate_Delta,
    estimate_H,
    intensity_identity_report,
    level_crossing,
    moment_table,
    palm_report,
)


def hand_accumulators():
    # two arrivals and one departure at q = 0, observed for 10 time units
    return PalmAccumulators(
        n=4,
        arr_count=[2, 1],
        dep_count=[1, 2],
        arr_sums=[[1.0, 0.5], [0.6, 0.25], [0.4, 0.125], [0.3, 0.0625]],
        dep_sums=[[0.5, 1.0], [0.3, 0.8], [0.2, 0.7], [0.1, 0.6]],
        total_time=10.0,
    )


def geometric_law(n, ratio, size=300):
    return EmpiricalLaw(n=n, time_weights=[ratio ** ell for ell in range(size)], total_time=1.0)


def test_H_from_hand_sums(single_system):
    estimate = estimate_H(hand_accumulators(), single_system(4), 0.0, min_epochs=3)
    # 0.5 * ((1.0 - 0.6) / 10 - 0.3 * (3 * 0.5 - 0.3) / 3)
    assert estimate.value == pytest.approx(-0.04)
    assert estimate.q == 0
    assert estimate.epochs == 3
    assert estimate.sufficient
    assert estimate.stderr > 0


def test_Delta_from_hand_sums(single_system):
    estimate = estimate_Delta(hand_accumulators(), None, single_system(4), 0.0, min_epochs=4)
    assert estimate.value == pytest.approx((1.0 - 2) / 10 + 0.3 * 0.5 / 3)
    assert not estimate.sufficient


def test_unvisited_level_is_insufficient(single_system):
    estimate = estimate_H(hand_accumulators(), single_system(4), 5.0)
    assert estimate.q == 10
    assert estimate.value == 0.0
    assert estimate.epochs == 0
    assert not estimate.sufficient


def test_merge_is_exact():
    a = hand_accumulators()
    b = PalmAccumulators(n=4, arr_count=[1], dep_count=[0], arr_sums=[[0.1]] * 4, dep_sums=[[0.0]] * 4, total_time=2.0)
    merged = a.merge(b)
    assert merged.arr_count == [3, 1]
    assert merged.dep_count == [1, 2]
    assert merged.arr_sums[0] == pytest.approx([1.1, 0.5])
    assert merged.total_time == 12.0
    assert merged.arrivals == 4
    with pytest.raises(ValueError):
        a.merge(PalmAccumulators(n=9))


def test_trimmed_drops_unused_levels():
    acc = PalmAccumulators(n=4)
    acc.grow(0)
    acc.arr_count[0] += 1
    acc.grow(7)
    assert len(acc.arr_count) >= 8
    assert len(acc.trimmed().arr_count) == 1


def test_moment_table_rows(single_system):
    rows = moment_table(hand_accumulators(), single_system(4), [0.0, 0.5])
    assert [row["q"] for row in rows] == [0, 1]
    assert rows[0]["arr_m1"] == pytest.approx(0.1)
    assert rows[1]["dep_m3"] == pytest.approx(0.07)


def test_default_probes(two_region):
    assert default_probes(two_region) == [0.25, 0.5, 1.0]


def test_delta_identities_on_a_hand_law(single_system):
    law = EmpiricalLaw(n=4, time_weights=[2.0, 1.0, 1.0], total_time=4.0)
    identity = delta_identity(law, single_system(4), 0.0)
    assert identity["upper"] == pytest.approx(0.25)
    assert identity["lower"] == pytest.approx(0.5)


def test_boundary_identity_is_exact_for_the_stationary_law(single_system):
    # lambda = 1 and mu = 1.5 above zero: geometric law with ratio 2/3
    sys = single_system(4)
    law = geometric_law(4, 2.0 / 3.0)
    report = boundary_identity_report(law, sys, limit_rhs=2.0 / 3.0)
    assert report.lhs == pytest.approx(2.0 / 3.0)
    assert report.rel_err < 1e-9
    assert report.limit_rel_err < 1e-9
    for x in [0.0, 0.5, 1.0, 2.0]:
        identity = delta_identity(law, sys, x)
        assert identity["upper"] == pytest.approx(identity["lower"], abs=1e-12)


def test_boundary_residual_of_a_non_stationary_law(single_system):
    law = EmpiricalLaw(n=4, time_weights=[2.0, 1.0, 1.0], total_time=4.0)
    report = boundary_identity_report(law, single_system(4))
    assert report.lhs == pytest.approx(1.0)
    assert report.rhs == pytest.approx(0.5)
    assert report.rel_err == pytest.approx(1.0)
    assert report.limit_rel_err is None


def test_intensity_identities_on_a_run(single_system):
    sys = single_system(25)
    law, acc = run_stationary(sys, 50_000, seed=11)
    report = intensity_identity_report(law, acc, sys)
    assert report.r1_within_bound
    assert report.r2_relative < 0.05
    assert report.r3 / report.alpha_d < 0.05
    assert level_crossing(acc)["max_diff"] < 0.01


def test_level_crossing_without_epochs():
    assert level_crossing(PalmAccumulators(n=4)) == {"max_diff": 0.0, "stderr": 0.0, "level": 0}


def test_palm_report_rows(single_system):
    sys = single_system(25)
    law, acc = run_stationary(sys, 50_000, seed=3)
    rows = palm_report(law, acc, sys, [0.5, 1.0, 50.0])
    assert [row["q"] for row in rows] == [2, 5, 250]
    assert rows[0]["sufficient"]
    assert not rows[2]["sufficient"]
    for row in rows:
        assert row["upper_residual"] == pytest.approx(row["Delta_hat"] - row["Delta_upper"])
        assert row["H_stderr"] >= 0


def test_delta_identities_hold_on_a_run(two_region_system):
    sys = two_region_system(25)
    law, acc = run_stationary(sys, 200_000, seed=5)
    rows = palm_report(law, acc, sys, [0.0, 0.5, 1.0, 1.5])
    for row in rows:
        assert row["sufficient"]
        assert row["Delta_hat"] > 0
        assert abs(row["Delta_hat"] - row["Delta_upper"]) <= 3 * row["Delta_stderr"]
        assert abs(row["Delta_hat"] - row["Delta_lower"]) <= 3 * row["Delta_stderr"]


def test_checked_moments_stay_bounded_in_n(single_system):
    # residuals of unit exponentials are unit exponentials: E[R^j] = j!
    for n in [25, 100, 400]:
        sys = single_system(n)
        _, acc = run_stationary(sys, 60_000, seed=n)
        for row in moment_table(acc, sys, [0.0, 0.5, 1.0]):
            for j in range(1, 4):
                assert 0.0 <= row[f"arr_m{j}"] <= 1.2 * math.factorial(j)
                assert 0.0 <= row[f"dep_m{j}"] <= 1.2 * math.factorial(j)
