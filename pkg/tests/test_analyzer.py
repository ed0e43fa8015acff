"""Limit density, birth-death oracle and the law comparisons."""

import math

import numpy as np
import pytest
from scipy import integrate

from app.utils.analyzer import (
    birth_death_oracle,
    convergence_study,
    jump_ratio_estimate,
    ks_distance,
    ks_to_density,
    lattice_jump_ratio,
    limit_density,
)
from app.utils.errors import NotIntegrableError, UnstableSystemError
from app.utils.palm import boundary_identity_report
from app.utils.primitives import make_renewal
from app.utils.profile import ScaledSystem, SpeedProfile

from .conftest import TWO_REGION_C, random_profile


def test_single_region_is_exponential(single_region, exponential):
    density = limit_density(single_region, exponential, exponential)
    assert density.C == pytest.approx(0.5)
    assert density.label == "theorem"
    assert density.h([0.0, 1.0, 3.0]) == pytest.approx(np.exp([0.0, -1.0, -3.0]))
    assert density.Hcdf(1.0) == pytest.approx(1.0 - math.exp(-1.0))
    assert density.mean() == pytest.approx(1.0)
    assert density.expected_b() == pytest.approx(-1.0)
    assert density.quantile(0.5) == pytest.approx(math.log(2.0), rel=1e-9)


def test_two_region_constants(two_region, exponential):
    density = limit_density(two_region, exponential, exponential)
    assert density.C == pytest.approx(TWO_REGION_C)
    assert float(density.h(0.0)) == pytest.approx(1.0 / (2.0 * TWO_REGION_C))
    assert density.jump_ratio(1.0) == pytest.approx(0.5)
    assert float(density.g(1.0)) == pytest.approx(float(density.g(1.0 + 1e-12)), rel=1e-9)
    assert float(density.h(1.0)) == pytest.approx(math.exp(-1.0) / (2.0 * TWO_REGION_C))
    assert density.h_right(1.0) == pytest.approx(math.exp(-1.0) / (4.0 * TWO_REGION_C))
    assert float(density.Hcdf(60.0)) == pytest.approx(1.0)


def test_tabular_profile_matches_closed_form(two_region, exponential):
    table = {"breaks": [1.0], "values": [1.0, 2.0]}
    tabular = SpeedProfile.from_dict({"tabular": {"lambda": table, "mu": table, "mu_star": table}})
    numeric = limit_density(tabular, exponential, exponential)
    closed = limit_density(two_region, exponential, exponential)
    assert numeric.label == "conjecture"
    assert numeric.C == pytest.approx(closed.C, rel=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_random_profiles_integrate_to_one(seed, exponential):
    rng = np.random.default_rng(seed)
    profile = random_profile(rng)
    erlang = make_renewal("erlang", {"k": 3})
    density = limit_density(profile, exponential, erlang)
    bounds = [0.0] + list(profile.levels)
    upper = bounds[-1] + density.quantile(1 - 1e-10) + 1.0
    pieces = bounds + [upper]
    mass = sum(integrate.quad(lambda u: float(density.h(u)), a, b, epsabs=1e-13)[0] for a, b in zip(pieces, pieces[1:]))
    mean = sum(integrate.quad(lambda u: u * float(density.h(u)), a, b, epsabs=1e-13)[0] for a, b in zip(pieces, pieces[1:]))
    assert mass == pytest.approx(1.0, abs=1e-7)
    assert density.mean() == pytest.approx(mean, rel=1e-6)
    assert float(density.Hcdf(profile.levels[-1])) == pytest.approx(sum(density.segment_mass[:-1]), rel=1e-9)
    for level in profile.levels:
        assert float(density.g(level)) == pytest.approx(float(density.g(level + 1e-10)), rel=1e-6)


def test_limit_needs_balance_and_negative_tail(exponential):
    unbalanced = SpeedProfile.from_dict({"levels": [], "regions": [{"lambda": 1.0, "mu": 1.2}]})
    with pytest.raises(ValueError):
        limit_density(unbalanced, exponential, exponential)
    drifting_up = SpeedProfile.from_dict({"levels": [], "regions": [{"lambda": 1.0, "mu": 1.0, "lambda_star": 1.0}]})
    with pytest.raises(NotIntegrableError):
        limit_density(drifting_up, exponential, exponential)


def test_density_document(single_region, exponential):
    document = limit_density(single_region, exponential, exponential).to_dict([0.0, 0.5, 1.0])
    assert document["segments"][0]["width"] is None
    assert [row["u"] for row in document["grid"]] == [0.0, 0.5, 1.0]


def test_oracle_is_geometric(single_system):
    law = birth_death_oracle(single_system(25))
    # lambda = 1, mu = 1.2 above zero
    assert law.mass(0) == pytest.approx(1.0 / 6.0, rel=1e-9)
    assert law.mass(3) == pytest.approx(law.mass(0) * (1 / 1.2) ** 3, rel=1e-9)
    assert law.masses().sum() == pytest.approx(1.0)
    assert law.tail_mass < 1e-12
    assert law.detailed_balance_residual < 1e-14


def test_oracle_satisfies_the_boundary_identity(two_region_system):
    sys = two_region_system(100)
    report = boundary_identity_report(birth_death_oracle(sys), sys)
    assert report.rel_err < 1e-9


def test_oracle_rejects_other_systems(single_region, exponential):
    erlang = make_renewal("erlang", {"k": 2})
    with pytest.raises(ValueError):
        birth_death_oracle(ScaledSystem(n=25, profile=single_region, arrival=erlang, service=exponential))
    unstable = SpeedProfile.from_dict({"levels": [], "regions": [{"lambda": 1.0, "mu": 1.0, "lambda_star": 1.0}]})
    with pytest.raises(UnstableSystemError):
        birth_death_oracle(ScaledSystem(n=25, profile=unstable, arrival=exponential, service=exponential))


def test_ks_distance_basics():
    exp_cdf = lambda u: 1.0 - np.exp(-np.asarray(u))
    assert ks_distance(exp_cdf, exp_cdf) == 0.0
    shifted = lambda u: 1.0 - np.exp(-np.maximum(np.asarray(u) - 0.1, 0.0))
    assert ks_distance(exp_cdf, shifted, points=[0.1]) == pytest.approx(1.0 - math.exp(-0.1), rel=1e-3)


def test_ks_of_the_oracle_shrinks_with_n(single_system, single_region, exponential):
    density = limit_density(single_region, exponential, exponential)
    ks = [ks_to_density(birth_death_oracle(single_system(n)), density) for n in [25, 100, 400]]
    assert ks[0] > ks[1] > ks[2]
    assert 0.01 < ks[1] < 0.025
    atomic = ks_to_density(birth_death_oracle(single_system(100)), density, atomic=True)
    assert atomic >= birth_death_oracle(single_system(100)).mass(0) - 1e-12


def test_jump_ratio_of_sampled_density():
    u = np.arange(0, 200) * 0.01
    density = np.where(u <= 1.0 + 1e-9, np.exp(-u), 0.5 * np.exp(-u))
    assert jump_ratio_estimate(u, density, 1.0, 0.25) == pytest.approx(0.5, rel=1e-9)
    assert math.isnan(jump_ratio_estimate(u, density, 5.0, 0.25))


def test_lattice_jump_ratio_of_the_oracle(two_region_system):
    law = birth_death_oracle(two_region_system(10_000))
    assert lattice_jump_ratio(law, 1.0) == pytest.approx(0.5, rel=1e-3)


def test_convergence_against_the_oracle(single_system, single_region, exponential):
    density = limit_density(single_region, exponential, exponential)
    table = convergence_study(single_system(1), [25, 100, 400], density)
    assert table.monotone
    assert table.boundary_monotone
    assert table.label == "theorem"
    assert [row.n for row in table.rows] == [25, 100, 400]
    # n^{1/2} mu(0) P[L = 0] = n^{1/2} (1 - 1 / (1 + n^{-1/2}))
    assert table.rows[1].boundary_mass == pytest.approx(10.0 * (1.0 - 1.0 / 1.1), rel=1e-9)
    assert table.rows[1].boundary_rel_err == pytest.approx(1.0 / 11.0, rel=1e-6)
    assert table.rows[0].jump_ratio is None


def test_convergence_rejects_unknown_source(single_system, single_region, exponential):
    density = limit_density(single_region, exponential, exponential)
    with pytest.raises(ValueError):
        convergence_study(single_system(1), [25], density, source="guess")


@pytest.mark.parametrize("seed", range(5))
def test_tail_decays_at_the_tail_rate(seed, exponential):
    profile = random_profile(np.random.default_rng(seed))
    erlang = make_renewal("erlang", {"k": 3})
    density = limit_density(profile, exponential, erlang)
    beta_inf = 2.0 * profile.tail.b / profile.tail.sigma2(exponential, erlang)
    u = profile.levels[-1] + 0.5
    for s in [0.25, 1.0, 3.0]:
        assert float(density.h(u + s)) / float(density.h(u)) == pytest.approx(math.exp(beta_inf * s), rel=1e-9)


def test_single_n_has_no_trend(single_system, single_region, exponential):
    density = limit_density(single_region, exponential, exponential)
    table = convergence_study(single_system(1), [100], density)
    assert table.monotone is None
    assert table.boundary_monotone is None
    assert len(table.rows) == 1
