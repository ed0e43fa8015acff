"""Unit-mean renewal catalog: moments, truncated transforms and sampling."""

import math

import numpy as np
import pytest
from scipy import integrate

from app.utils.common import make_generator
from app.utils.primitives import (
    INFINITE_CAP,
    RenewalKind,
    RenewalStream,
    make_renewal,
    renewal_from_dict,
    truncated_laplace,
)

CONTINUOUS = [
    ("exponential", {}),
    ("erlang", {"k": 3}),
    ("hyperexponential", {"p": 0.3, "r1": 0.5, "r2": 4.0}),
    ("uniform", {"half_width": 0.5}),
]


def test_exponential_moments():
    spec = make_renewal("exponential")
    assert spec.moment(1) == 1.0
    assert spec.moment(2) == 2.0
    assert spec.moment(3) == 6.0
    assert spec.scv == pytest.approx(1.0)


def test_erlang_scv():
    spec = make_renewal("erlang", {"k": 2})
    assert spec.scv == pytest.approx(0.5)
    assert spec.moment(2) == pytest.approx(1.5)


def test_hyperexponential_is_rescaled_to_unit_mean():
    spec = make_renewal("hyperexponential", {"p": 0.5, "r1": 1.0, "r2": 3.0})
    assert spec.moment(1) == pytest.approx(1.0, abs=1e-14)
    assert spec.scv > 1.0


def test_uniform_scv():
    spec = make_renewal("uniform", {"half_width": 0.5})
    assert spec.scv == pytest.approx(0.25 / 3.0)


def test_deterministic_has_no_density():
    spec = make_renewal("deterministic")
    assert spec.scv == 0.0
    assert spec.is_deterministic
    with pytest.raises(ValueError):
        spec.pdf(1.0)


@pytest.mark.parametrize("kind, params", [
    ("erlang", {"k": 0}),
    ("erlang", {"k": 1.5}),
    ("uniform", {"half_width": 1.0}),
    ("hyperexponential", {"p": 1.2, "r1": 1.0, "r2": 2.0}),
    ("gamma", {}),
])
def test_rejects_invalid_parameters(kind, params):
    with pytest.raises(ValueError):
        make_renewal(kind, params)


@pytest.mark.parametrize("s", [0.7, -0.5, 3.0])
def test_exponential_untruncated_transform(s):
    spec = make_renewal("exponential")
    assert truncated_laplace(spec, s, INFINITE_CAP) == pytest.approx(1.0 / (1.0 + s), rel=1e-13)


def test_exponential_truncated_transform_closed_form():
    spec = make_renewal("exponential")
    s, cap = 0.3, 2.0
    expected = -math.expm1(-(1 + s) * cap) / (1 + s) + math.exp(-cap) * math.exp(-s * cap)
    assert spec.truncated_laplace(s, cap) == pytest.approx(expected, rel=1e-13)


def test_zero_argument_gives_one():
    spec = make_renewal("erlang", {"k": 4})
    assert spec.truncated_laplace(0.0, 1.5) == 1.0


@pytest.mark.parametrize("kind, params", CONTINUOUS)
@pytest.mark.parametrize("s", [0.4, -0.8])
def test_truncated_transform_matches_quadrature(kind, params, s):
    spec = make_renewal(kind, params)
    cap = 1.3
    body, _ = integrate.quad(lambda t: math.exp(-s * t) * spec.pdf(t), 0.0, cap, points=[0.5, 1.0], limit=200)
    below, _ = integrate.quad(spec.pdf, 0.0, cap, points=[0.5, 1.0], limit=200)
    expected = body + (1.0 - below) * math.exp(-s * cap)
    assert spec.truncated_laplace(s, cap) == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("kind, params", CONTINUOUS)
def test_transform_derivative_matches_finite_difference(kind, params):
    spec = make_renewal(kind, params)
    s, cap, h = 0.25, 2.0, 1e-5
    numeric = (spec.truncated_laplace(s + h, cap) - spec.truncated_laplace(s - h, cap)) / (2 * h)
    assert spec.truncated_laplace_derivative(s, cap) == pytest.approx(numeric, rel=1e-6)


def test_truncated_moment():
    spec = make_renewal("exponential")
    assert spec.truncated_moment(1, INFINITE_CAP) == 1.0
    # E[T ^ c] = 1 - e^{-c} for a unit exponential
    assert spec.truncated_moment(1, 2.0) == pytest.approx(1.0 - math.exp(-2.0), rel=1e-12)


def test_stream_matches_block_sampling():
    spec = make_renewal("erlang", {"k": 2})
    stream = RenewalStream(spec, make_generator(11), block=8)
    draws = [next(stream) for _ in range(16)]
    rng = make_generator(11)
    expected = np.concatenate([spec.sample_block(rng, 8), spec.sample_block(rng, 8)])
    assert np.array_equal(draws, expected)


@pytest.mark.parametrize("kind, params", CONTINUOUS + [("deterministic", {})])
def test_sample_mean_is_one(kind, params):
    spec = make_renewal(kind, params)
    draws = spec.sample_block(make_generator(3), 400_000)
    assert draws.min() > 0
    assert draws.mean() == pytest.approx(1.0, abs=6 * math.sqrt(max(spec.scv, 1e-12) / draws.size) + 1e-12)


def test_round_trip_through_dict():
    spec = make_renewal("hyperexponential", {"p": 0.3, "r1": 0.5, "r2": 4.0})
    again = renewal_from_dict(spec.to_dict())
    assert again.kind is RenewalKind.HYPEREXPONENTIAL
    assert again.params == pytest.approx(spec.params)
    assert again.scv == pytest.approx(spec.scv)


@pytest.mark.parametrize("kind, params", CONTINUOUS)
def test_density_reproduces_the_moments(kind, params):
    spec = make_renewal(kind, params)

    def moment(j):
        body, _ = integrate.quad(lambda t: t ** j * spec.pdf(t), 0.0, 2.0, points=[0.5, 1.0, 1.5], epsabs=1e-13, epsrel=1e-13, limit=200)
        tail, _ = integrate.quad(lambda t: t ** j * spec.pdf(t), 2.0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=200)
        return body + tail

    assert moment(0) == pytest.approx(1.0, abs=1e-8)
    assert moment(1) == pytest.approx(1.0, abs=1e-8)
    assert moment(2) - 1.0 == pytest.approx(spec.scv, abs=1e-8)
    assert moment(3) == pytest.approx(spec.third_moment, rel=1e-8, abs=1e-8)
