import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from crossfield.errors import DomainError, RegularityError
from crossfield.flow import (CatSuspensionFlow, CircleRotation, OdeFlow, TorusLinear,
                             certify_regularity, flow_from_config, trajectory_segment)
from crossfield.space import Circle, FlatTorus2


def test_rotation_and_translation_values():
    f = CircleRotation()
    assert f.evolve(np.array([0.3]), 0.9)[0] == pytest.approx(0.2)
    assert f.inverse().evolve(np.array([0.3]), 0.4)[0] == pytest.approx(0.9)
    g = CatSuspensionFlow()
    assert np.allclose(g.evolve(np.array([0.1, 0.2, 0.5]), 0.7), [0.4, 0.3, 0.2])


@pytest.mark.parametrize("make", [CircleRotation, lambda: TorusLinear((1.0, math.sqrt(2))),
                                  CatSuspensionFlow, lambda: OdeFlow(Circle(), "circle_variable")])
def test_group_law(make):
    f = make()
    rng = np.random.default_rng(0)
    X = f.space.canonical(rng.random((20, f.space.dim)))
    a = f.evolve(f.evolve(X, 0.37), 0.81)
    b = f.evolve(X, 1.18)
    assert f.space.dist(a, b).max() < 1e-9
    assert f.space.dist(f.evolve(f.evolve(X, 0.5), -0.5), X).max() < 1e-9


def test_ode_period_matches_closed_form():
    # the period of x' = 1 + sin(2 pi x) / 2 on the unit circle is 1 / sqrt(1 - 1/4)
    f = OdeFlow(Circle(), "circle_variable", step=1e-2)
    period = 1.0 / math.sqrt(0.75)
    x = np.array([0.1])
    assert f.space.dist(f.evolve(x, period), x) < 1e-8


def test_ode_shear_matches_reference_integrator():
    f = OdeFlow(FlatTorus2(), "torus_shear", step=5e-3)
    rhs = lambda t, y: [1.0, 0.5 + 0.25 * math.sin(2 * math.pi * y[0])]  # noqa: E731
    sol = solve_ivp(rhs, (0, 1.3), [0.2, 0.7], rtol=1e-12, atol=1e-12)
    want = np.mod(sol.y[:, -1], 1.0)
    assert f.space.dist(f.evolve(np.array([0.2, 0.7]), 1.3), want) < 1e-9


def test_min_periods():
    assert CircleRotation(2.0).min_period == pytest.approx(0.5)
    assert TorusLinear((1.0, 1.0)).min_period == pytest.approx(math.sqrt(2))
    assert TorusLinear((1.0, 2.0)).min_period == pytest.approx(math.sqrt(5))
    assert TorusLinear((0.0, 1.0)).min_period == pytest.approx(1.0)
    assert math.isinf(TorusLinear((1.0, math.sqrt(2))).min_period)
    assert CatSuspensionFlow().min_period == 1.0


def test_certificate_and_failure():
    cert = certify_regularity(CircleRotation(), 0.02, [0.1, 0.25, 0.4])
    assert cert.t_hat == 0.4 and cert.separation == pytest.approx(0.4)
    with pytest.raises(RegularityError):
        certify_regularity(CircleRotation(0.0), 0.02, [0.1, 0.2])
    with pytest.raises(DomainError):
        certify_regularity(CircleRotation(), 0.02, [])


def test_non_finite_time_rejected():
    with pytest.raises(DomainError):
        CircleRotation().evolve(np.array([0.1]), float("nan"))


def test_config_round_trip_and_segment():
    for f in (CircleRotation(0.5), TorusLinear((1.0, 2.0)), CatSuspensionFlow(),
              OdeFlow(Circle(), "circle_variable"), CircleRotation().inverse()):
        g = flow_from_config(f.to_config(), f.space)
        x = f.space.canonical(np.full(f.space.dim, 0.3))
        assert f.space.dist(f.evolve(x, 0.7), g.evolve(x, 0.7)) < 1e-12
    seg = trajectory_segment(CircleRotation(), np.array([0.0]), 0.0, 1.0, 4)
    assert [t for t, _ in seg] == [0.0, 0.25, 0.5, 0.75, 1.0]
    with pytest.raises(DomainError):
        flow_from_config({"kind": "torus_linear"}, Circle())
