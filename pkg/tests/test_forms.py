import math
from types import SimpleNamespace

import numpy as np
import pytest

from crossfield.errors import DomainError
from crossfield.flow import CatSuspensionFlow, CircleRotation, TorusLinear
from crossfield.forms import (antisymmetrize, central_difference, distance_form, form_derivative,
                              monotonizing_form, slide_to_kernel, time_form, transverse_time_form,
                              whitney_form)
from oracles import WHITNEY_CIRCLE_DERIVATIVE, WHITNEY_CIRCLE_VALUE, whitney_circle


def test_whitney_form_matches_quadrature_oracle():
    f = CircleRotation()
    w = whitney_form(f, 0.25)
    x, y = np.array([0.3]), np.array([0.4])
    assert w(x, y)[()] == pytest.approx(WHITNEY_CIRCLE_VALUE, abs=1e-12)
    assert w.derivative(x, y)[()] == pytest.approx(WHITNEY_CIRCLE_DERIVATIVE, abs=1e-12)
    assert central_difference(w, x, y)[()] == pytest.approx(WHITNEY_CIRCLE_DERIVATIVE, abs=1e-6)
    assert w(x, x)[()] == 0.0
    # points where the integrand has a kink, compared with adaptive quadrature
    for yy in (0.05, 0.62, 0.91):
        assert w(x, np.array([yy]))[()] == pytest.approx(whitney_circle(0.3, yy, 0.25), abs=1e-8)


def test_transpose_is_an_involution():
    w = whitney_form(CircleRotation(), 0.25)
    x, y = np.array([0.3]), np.array([0.45])
    assert w.T.T is w
    assert w.T(x, y)[()] == w(y, x)[()]


def test_outside_domain_raises_with_points():
    w = whitney_form(CircleRotation(), 0.25, radius=0.05)
    with pytest.raises(DomainError, match="x=.*y="):
        w(np.array([0.3]), np.array([0.6]))
    assert np.isnan(w.value(np.array([0.3]), np.array([0.6])))
    with pytest.raises(DomainError):
        form_derivative(w.flow, w, np.array([0.3]), np.array([0.3]), dt=-1.0)


@pytest.mark.parametrize("make", [CircleRotation, lambda: TorusLinear((1.0, math.sqrt(2))), CatSuspensionFlow])
def test_leaf_forms_have_unit_derivative(make):
    f = make()
    form = transverse_time_form(f)
    rng = np.random.default_rng(1)
    X = f.space.canonical(rng.random((30, f.space.dim)))
    Y = f.evolve(X + 0.01 * rng.standard_normal(X.shape), 0.03)
    Y = f.space.canonical(Y)
    d = central_difference(form, X, Y, dt=1e-3)
    assert np.abs(d - 1.0).max() < 1e-9
    inv = transverse_time_form(f.inverse())
    assert np.allclose(inv.value(X, Y), -form.value(X, Y))


def test_slide_and_time_form_on_circle():
    f = CircleRotation()
    w = whitney_form(f, 0.25, panels=4, adaptive=False)
    x = np.array([[0.3]] * 3)
    y = np.array([[0.33], [0.28], [0.35]])
    s, landed, ok = slide_to_kernel(w, x, y, 0.1)
    assert ok.all()
    assert np.abs(f.space.dist(landed, x)).max() < 1e-8
    assert np.allclose(s, [-0.03, 0.02, -0.05], atol=1e-8)
    tf = time_form(f, SimpleNamespace(form=w, rho=0.01, tau=0.1))
    assert np.allclose(tf.value(x, y), [0.03, -0.02, 0.05], atol=1e-8)


def test_monotonizing_and_antisymmetric_forms():
    f = CircleRotation()
    unit = transverse_time_form(f)
    v = monotonizing_form(f, unit, 0.05, panels=4, adaptive=False)
    x, y = np.array([0.3]), np.array([0.34])
    assert v(x, x)[()] == pytest.approx(0.0, abs=1e-15)
    # the transpose grows at rate t_hat, the form itself at rate -t_hat near the diagonal
    assert central_difference(v.T, x, y, dt=1e-4)[()] == pytest.approx(0.05, abs=1e-9)
    assert v.derivative(x, y)[()] == pytest.approx(-0.05, abs=1e-12)
    om = antisymmetrize(v)
    rng = np.random.default_rng(2)
    X = rng.random((200, 1))
    Y = f.space.canonical(X + 0.1 * (rng.random((200, 1)) - 0.5))
    assert np.array_equal(om.value(X, Y), -om.value(Y, X))
    assert om.derivative(x, y)[()] == pytest.approx(-0.1, abs=1e-12)


def test_distance_form_vanishes_on_diagonal():
    f = TorusLinear((1.0, 0.5))
    d = distance_form(f)
    p = np.array([0.2, 0.9])
    assert d(p, p)[()] == 0.0
