import math

import numpy as np
import pytest

from crossfield.errors import DomainError, PreconditionError
from crossfield.flow import CircleRotation, TorusLinear
from crossfield.forms import distance_form, whitney_form
from crossfield.sections import (SectionField, Symmetry, check_cross_section, check_monotone,
                                 check_symmetric, flow_box, flow_project, kernel_section,
                                 leaf_sections, project_field)
from crossfield.space import ball_field, net

TORUS = TorusLinear((1.0, math.sqrt(2)))


def test_whitney_kernel_on_circle_is_the_point():
    f = CircleRotation()
    w = whitney_form(f, 0.25, panels=4, adaptive=False)
    K = kernel_section(f, w, 0.05, np.array([0.3]), 0.01)
    assert len(K) == 1 and K.points[0, 0] == 0.3


def test_kernel_of_flat_form_is_rejected():
    f = CircleRotation()
    with pytest.raises(PreconditionError) as err:
        kernel_section(f, distance_form(f), 0.05, np.array([0.3]), 0.01)
    assert err.value.stage == "kernel"


def test_leaf_sections_on_torus_are_perpendicular_segments():
    H = leaf_sections(TORUS, 0.1, 0.02)
    x = np.array([0.4, 0.6])
    S = H(x).points
    d = TORUS.space.displacement(x[None, :], S)
    assert np.abs(d @ TORUS.direction).max() < 1e-9
    assert np.hypot(d[:, 0], d[:, 1]).max() <= 0.1 + 1e-9
    assert len(S) >= 10
    assert H.contains(x, S).all()
    assert len(H.shrink(0.0)(x)) == 1


def test_projection_and_flow_box():
    H = leaf_sections(TORUS, 0.1, 0.02)
    x = np.array([0.4, 0.6])
    y = TORUS.evolve(H(x).points[3], 0.04)
    p, t = flow_project(TORUS, H, x, y)
    assert t == pytest.approx(-0.04, abs=1e-12)
    assert H.contains(x, p[None, :])[0]
    with pytest.raises(DomainError):
        flow_project(TORUS, H, x, np.array([0.9, 0.1]))
    box = flow_box(TORUS, H, x, 0.02)
    assert box.gamma > 0


def test_invalid_thickness():
    with pytest.raises(DomainError):
        SectionField(TORUS, None, 0.1, 0.0, 0.02)


def test_projected_ball_field():
    H = leaf_sections(TORUS, 0.2, 0.02)
    P = project_field(TORUS, H, ball_field(TORUS.space, 0.05, 0.02))
    x = np.array([0.4, 0.6])
    assert H.contains(x, P(x).points).all()
    wide = project_field(TORUS, H.shrink(0.05), ball_field(TORUS.space, 0.3, 0.05))
    with pytest.raises(PreconditionError):
        wide(x)


def test_validators_accept_leaf_sections():
    H = leaf_sections(TORUS, 0.1, 0.02)
    dom = net(TORUS.space, 0.25).points[:4]
    assert check_cross_section(TORUS, H, dom, 0.02).ok
    mono = check_monotone(TORUS, H, dom, [0.02, 0.05])
    assert mono.eps_mono == 0.05 and H.eps_mono == 0.05
    sym = check_symmetric(H, dom, 0.1, 0.04)
    assert sym.status == Symmetry.SYMMETRIC


def test_circle_pipeline_gives_point_sections(built):
    H = built.pipeline("circle")
    for x in net(H.space, 0.25).points:
        assert len(H(x)) == 1
    assert H.symmetry == Symmetry.SYMMETRIC and H.eps_mono > 0
