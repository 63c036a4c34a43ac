import math

import numpy as np
import pytest

from crossfield.dynamics import (diam_decay, kato_window, limit_set, sectional_flow, stable_set,
                                 unstable_set, wandering_check)
from crossfield.errors import DomainError
from crossfield.flow import CatSuspensionFlow, CircleRotation, TorusLinear
from crossfield.sections import SectionField, leaf_sections
from crossfield.space import CompactSample, diameter_of, hausdorff, make_sample

TORUS = TorusLinear((1.0, math.sqrt(2)))
CATF = CatSuspensionFlow()
CAT = CATF.space


def eigen_offsets(x, P):
    d = CAT.displacement(x[None, :], P)
    return d[:, :2] @ CAT.to_eigen.T


def test_sectional_flow_on_torus_is_a_translation():
    H = leaf_sections(TORUS, 0.2, 0.02)
    x = np.array([0.4, 0.6])
    y = H(x).points[5]
    tr = sectional_flow(TORUS, H, x, y, 3.0)
    assert tr.tracked and tr.h[0] == 0.0
    assert tr.h[-1] == pytest.approx(3.0, abs=1e-9)
    d = TORUS.space.dist(TORUS.evolve(x, tr.times)[:, None, :], tr.companions[:, None, :])
    assert np.allclose(d, d[0], atol=1e-9)


def test_sectional_flow_escapes_along_expanding_direction():
    H = leaf_sections(CATF, 0.25, 0.02).shrink(0.2)
    x = np.array([0.3, 0.6, 0.4])
    u = CAT.eig_right[:, 0] * 0.01
    y = CAT.canonical(x + np.array([u[0], u[1], 0.0]))
    tr = sectional_flow(CATF, H, x, y, 8.0)
    assert tr.status == "escaped"
    # |du| grows like exp(0.9624 t) from 0.01 * lam**0.4 to 0.2
    expected = (math.log(0.2 / 0.01) / 0.9624236501192069) - 0.4
    assert tr.escaped_at == pytest.approx(expected, abs=0.1)


def test_sectional_flow_preconditions():
    H = leaf_sections(TORUS, 0.2, 0.02)
    x = np.array([0.4, 0.6])
    with pytest.raises(DomainError):
        sectional_flow(TORUS, H, x, np.array([0.45, 0.6]), 1.0)
    H.gamma = 0.01
    with pytest.raises(DomainError):
        sectional_flow(TORUS, H, x, x, 1.0, dt=0.05)


def test_stable_sets_shrink_with_the_horizon_and_contain_the_base():
    H = leaf_sections(CATF, 0.25, 0.02)
    x = np.array([0.3, 0.6, 0.4])
    small, large = stable_set(CATF, H, x, 0.1, 3.0), stable_set(CATF, H, x, 0.1, 6.0)
    assert np.array_equal(small.members.points[0], x)
    for p in large.members.points:
        assert CAT.dist(p[None, :], small.members.points).min() == 0.0
    off = eigen_offsets(x, large.members.points)
    assert np.abs(off[:, 0]).max() < 1e-9


def _rotated_grid(x, eps, res, angle):
    # fibre points on a grid turned away from the eigendirections
    c, s = math.cos(angle), math.sin(angle)
    n = int(eps / res) + 1
    ij = np.array([(i, j) for i in range(-n, n + 1) for j in range(-n, n + 1)], float) * res
    ij = ij @ np.array([[c, -s], [s, c]]).T
    ij += np.array([0.37, 0.61]) * res
    pts = np.concatenate([x[None, :2], x[None, :2] + ij])
    return CAT.canonical(np.column_stack([pts, np.full(len(pts), x[2])]))


def test_straddle_refinement_finds_the_stable_direction():
    leaf = leaf_sections(CATF, 0.25, 0.02)
    H = SectionField(CATF, leaf.form, 0.25, leaf.tau, 0.02, candidates=None,
                     builder=lambda x: _rotated_grid(x, 0.25, 0.02, 0.3)[
                         CAT.dist(x[None, :], _rotated_grid(x, 0.25, 0.02, 0.3)) <= 0.25])
    x = np.array([0.3, 0.6, 0.0])
    ss = stable_set(CATF, H, x, 0.2, 8.0)
    assert ss.refined > 0 and len(ss.members) >= 10
    off = eigen_offsets(x, ss.members.points)
    assert np.abs(off[:, 0]).max() < 1e-6
    assert diameter_of(CAT, ss.members.points) > 0.3


def test_unstable_set_lies_along_the_expanding_direction():
    H = leaf_sections(CATF, 0.25, 0.02)
    x = np.array([0.3, 0.6, 0.4])
    wu = unstable_set(CATF, H, x, 0.1, 6.0)
    off = eigen_offsets(x, wu.members.points)
    assert len(wu.members) > 5 and np.abs(off[:, 1]).max() < 1e-9


def test_decay_is_flat_for_an_isometry():
    H = leaf_sections(TORUS, 0.2, 0.02)
    rep = diam_decay(TORUS, H, np.array([0.4, 0.6]), 0.1, [0, 1, 2, 3])
    assert abs(rep.slope) < 1e-9


def test_kato_window():
    H = leaf_sections(TORUS, 0.2, 0.02)
    x = np.array([0.4, 0.6])
    C = H.shrink(0.05)(x)
    rep = kato_window(TORUS, H, x, C, 2.0, 0.1, 0.2)
    assert rep.precondition_met and rep.bound_holds
    assert rep.max_diameter == pytest.approx(rep.initial_diameter, abs=1e-9)
    Hc = leaf_sections(CATF, 0.25, 0.02)
    xc = np.array([0.3, 0.6, 0.4])
    u = CAT.eig_right[:, 0]
    seg = np.array([xc + np.array([t * u[0], t * u[1], 0.0]) for t in np.linspace(0, 0.03, 7)])
    rep = kato_window(CATF, Hc, xc, CompactSample(CAT.canonical(seg), 0.02), 4.0, 0.05, 0.2)
    assert not rep.precondition_met


def test_limit_sets():
    L = limit_set(TORUS, np.array([0.1, 0.2]), 500.0, 10.0, 0.05)
    assert len(L) > 150
    C = limit_set(CircleRotation(), np.array([0.0]), 5.0, 1.0, 0.05)
    fine = np.linspace(0, 1, 400, endpoint=False)[:, None]
    assert hausdorff(CircleRotation().space, C, make_sample(CircleRotation().space, fine, 0.01)) <= 0.05


def test_wandering_on_circle_returns_after_one_period():
    H = leaf_sections(CircleRotation(), 0.1, 0.02)
    rep = wandering_check(CircleRotation(), H, np.array([0.3]), 0.05, 3.0)
    assert not rep.wandering and rep.first_return == pytest.approx(1.0, abs=1e-6)
    rep = wandering_check(CircleRotation(), H, np.array([0.3]), 0.05, 0.8)
    assert rep.wandering
