import numpy as np
import pytest

from crossfield.quadrature import simpson, simpson_batch
from crossfield.rootfind import bracketed_root


def test_simpson_is_exact_on_cubics():
    assert simpson(lambda s: s ** 3 - 2 * s, 0.0, 2.0, panels=2, adaptive=False) == pytest.approx(0.0, abs=1e-14)


def test_simpson_adaptive_reaches_tolerance():
    assert simpson(np.sin, 0.0, np.pi, tol=1e-12) == pytest.approx(2.0, abs=1e-11)


def test_simpson_batch_elements_are_independent():
    freqs = np.array([1.0, 5.0, 20.0])
    f = lambda s, idx: np.sin(freqs[idx][:, None] * s[None, :])  # noqa: E731
    together = simpson_batch(f, 0.0, 1.0, 3, tol=1e-10)
    alone = [simpson_batch(lambda s, idx, k=k: np.sin(freqs[k] * s)[None, :], 0.0, 1.0, 1, tol=1e-10)[0]
             for k in range(3)]
    assert np.array_equal(together, np.array(alone))
    assert together == pytest.approx((1 - np.cos(freqs)) / freqs, abs=1e-9)


def test_root_finder_on_monotone_cubic():
    c = np.array([0.1, -0.3, 0.7])
    roots, ok = bracketed_root(lambda s, idx: s ** 3 + s - c[idx], -1.0 * np.ones(3), np.ones(3))
    assert ok.all()
    assert np.abs(roots ** 3 + roots - c).max() < 1e-9


def test_root_finder_flags_missing_sign_change():
    roots, ok = bracketed_root(lambda s, idx: s ** 2 + 1.0, [-1.0], [1.0])
    assert not ok[0] and np.isnan(roots[0])
    roots, ok = bracketed_root(lambda s, idx: np.where(s > 0.5, np.nan, s), [-1.0], [1.0])
    assert not ok[0]


def test_root_at_bracket_end():
    roots, ok = bracketed_root(lambda s, idx: s, [0.0], [1.0])
    assert ok[0] and roots[0] == 0.0
