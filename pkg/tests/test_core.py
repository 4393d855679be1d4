import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from macromech.core import (
    CoherentSuperposition,
    char_function,
    coherent_overlap,
    cross_integral,
    displaced_element,
    hermite,
    wigner,
    wigner_grid,
)
from macromech.quadrature import quad2d

import oracles

N = 70
amp = st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False)


def parity_wigner(rho, delta):
    """(2/pi) Tr[rho D(d) P D(d)^dag] in the Fock basis."""
    n = rho.shape[0]
    P = np.diag((-1.0) ** np.arange(n))
    D = oracles.displacement(delta, n)
    return (2 / np.pi) * np.trace(rho @ D @ P @ D.conj().T).real


def test_overlap_modulus():
    a, b = 0.3 + 1.1j, -0.7 + 0.2j
    assert abs(coherent_overlap(a, b)) == pytest.approx(math.exp(-abs(a - b) ** 2 / 2))
    assert coherent_overlap(a, a) == pytest.approx(1.0)


def test_displaced_element_matches_fock():
    rng = np.random.default_rng(3)
    for _ in range(5):
        a, b, g = rng.normal(size=3) + 1j * rng.normal(size=3)
        D = oracles.displacement(g, N)
        ref = np.vdot(oracles.coherent_ket(b, N), D @ oracles.coherent_ket(a, N))
        assert displaced_element(a, b, g) == pytest.approx(ref, abs=1e-10)


def test_displaced_element_at_zero_is_overlap():
    assert displaced_element(1 + 1j, 1 + 1j, 0) == pytest.approx(1.0)
    assert displaced_element(0.5, -0.2j, 0) == pytest.approx(coherent_overlap(-0.2j, 0.5))


def test_cross_integral_against_quadrature():
    rng = np.random.default_rng(7)
    for _ in range(4):
        a, b, c, d = rng.uniform(-1.5, 1.5, 4) + 1j * rng.uniform(-1.5, 1.5, 4)
        ref = quad2d(lambda g: (np.abs(g) ** 2 - 1) * displaced_element(a, b, g)
                     * np.conj(displaced_element(c, d, g)), radius=10.0)
        assert cross_integral(a, b, c, d) == pytest.approx(ref, abs=1e-8)


def test_hermite_values():
    x = np.linspace(-2, 2, 7)
    assert np.allclose(hermite(3, x), 8 * x ** 3 - 12 * x)
    assert hermite(0, 1.3) == 1.0
    assert hermite(5, 0.5) == pytest.approx(32 * 0.5 ** 5 - 160 * 0.5 ** 3 + 120 * 0.5)


def test_hermite_limits():
    with pytest.raises(ValueError):
        hermite(201, 0.1)
    with pytest.raises(OverflowError):
        hermite(200, 1e3)
    with pytest.raises(ValueError):
        hermite(-1, 0.0)


def test_superposition_validation():
    with pytest.raises(ValueError):
        CoherentSuperposition([], [])
    with pytest.raises(ValueError):
        CoherentSuperposition([1, 2], [0])
    with pytest.raises(ValueError):
        CoherentSuperposition([np.nan], [0])
    with pytest.raises(ValueError):
        CoherentSuperposition([0.0], [1.0]).normalize()


def test_superposition_is_immutable():
    s = CoherentSuperposition([1, 1], [1, -1])
    with pytest.raises(ValueError):
        s.weights[0] = 3


def test_normalize_and_gram():
    s = CoherentSuperposition.from_terms([(1, 2.0), (1, -2.0)])
    assert s.normalized
    assert s.norm_squared == pytest.approx(1.0)
    assert s.gram[0, 1] == pytest.approx(math.exp(-8))


def test_merged_and_pruned():
    s = CoherentSuperposition([1, 2, 0, 1e-20], [0.5, 0.5, 3.0, 1.0])
    m = s.merged()
    assert len(m) == 2
    assert m.weights[0] == 3
    p = m.pruned(1e-14)
    assert len(p) == 1


def test_char_function_matches_fock():
    s = CoherentSuperposition.from_terms([(1, 1.2), (0.5j, -0.4 + 0.8j), (-0.3, 0.2j)])
    ket = oracles.pure_state_ket(s, N)
    for g in (0.3 - 0.2j, -1.1 + 0.5j, 0j):
        ref = np.vdot(ket, oracles.displacement(g, N) @ ket)
        assert char_function(s, g) == pytest.approx(ref, abs=1e-10)
    assert char_function(s, 0) == pytest.approx(1.0)


def test_wigner_matches_parity_oracle():
    s = CoherentSuperposition.from_terms([(1, 1.5j), (1, -1.5j)])
    ket = oracles.pure_state_ket(s, N)
    rho = np.outer(ket, ket.conj())
    for d in (0.0, 0.3 + 0.1j, -0.5 + 1.2j):
        assert wigner(s, d) == pytest.approx(parity_wigner(rho, d), abs=1e-9)


def test_wigner_vacuum_and_normalization():
    vac = CoherentSuperposition.coherent(0)
    assert wigner(vac, 0) == pytest.approx(2 / np.pi)
    s = CoherentSuperposition.from_terms([(1, 1 + 1j), (-1, -1 - 1j)])
    assert quad2d(lambda d: wigner(s, d), radius=6.0).real == pytest.approx(1.0, abs=1e-9)


def test_wigner_grid_matches_pointwise():
    s = CoherentSuperposition.from_terms([(1, 1.0), (0.3j, -1.0 + 0.5j)])
    x = np.linspace(-3, 3, 13)
    y = np.linspace(-2, 2, 9)
    ref = wigner(s, x[:, None] + 1j * y[None, :])
    assert np.allclose(wigner_grid([s], [1.0], x, y), ref, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(amp, amp), min_size=1, max_size=4))
def test_wigner_is_real_and_bounded(terms):
    weights = [t[0] for t in terms]
    if max(abs(w) for w in weights) < 1e-3:
        return
    s = CoherentSuperposition([t[0] for t in terms], [t[1] for t in terms])
    if s.norm_squared < 1e-6:
        return
    d = np.linspace(-2, 2, 9)[:, None] + 1j * np.linspace(-2, 2, 9)[None, :]
    w = wigner(s, d)
    assert np.all(np.isfinite(w))
    assert np.all(np.abs(w) <= 2 / np.pi + 1e-9)
