"""Phase-space primitives for superpositions of coherent states.

Conventions used throughout the package:

* ``D(g) = exp(g b^dag - g^* b)`` and ``|a> = D(a)|0>``.
* The characteristic function is ``chi(g) = Tr[rho D(g)]``.
* The Wigner function is ``W(d) = pi^-2 \\int exp(g^* d - g d^*) chi(g) d^2g``,
  so the vacuum reads ``(2/pi) exp(-2|d|^2)`` and each quadrature
  ``Re d``, ``Im d`` has vacuum variance 1/4.

All closed forms below follow from completing the square in Gaussian
integrals of the type ``\\int exp(-|g|^2 + u g + v g^*) d^2g = pi e^{uv}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np

__all__ = [
    "CoherentSuperposition",
    "coherent_overlap",
    "displaced_element",
    "cross_integral",
    "hermite",
    "char_function",
    "wigner",
    "wigner_grid",
    "HERMITE_CUTOFF",
]

HERMITE_CUTOFF = 200


def coherent_overlap(a, b):
    """Return ``<a|b>`` for coherent amplitudes ``a`` and ``b`` (broadcasts)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return np.exp(-0.5 * np.abs(a) ** 2 - 0.5 * np.abs(b) ** 2 + np.conj(a) * b)


def displaced_element(a, b, gamma):
    """Matrix element ``<b|D(gamma)|a>`` of the displacement operator.

    Args:
        a: ket amplitude.
        b: bra amplitude.
        gamma: displacement, scalar or array.

    Returns:
        Complex array broadcast over the inputs.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    g = np.asarray(gamma, dtype=complex)
    expo = (
        -0.5 * (np.abs(a) ** 2 + np.abs(b) ** 2 + np.abs(g) ** 2)
        + np.conj(b) * a
        + np.conj(b) * g
        - np.conj(g) * a
    )
    return np.exp(expo)


def cross_integral(a, b, c, d):
    """Closed form of ``\\int (|g|^2 - 1) <b|D(g)|a> <d|D(g)|c>^* d^2g``.

    The two Gaussian factors combine into ``exp(-|g|^2 + u g + v g^*)`` with
    ``u = (b - c)^*`` and ``v = d - a``; the moments of that Gaussian give

        pi (b - c)^* (d - a) <b|d> <c|a>.

    Broadcasts over all four amplitudes.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    c = np.asarray(c, dtype=complex)
    d = np.asarray(d, dtype=complex)
    return np.pi * np.conj(b - c) * (d - a) * coherent_overlap(b, d) * coherent_overlap(c, a)


def hermite(n: int, x, cutoff: int = HERMITE_CUTOFF):
    """Physicists' Hermite polynomial ``H_n(x)`` by three-term recurrence.

    Accumulates in extended precision. Raises ``OverflowError`` when the
    result leaves the double range and ``ValueError`` when ``n`` exceeds
    ``cutoff``.
    """
    if n < 0:
        raise ValueError("Hermite order must be non-negative")
    if n > cutoff:
        raise ValueError(f"Hermite order {n} exceeds cutoff {cutoff}")
    xl = np.asarray(x, dtype=np.longdouble)
    h_prev = np.ones_like(xl)
    if n == 0:
        out = h_prev
    else:
        h = 2 * xl
        for m in range(1, n):
            h_prev, h = h, 2 * xl * h - 2 * m * h_prev
        out = h
    with np.errstate(over="ignore", invalid="ignore"):
        res = np.asarray(out, dtype=float)
    if not np.all(np.isfinite(res)):
        raise OverflowError(f"H_{n}(x) overflows double precision")
    return res if res.ndim else float(res)


@dataclass(frozen=True, eq=False)
class CoherentSuperposition:
    """Pure state ``sum_n w_n |phi_n>`` built from coherent states.

    Components need not be orthogonal; the Gram matrix of coherent overlaps
    is cached on first use. ``normalized`` records whether the weights were
    rescaled so that ``<psi|psi> = 1``.
    """

    weights: np.ndarray
    amplitudes: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        w = np.array(self.weights, dtype=complex).reshape(-1)
        a = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if w.size == 0:
            raise ValueError("a superposition needs at least one term")
        if w.shape != a.shape:
            raise ValueError("weights and amplitudes must have equal length")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(a))):
            raise ValueError("weights and amplitudes must be finite")
        w.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def from_terms(cls, terms, normalize: bool = True) -> CoherentSuperposition:
        """Build from an iterable of ``(weight, amplitude)`` pairs."""
        terms = list(terms)
        state = cls([t[0] for t in terms], [t[1] for t in terms])
        return state.normalize() if normalize else state

    @classmethod
    def coherent(cls, beta: complex) -> CoherentSuperposition:
        return cls([1.0], [beta], normalized=True)

    def __len__(self) -> int:
        return self.weights.size

    @property
    def terms(self) -> list[tuple[complex, complex]]:
        return list(zip(self.weights.tolist(), self.amplitudes.tolist()))

    @cached_property
    def gram(self) -> np.ndarray:
        """``G[l, n] = <phi_l|phi_n>``."""
        a = self.amplitudes
        return coherent_overlap(a[:, None], a[None, :])

    @cached_property
    def norm_squared(self) -> float:
        w = self.weights
        return float(np.real(np.conj(w) @ self.gram @ w))

    def normalize(self) -> CoherentSuperposition:
        if self.normalized:
            return self
        nrm = self.norm_squared
        if not nrm > 0:
            raise ValueError("cannot normalize a zero-norm superposition")
        return CoherentSuperposition(self.weights / math.sqrt(nrm), self.amplitudes, normalized=True)

    def merged(self, atol: float = 1e-12) -> CoherentSuperposition:
        """Coalesce components whose amplitudes agree within ``atol`` and
        drop exact-zero weights. The represented vector is unchanged up to
        ``atol``-sized amplitude shifts."""
        amps = self.amplitudes
        w = self.weights
        keep_w: list[complex] = []
        keep_a: list[complex] = []
        for wi, ai in zip(w, amps):
            if wi == 0:
                continue
            for j, aj in enumerate(keep_a):
                if abs(ai - aj) <= atol:
                    keep_w[j] += wi
                    break
            else:
                keep_w.append(complex(wi))
                keep_a.append(complex(ai))
        if not keep_w:
            raise ValueError("all weights vanish")
        return CoherentSuperposition(keep_w, keep_a, normalized=self.normalized)

    def pruned(self, rtol: float) -> CoherentSuperposition:
        """Drop components with ``|w| < rtol * max|w|``; renormalizes if the
        input was normalized."""
        w = self.weights
        mask = np.abs(w) >= rtol * np.abs(w).max()
        if mask.all():
            return self
        out = CoherentSuperposition(w[mask], self.amplitudes[mask])
        return out.normalize() if self.normalized else out


def _as_state(state: CoherentSuperposition) -> CoherentSuperposition:
    return state if state.normalized else state.normalize()


def char_function(state: CoherentSuperposition, gamma):
    """Characteristic function ``<psi|D(gamma)|psi>`` of a pure superposition."""
    st = _as_state(state)
    g = np.asarray(gamma, dtype=complex)
    w = st.weights
    amps = st.amplitudes
    out = np.zeros(g.shape, dtype=complex)
    gx = g[..., None]
    for wn, an in zip(w, amps):
        # bra index runs along the trailing axis
        terms = np.conj(w) * displaced_element(an, amps, gx)
        out += wn * terms.sum(axis=-1)
    return out if out.ndim else complex(out)


def wigner(state: CoherentSuperposition, delta):
    """Wigner function of a pure superposition, evaluated at ``delta``.

    Each coherent pair (ket ``a``, bra ``b``) contributes
    ``(2/pi) <b|a> exp(2 (b^* - d^*)(d - a))``.
    """
    st = _as_state(state)
    d = np.asarray(delta, dtype=complex)
    w = st.weights
    amps = st.amplitudes
    out = np.zeros(d.shape, dtype=complex)
    dx = d[..., None]
    for wn, an in zip(w, amps):
        b = amps
        expo = (
            -0.5 * (abs(an) ** 2 + np.abs(b) ** 2)
            + np.conj(b) * an
            + 2.0 * (np.conj(b) - np.conj(dx)) * (dx - an)
        )
        out += wn * (np.conj(w) * np.exp(expo)).sum(axis=-1)
    res = (2.0 / np.pi) * out.real
    return res if res.ndim else float(res)


def wigner_grid(states, probabilities, re, im) -> np.ndarray:
    """Wigner function of ``sum_s p_s |psi_s><psi_s|`` on the grid ``re x im``.

    On a rectangular grid each coherent pair term factorizes as
    ``e^{-2|d|^2} exp(2x(b^* + a)) exp(2iy(b^* - a))``, so the double sum over
    pairs becomes one matrix product. Returns an array of shape
    ``(len(re), len(im))``.
    """
    x = np.asarray(re, dtype=float)
    y = np.asarray(im, dtype=float)
    kets, bras, coef = [], [], []
    for p, st in zip(probabilities, states):
        st = _as_state(st)
        a = st.amplitudes
        w = st.weights
        kets.append(np.repeat(a, a.size))
        bras.append(np.tile(a, a.size))
        coef.append(p * np.outer(w, np.conj(w)).ravel())
    a = np.concatenate(kets)
    b = np.concatenate(bras)
    c = np.concatenate(coef) * np.exp(-0.5 * (np.abs(a) ** 2 + np.abs(b) ** 2) - np.conj(b) * a)
    u = np.conj(b) + a
    v = np.conj(b) - a
    fx = np.exp(2 * x[:, None] * u[None, :]) * c[None, :]
    fy = np.exp(2j * y[:, None] * v[None, :])
    s = fx @ fy.T
    gauss = np.exp(-2 * (x[:, None] ** 2 + y[None, :] ** 2))
    return (2 / np.pi) * gauss * s.real
