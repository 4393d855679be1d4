"""Macroscopic quantumness ``I(rho)`` and mean excitation number.

``I(rho) = (1/2pi) \\int (|g|^2 - 1) |chi(g)|^2 d^2g``. For a superposition
of coherent states ``chi`` is a double sum over coherent pairs, so
``|chi|^2`` is a quadruple sum and every term integrates in closed form via
:func:`macromech.core.cross_integral`.

Because the closed form is ``pi (b - c)^* (d - a) <b|d> <c|a>``, the
quadruple sum over a mixture factorizes into products of matrix elements
``<s|t>``, ``<s|b|t>`` and ``<s|b^dag b|t>`` between mixture components:

    I = sum_{s,t} p_s p_t [Re(<s|b^dag b|t> <s|t>^*) - |<s|b|t>|^2].

:func:`measure_I` sums the quadruples literally; :func:`measure_I_mixture`
uses the factorized form, which scales to ensembles of hundreds of
trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .core import CoherentSuperposition, coherent_overlap, cross_integral

__all__ = [
    "MixtureState",
    "measure_I",
    "mean_excitations",
    "first_moment",
    "measure_I_mixture",
    "mean_excitations_mixture",
    "pair_matrices",
    "mixture_statistics",
    "MixtureStatistics",
]

IMAG_RESIDUE = 1e-8


def _check_real(z: complex, scale: float, what: str) -> float:
    if abs(z.imag) > IMAG_RESIDUE * max(1.0, scale):
        raise ArithmeticError(f"{what} has imaginary residue {z.imag:.3e}")
    return z.real


def _normalized(state: CoherentSuperposition) -> CoherentSuperposition:
    return state if state.normalized else state.normalize()


def measure_I(state: CoherentSuperposition) -> float:
    """Macroscopicity of a pure superposition by the explicit quadruple sum."""
    st = _normalized(state)
    w = st.weights
    a = st.amplitudes
    m = len(a)
    # indices (n, l, p, q): ket/bra of chi, ket/bra of chi^*
    wn = w[:, None, None]
    wl = np.conj(w)[None, :, None]
    wq = w[None, None, :]
    an = a[:, None, None]
    al = a[None, :, None]
    aq = a[None, None, :]
    re_parts = []
    im_parts = []
    for p in range(m):
        terms = wn * wl * np.conj(w[p]) * wq * cross_integral(an, al, a[p], aq)
        re_parts.append(math.fsum(terms.real.ravel()))
        im_parts.append(math.fsum(terms.imag.ravel()))
    total = complex(math.fsum(re_parts), math.fsum(im_parts)) / (2 * np.pi)
    return _check_real(total, abs(total), "I")


def mean_excitations(state: CoherentSuperposition) -> float:
    """``<b^dag b>`` of a pure superposition."""
    st = _normalized(state)
    v = st.weights * st.amplitudes
    val = complex(np.conj(v) @ st.gram @ v)
    return _check_real(val, abs(val), "<b^dag b>")


def first_moment(state: CoherentSuperposition) -> complex:
    """``<b>`` of a pure superposition."""
    st = _normalized(state)
    return complex(np.conj(st.weights) @ st.gram @ (st.weights * st.amplitudes))


@dataclass(frozen=True, eq=False)
class MixtureState:
    """Convex combination of pure superpositions."""

    probabilities: np.ndarray
    components: tuple = field(default_factory=tuple)

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float).reshape(-1)
        comps = tuple(c if c.normalized else c.normalize() for c in self.components)
        if p.size != len(comps) or p.size == 0:
            raise ValueError("need one probability per component (at least one)")
        if np.any(p < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValueError(f"probabilities sum to {p.sum()!r}, expected 1")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_weights(cls, weights, components) -> MixtureState:
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if not total > 0:
            raise ValueError("mixture weights sum to zero")
        return cls(w / total, tuple(components))

    def __len__(self) -> int:
        return len(self.components)


def pair_matrices(components, block: int = 512):
    """Matrices ``G = <s|t>``, ``B = <s|b|t>``, ``N = <s|b^dag b|t>``.

    Components are flattened into one list of coherent terms and the
    overlap matrix is processed in row blocks of about ``block`` terms, so
    memory stays bounded for large ensembles. Reduction order is fixed.
    """
    comps = [c if c.normalized else c.normalize() for c in components]
    sizes = np.array([len(c) for c in comps])
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    w = np.concatenate([c.weights for c in comps])
    amp = np.concatenate([c.amplitudes for c in comps])
    n_states = len(comps)
    G = np.empty((n_states, n_states), dtype=complex)
    B = np.empty_like(G)
    N = np.empty_like(G)
    s0 = 0
    while s0 < n_states:
        s1 = s0
        rows = 0
        while s1 < n_states and (rows == 0 or rows + sizes[s1] <= block):
            rows += sizes[s1]
            s1 += 1
        r0 = starts[s0]
        r1 = r0 + rows
        ov = coherent_overlap(amp[r0:r1, None], amp[None, :])
        y = (np.conj(w[r0:r1])[:, None] * w[None, :]) * ov
        row_starts = starts[s0:s1] - r0
        yb = y * amp[None, :]
        yn = yb * np.conj(amp[r0:r1])[:, None]
        for mat, src in ((G, y), (B, yb), (N, yn)):
            cols = np.add.reduceat(src, starts, axis=1)
            mat[s0:s1] = np.add.reduceat(cols, row_starts, axis=0)
        s0 = s1
    return G, B, N


def _kernel(components):
    G, B, N = pair_matrices(components)
    K = np.real(N * np.conj(G)) - np.abs(B) ** 2
    # symmetrize: the exact kernel enters only through p^T K p
    K = 0.5 * (K + K.T)
    return K, np.real(np.diag(N))


def measure_I_mixture(mix: MixtureState) -> float:
    """Macroscopicity of a mixture of pure superpositions."""
    K, _ = _kernel(mix.components)
    p = mix.probabilities
    return float(p @ K @ p)


def mean_excitations_mixture(mix: MixtureState) -> float:
    return float(sum(p * mean_excitations(c) for p, c in zip(mix.probabilities, mix.components)))


@dataclass(frozen=True)
class MixtureStatistics:
    """Ensemble estimates with jackknife standard errors."""

    I: float
    mean_excitations: float
    se_I: float
    se_mean_excitations: float
    se_gap: float

    @property
    def gap(self) -> float:
        return self.mean_excitations - self.I


def mixture_statistics(mix: MixtureState) -> MixtureStatistics:
    """``I``, ``<b^dag b>`` and their leave-one-out jackknife errors.

    The mixture weights are renormalized after removing each component, as
    they would be for an ensemble lacking that trajectory.
    """
    K, nd = _kernel(mix.components)
    p = mix.probabilities
    Kp = K @ p
    Q = float(p @ Kp)
    Nm = float(p @ nd)
    T = p.size
    if T < 2:
        return MixtureStatistics(Q, Nm, 0.0, 0.0, 0.0)
    one_minus = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        I_loo = (Q - 2 * p * Kp + p ** 2 * np.diag(K)) / one_minus ** 2
        N_loo = (Nm - p * nd) / one_minus
    valid = one_minus > 1e-12
    I_loo = I_loo[valid]
    N_loo = N_loo[valid]
    gap_loo = N_loo - I_loo
    fac = (T - 1) / T

    def se(v):
        return float(np.sqrt(fac * np.sum((v - v.mean()) ** 2)))

    return MixtureStatistics(Q, Nm, se(I_loo), se(N_loo), se(gap_loo))
