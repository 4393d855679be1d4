"""Cat-state fidelities and the amplitude optimization."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import minimize

from .core import CoherentSuperposition, coherent_overlap

__all__ = [
    "CatSpec",
    "cat_state",
    "state_fidelity",
    "cat_fidelity",
    "optimize_lambda",
    "simplified_state",
    "fidelity_curve",
    "canonical_lambda",
]

GRID_HALF_WIDTH = 4.0
GRID_STEP = 0.05
_ODD_MIN = 1e-6


@dataclass(frozen=True)
class CatSpec:
    """Cat ``|lam> + parity |-lam>`` with parity +1 (even) or -1 (odd)."""

    lam: complex
    parity: int = 1

    def __post_init__(self):
        if self.parity not in (1, -1):
            raise ValueError("parity must be +1 or -1")
        if self.parity == -1 and abs(self.lam) == 0:
            raise ValueError("odd cat is undefined at lambda = 0")
        object.__setattr__(self, "lam", complex(self.lam))


def _parity(parity) -> int:
    if parity in ("even", "+", 1):
        return 1
    if parity in ("odd", "-", -1):
        return -1
    raise ValueError(f"unknown parity {parity!r}")


def _cat_norm2(lam, parity):
    """``2 + 2 parity e^{-2|lam|^2}``, stable near zero for odd parity."""
    x = -2 * np.abs(lam) ** 2
    return 2 + 2 * np.exp(x) if parity == 1 else -2 * np.expm1(x)


def cat_state(spec: CatSpec) -> CoherentSuperposition:
    """Normalized cat state; an even cat at ``lam = 0`` is the vacuum."""
    lam = spec.lam
    if lam == 0:
        return CoherentSuperposition.coherent(0)
    c = 1 / math.sqrt(_cat_norm2(lam, spec.parity))
    return CoherentSuperposition([c, spec.parity * c], [lam, -lam], normalized=True)


def _overlap(a: CoherentSuperposition, b: CoherentSuperposition) -> complex:
    ov = coherent_overlap(a.amplitudes[:, None], b.amplitudes[None, :])
    return complex(np.conj(a.weights) @ ov @ b.weights)


def state_fidelity(a: CoherentSuperposition, b: CoherentSuperposition) -> float:
    """``|<a|b>|^2`` for normalized pure states."""
    a = a if a.normalized else a.normalize()
    b = b if b.normalized else b.normalize()
    return abs(_overlap(a, b)) ** 2


def cat_fidelity(state: CoherentSuperposition, lam, parity=1):
    """Fidelity of ``state`` with the cat of amplitude ``lam`` (broadcasts over ``lam``)."""
    st = state if state.normalized else state.normalize()
    par = _parity(parity)
    lam = np.asarray(lam, dtype=complex)
    lx = lam[..., None]
    amp = st.amplitudes
    s = (coherent_overlap(lx, amp) + par * coherent_overlap(-lx, amp)) @ st.weights
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.abs(s) ** 2 / _cat_norm2(lam, par)
    if par == -1:
        f = np.where(np.abs(lam) < _ODD_MIN, 0.0, f)
    return f if f.ndim else float(f)


def canonical_lambda(lam: complex) -> complex:
    """Representative of ``{lam, -lam}`` with ``Re >= 0``, then ``Im >= 0``."""
    lam = complex(lam)
    if lam.real < 0 or (lam.real == 0 and lam.imag < 0):
        lam = -lam
    return lam + 0.0  # drop negative zeros


def optimize_lambda(state: CoherentSuperposition, parity=1, n_starts: int = 4,
                    half_width: float = GRID_HALF_WIDTH, step: float = GRID_STEP) -> tuple[complex, float]:
    """Maximize the cat fidelity over ``lam``.

    A grid over ``Re, Im in [-half_width, half_width]`` locates candidate
    basins (ties broken lexicographically on ``(Re, Im)``); Nelder-Mead then
    refines the best ``n_starts`` grid local maxima.

    Returns:
        ``(lam*, F*)`` with ``lam*`` in canonical form.
    """
    par = _parity(parity)
    m = int(round(half_width / step))
    axis = step * np.arange(-m, m + 1)
    grid = axis[:, None] + 1j * axis[None, :]
    f = cat_fidelity(state, grid, par)

    # grid local maxima, ordered by value then (Re, Im)
    pad = np.pad(f, 1, constant_values=-np.inf)
    nb = [pad[1 + di:pad.shape[0] - 1 + di, 1 + dj:pad.shape[1] - 1 + dj]
          for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    is_max = np.all([f >= x for x in nb], axis=0)
    idx = np.argwhere(is_max)
    order = sorted(range(len(idx)), key=lambda t: (-f[tuple(idx[t])], idx[t][0], idx[t][1]))
    starts = []
    for t in order:
        lam0 = canonical_lambda(grid[tuple(idx[t])])
        if all(abs(lam0 - s) > 2 * step for s in starts):
            starts.append(lam0)
        if len(starts) >= n_starts:
            break

    def neg(v):
        return -cat_fidelity(state, complex(v[0], v[1]), par)

    best_lam, best_f = starts[0], float(cat_fidelity(state, starts[0], par))
    for lam0 in starts:
        res = minimize(neg, [lam0.real, lam0.imag], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 4000,
                                "initial_simplex": [[lam0.real, lam0.imag],
                                                    [lam0.real + step, lam0.imag],
                                                    [lam0.real, lam0.imag + step]]})
        if -res.fun > best_f + 1e-15:
            best_f = float(-res.fun)
            best_lam = complex(res.x[0], res.x[1])
    return canonical_lambda(best_lam), best_f


def simplified_state(d0: complex, d1: complex, d2: complex, mu: float, amplitudes) -> CoherentSuperposition:
    """Three-component state ``d0|phi_0> + mu d1|phi_1> + d2|phi_2>``, normalized."""
    if not 0 <= mu <= 1:
        raise ValueError("mu must lie in [0, 1]")
    amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
    if amps.size != 3:
        raise ValueError("need exactly three amplitudes")
    w = np.array([d0, mu * d1, d2], dtype=complex)
    if not np.any(w != 0):
        raise ValueError("all weights vanish")
    keep = w != 0
    return CoherentSuperposition(w[keep], amps[keep]).normalize()


def fidelity_curve(state: CoherentSuperposition, re_values, im: float = 0.0, parity=1) -> np.ndarray:
    """Cat fidelity along ``lam = re + i im`` for each ``re``."""
    lam = np.asarray(re_values, dtype=float) + 1j * im
    return np.asarray(cat_fidelity(state, lam, parity))
