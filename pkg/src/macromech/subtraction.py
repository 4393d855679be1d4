"""Single-excitation conditioning of Gaussian mechanical states.

Phase-space variable ``d = x + i p`` with vacuum variances ``Var x = Var p
= 1/4``, so that ``<b^dag b> = \\int |d|^2 W d^2d - 1/2``. A Gaussian state
has ``W = G(u) = exp(-u^T V^-1 u / 2) / (2 pi sqrt(det V))`` with ``u = v - m``,
``v = (x, p)`` and ``V`` the quadrature covariance. In the form
``exp(-2 d sigma^-1 d^T)`` used for phonon-subtracted states,
``sigma = 4 V``.

Ladder operators act on Wigner functions as first-order differential
operators (``d_a = (d_x - i d_p)/2``):

    b rho     <->  (a + d_{a*}/2) W        rho b^dag <->  (a* + d_a/2) W
    b^dag rho <->  (a* - d_a/2) W          rho b     <->  (a - d_{a*}/2) W

Applied to ``A(u) G(u)`` they only raise the degree of ``A``, so one
excitation on a Gaussian gives a degree-2 polynomial times the same
Gaussian. Every integral below is a polynomial moment of a Gaussian and is
evaluated exactly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError

__all__ = [
    "GaussianState",
    "GaussPolyWigner",
    "subtract_excitation",
    "measure_I_wigner",
    "mean_excitations_wigner",
    "detuning_sweep",
    "read_table",
    "write_sweep",
    "synthetic_table",
    "gaussian_moments",
]

VACUUM_VAR = 0.25
_DET_MIN = VACUUM_VAR ** 2
_DEG = 7  # polynomial arrays hold degrees 0..6 in each variable


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Gaussian Wigner function with quadrature ``mean`` and covariance ``cov``."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.array(self.mean, dtype=float).reshape(-1)
        v = np.array(self.cov, dtype=float)
        if m.shape != (2,) or v.shape != (2, 2):
            raise ValueError("mean must be a 2-vector and cov a 2x2 matrix")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise ValueError("Gaussian parameters must be finite")
        if abs(v[0, 1] - v[1, 0]) > 1e-12 * max(1.0, abs(v).max()):
            raise ValueError("cov must be symmetric")
        v = 0.5 * (v + v.T)
        ev = np.linalg.eigvalsh(v)
        if ev[0] <= 0 or ev[0] < 1e-10 * ev[1]:
            raise ValueError("cov is singular or nearly so")
        if np.linalg.det(v) < _DET_MIN * (1 - 1e-9):
            raise ValueError(f"det(cov) = {np.linalg.det(v):.6g} violates the uncertainty bound 1/16")
        m.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", v)

    @classmethod
    def vacuum(cls) -> GaussianState:
        return cls([0.0, 0.0], VACUUM_VAR * np.eye(2))

    @classmethod
    def thermal(cls, nbar: float, beta: complex = 0) -> GaussianState:
        beta = complex(beta)
        return cls([beta.real, beta.imag], VACUUM_VAR * (2 * nbar + 1) * np.eye(2))

    @classmethod
    def squeezed_thermal(cls, r: float, phi: float = 0.0, nbar: float = 0.0, beta: complex = 0) -> GaussianState:
        """Thermal state squeezed by ``r`` along the quadrature at angle ``phi``."""
        beta = complex(beta)
        rot = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
        d = np.diag([math.exp(-2 * r), math.exp(2 * r)])
        return cls([beta.real, beta.imag], VACUUM_VAR * (2 * nbar + 1) * rot @ d @ rot.T)

    @property
    def precision(self) -> np.ndarray:
        return np.linalg.inv(self.cov)

    @property
    def sigma_matrix(self) -> np.ndarray:
        """Matrix ``sigma`` of the ``exp(-2 d sigma^-1 d^T)`` form (``4 cov``)."""
        return 4 * self.cov

    @property
    def purity(self) -> float:
        return VACUUM_VAR / math.sqrt(np.linalg.det(self.cov))

    def __call__(self, delta):
        d = np.asarray(delta, dtype=complex)
        ux = d.real - self.mean[0]
        up = d.imag - self.mean[1]
        P = self.precision
        q = P[0, 0] * ux ** 2 + 2 * P[0, 1] * ux * up + P[1, 1] * up ** 2
        return np.exp(-0.5 * q) / (2 * np.pi * math.sqrt(np.linalg.det(self.cov)))


def gaussian_moments(cov, order: int) -> np.ndarray:
    """``M[i, j] = E[u_x^i u_p^j]`` for ``u ~ N(0, cov)``, ``i, j <= order``.

    Uses ``E[x^i y^j] = (i-1) Vxx E[x^{i-2} y^j] + j Vxy E[x^{i-1} y^{j-1}]``
    and its mirror image.
    """
    c = np.asarray(cov, dtype=float)
    M = np.zeros((order + 1, order + 1))
    M[0, 0] = 1.0
    for tot in range(1, 2 * order + 1):
        for i in range(max(0, tot - order), min(order, tot) + 1):
            j = tot - i
            if i >= 1:
                v = (i - 1) * c[0, 0] * M[i - 2, j] if i >= 2 else 0.0
                if j >= 1:
                    v += j * c[0, 1] * M[i - 1, j - 1]
            else:
                v = (j - 1) * c[1, 1] * M[i, j - 2] if j >= 2 else 0.0
            M[i, j] = v
    return M


# Polynomials in the centered variables (u_x, u_p): arrays c[i, j] of u_x^i u_p^j.

def _poly(const=0.0, x=0.0, p=0.0):
    c = np.zeros((_DEG, _DEG), dtype=complex)
    c[0, 0] = const
    c[1, 0] = x
    c[0, 1] = p
    return c


def _mul(a, b):
    out = np.zeros((_DEG, _DEG), dtype=complex)
    for i, j in zip(*np.nonzero(a)):
        sub = b[: _DEG - i, : _DEG - j]
        out[i:, j:] += a[i, j] * sub
        if np.any(b[_DEG - i:, :]) or np.any(b[:, _DEG - j:]):
            raise OverflowError("polynomial degree exceeds storage")
    return out


def _dx(a):
    out = np.zeros_like(a)
    out[:-1, :] = a[1:, :] * np.arange(1, _DEG)[:, None]
    return out


def _dp(a):
    out = np.zeros_like(a)
    out[:, :-1] = a[:, 1:] * np.arange(1, _DEG)[None, :]
    return out


class _Calculus:
    """Wigner-side ladder operators for ``A(u) G(u)`` with a fixed Gaussian ``G``."""

    def __init__(self, g: GaussianState):
        P = g.precision
        m = g.mean
        self.alpha = _poly(complex(m[0], m[1]), 1.0, 1j)
        self.alpha_c = _poly(complex(m[0], -m[1]), 1.0, -1j)
        # gradient of Q = -u^T P u / 2
        self.qx = _poly(0, -P[0, 0], -P[0, 1])
        self.qp = _poly(0, -P[1, 0], -P[1, 1])

    def d_a(self, A):
        """Polynomial part of ``d_a (A G)``, ``d_a = (d_x - i d_p) / 2``."""
        return 0.5 * ((_dx(A) + _mul(A, self.qx)) - 1j * (_dp(A) + _mul(A, self.qp)))

    def d_ac(self, A):
        return 0.5 * ((_dx(A) + _mul(A, self.qx)) + 1j * (_dp(A) + _mul(A, self.qp)))

    def grad(self, A):
        return _dx(A) + _mul(A, self.qx), _dp(A) + _mul(A, self.qp)

    def left_b(self, A):
        return _mul(self.alpha, A) + 0.5 * self.d_ac(A)

    def right_bdag(self, A):
        return _mul(self.alpha_c, A) + 0.5 * self.d_a(A)

    def left_bdag(self, A):
        return _mul(self.alpha_c, A) - 0.5 * self.d_a(A)

    def right_b(self, A):
        return _mul(self.alpha, A) - 0.5 * self.d_ac(A)


def _expect(coeffs, moments):
    n = moments.shape[0]
    return complex(np.sum(coeffs[:n, :n] * moments))


@dataclass(frozen=True, eq=False)
class GaussPolyWigner:
    """``W(d) = norm * A(u) * G(u)`` with ``A`` of total degree <= 2.

    ``poly[i, j]`` multiplies ``u_x^i u_p^j`` where ``u`` is measured from
    ``gaussian.mean``; ``G`` is the normalized Gaussian density, so
    ``norm = 1 / E_G[A]``.
    """

    poly: np.ndarray
    gaussian: GaussianState
    norm: float

    def __post_init__(self):
        c = np.zeros((3, 3))
        src = np.asarray(self.poly, dtype=float)
        c[: src.shape[0], : src.shape[1]] = src[:3, :3]
        if np.any(src[3:, :]) or np.any(src[:, 3:]) or c[1, 2] or c[2, 1] or c[2, 2]:
            raise ValueError("polynomial must have total degree <= 2")
        c.setflags(write=False)
        object.__setattr__(self, "poly", c)
        object.__setattr__(self, "norm", float(self.norm))

    @classmethod
    def normalized(cls, poly, gaussian: GaussianState) -> GaussPolyWigner:
        total = float(np.sum(np.asarray(poly)[:3, :3] * gaussian_moments(gaussian.cov, 2)))
        if not total > 0:
            raise ValueError("polynomial has non-positive integral")
        return cls(poly, gaussian, 1.0 / total)

    @classmethod
    def from_gaussian(cls, g: GaussianState) -> GaussPolyWigner:
        c = np.zeros((3, 3))
        c[0, 0] = 1.0
        return cls(c, g, 1.0)

    def _full(self):
        c = np.zeros((_DEG, _DEG), dtype=complex)
        c[:3, :3] = self.norm * self.poly
        return c

    def __call__(self, delta):
        d = np.asarray(delta, dtype=complex)
        ux = d.real - self.gaussian.mean[0]
        up = d.imag - self.gaussian.mean[1]
        A = np.polynomial.polynomial.polyval2d(ux, up, self.poly)
        return self.norm * A * self.gaussian(d)

    def integral(self) -> float:
        return self.norm * float(np.sum(self.poly * gaussian_moments(self.gaussian.cov, 2)))


def subtract_excitation(g: GaussianState, operator: str = "creation") -> GaussPolyWigner:
    """Wigner function of ``O rho O^dag`` (normalized) for Gaussian ``rho``.

    Args:
        g: input Gaussian state.
        operator: ``"creation"`` conditions with ``O = b^dag``, which maps
            the vacuum to the one-phonon Fock state; ``"annihilation"`` uses
            ``O = b``.
    """
    calc = _Calculus(g)
    A = _poly(1.0)
    if operator == "creation":
        A = calc.left_bdag(calc.right_b(A))
    elif operator == "annihilation":
        A = calc.left_b(calc.right_bdag(A))
    else:
        raise ValueError(f"operator must be 'creation' or 'annihilation', not {operator!r}")
    if np.max(np.abs(A.imag)) > 1e-10 * max(1.0, np.max(np.abs(A.real))):
        raise ArithmeticError("Wigner polynomial is not real")
    return GaussPolyWigner.normalized(A.real[:3, :3], g)


def _square_integral(poly_sq, g: GaussianState) -> float:
    """``\\int poly_sq(u) G(u)^2 d^2u``; ``G^2`` is ``N(0, V/2) / (4 pi sqrt(det V))``."""
    M = gaussian_moments(g.cov / 2, _DEG - 1)
    return _expect(poly_sq, M).real / (4 * np.pi * math.sqrt(np.linalg.det(g.cov)))


def measure_I_wigner(w: GaussPolyWigner | GaussianState) -> float:
    """Macroscopicity from the Wigner function.

    ``I = -(pi/2) \\int W (d_{d d*} + 1) W``, integrated by parts into
    ``(pi/8) \\int |grad W|^2 - (pi/2) \\int W^2`` and evaluated exactly.
    """
    if isinstance(w, GaussianState):
        w = GaussPolyWigner.from_gaussian(w)
    calc = _Calculus(w.gaussian)
    A = w._full()
    gx, gp = calc.grad(A)
    grad_sq = _mul(gx, np.conj(gx)) + _mul(gp, np.conj(gp))
    w_sq = _mul(A, np.conj(A))
    return float(np.pi / 8 * _square_integral(grad_sq, w.gaussian) - np.pi / 2 * _square_integral(w_sq, w.gaussian))


def mean_excitations_wigner(w: GaussPolyWigner | GaussianState) -> float:
    """``<b^dag b> = \\int |d|^2 W d^2d - 1/2``."""
    if isinstance(w, GaussianState):
        w = GaussPolyWigner.from_gaussian(w)
    calc = _Calculus(w.gaussian)
    mod_sq = _mul(calc.alpha, calc.alpha_c)
    val = _expect(_mul(mod_sq, w._full()), gaussian_moments(w.gaussian.cov, _DEG - 1)).real
    return float(val - 0.5)


def _sweep_row(row, operator):
    delta, g = row
    w = subtract_excitation(g, operator)
    return float(delta), measure_I_wigner(w), mean_excitations_wigner(w)


def detuning_sweep(table, operator: str = "creation", threads: int = 1):
    """``(delta, I, <b^dag b>)`` per table row, plus the index of the largest ``I``."""
    rows = list(table)
    if not rows:
        raise ValueError("empty detuning table")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(lambda r: _sweep_row(r, operator), rows))
    else:
        out = [_sweep_row(r, operator) for r in rows]
    best = max(range(len(out)), key=lambda i: (out[i][1], -i))
    return out, best


_REQUIRED = ("delta", "var_x", "var_p")
_OPTIONAL = ("mean_x", "mean_p", "cov_xp")


def read_table(path) -> list[tuple[float, GaussianState]]:
    """Read a detuning table; header ``delta,var_x,var_p[,mean_x,mean_p,cov_xp]``.

    Raises:
        ConfigError: naming the offending line for any malformed row.
    """
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigError(f"{path}: empty table") from None
        missing = [h for h in _REQUIRED if h not in header]
        unknown = [h for h in header if h not in _REQUIRED + _OPTIONAL]
        if missing or unknown:
            raise ConfigError(f"{path}:1: bad header (missing {missing}, unknown {unknown})")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise ConfigError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                vals = {h: float(f) for h, f in zip(header, rec)}
                g = GaussianState(
                    [vals.get("mean_x", 0.0), vals.get("mean_p", 0.0)],
                    [[vals["var_x"], vals.get("cov_xp", 0.0)], [vals.get("cov_xp", 0.0), vals["var_p"]]],
                )
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
            rows.append((vals["delta"], g))
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    return rows


def write_sweep(path, results) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("delta,I,mean_excitations\n")
        for d, i, n in results:
            fh.write(f"{d:.17g},{i:.17g},{n:.17g}\n")


def synthetic_table(deltas, r_rate: float = 0.5, nbar0: float = 0.01, heat_rate: float = 1.0):
    """Illustrative detuning table: squeezing ``r = r_rate * delta`` and
    thermal occupation ``nbar0 * e^{heat_rate * delta}`` both grow with ``delta``,
    so the quadrature variances grow monotonically. Not a physical model."""
    out = []
    for d in deltas:
        g = GaussianState.squeezed_thermal(r_rate * d, 0.0, nbar0 * math.exp(heat_rate * d))
        out.append((float(d), g))
    return out
