"""Joint cavity-mirror evolution and general-dyne conditioning of the mirror.

Starting from ``|alpha>_c |beta>_m`` the optomechanical unitary produces

    |psi(tau)> = e^{-|alpha|^2/2} sum_n c_n |n>_c |phi_n>_m,
    phi_n = k eta n + beta e^{-i tau},   eta = 1 - e^{-i tau},

so each photon-number sector carries one mechanical coherent state. A
projective measurement of the field with outcome amplitudes ``f(n)`` leaves
the mirror in ``sum_n c_n f(n) |phi_n>`` (up to normalization).
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import gammainc, gammaln

from .core import CoherentSuperposition
from .errors import CutoffError, DegenerateOutcomeError, TruncationError

__all__ = [
    "SystemParams",
    "JointState",
    "Homodyne",
    "Heterodyne",
    "MeasurementSetting",
    "evolve_joint",
    "measurement_amplitude",
    "condition",
    "outcome_density",
    "choose_cutoff",
]

HARD_CAP = 200


@dataclass(frozen=True)
class SystemParams:
    """Dimensionless optomechanical parameters.

    Attributes:
        alpha: initial cavity coherent amplitude.
        beta: initial mirror coherent amplitude.
        k: coupling ``g / omega_m``.
        tau: evolution time ``omega_m t``.
        r: frequency ratio ``omega_o / omega_m``. Only enters as a field
            phase ``e^{-i r tau n}``, equivalent to shifting the homodyne
            angle, so it defaults to 0.
    """

    alpha: complex
    beta: complex
    k: float
    tau: float
    r: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "k", "tau", "r"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "beta", complex(self.beta))
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "r", float(self.r))

    @property
    def eta(self) -> complex:
        return 1 - np.exp(-1j * self.tau)

    @property
    def varphi(self) -> complex:
        """Phase exponent accompanying ``alpha`` in ``c_n`` (purely imaginary)."""
        e = self.eta
        t = self.tau
        b = self.beta
        return self.k * (e * b.conjugate() * np.exp(1j * t) - e.conjugate() * b * np.exp(-1j * t)) / 2

    def amplitude(self, n):
        """Mechanical amplitude attached to photon number ``n``."""
        return self.k * self.eta * np.asarray(n) + self.beta * np.exp(-1j * self.tau)


@dataclass(frozen=True, eq=False)
class JointState:
    """Truncated field-mirror state: sectors ``n = 0..n_max``.

    ``coefficients`` are the ``c_n`` without the ``e^{-|alpha|^2/2}``
    prefactor, which is exposed separately.
    """

    params: SystemParams
    photon_numbers: np.ndarray
    coefficients: np.ndarray
    amplitudes: np.ndarray

    @property
    def prefactor(self) -> float:
        return math.exp(-abs(self.params.alpha) ** 2 / 2)

    @property
    def n_max(self) -> int:
        return int(self.photon_numbers[-1])

    @property
    def weights(self) -> np.ndarray:
        return self.prefactor * self.coefficients

    def sector(self, n: int) -> tuple[complex, complex]:
        return complex(self.coefficients[n]), complex(self.amplitudes[n])

    @property
    def tail_probability(self) -> float:
        """Probability carried by photon numbers above ``n_max``."""
        return float(gammainc(self.n_max + 1, abs(self.params.alpha) ** 2))


def _log_coefficients(params: SystemParams, n: np.ndarray) -> np.ndarray:
    t = params.tau
    phase = params.k ** 2 * n.astype(float) ** 2 * (t - math.sin(t)) - params.r * t * n
    log_c = np.full(n.shape, -np.inf + 0j)
    if params.alpha == 0:
        log_c[n == 0] = 0.0
    else:
        la = np.log(params.alpha) + params.varphi
        log_c = n * la - 0.5 * gammaln(n + 1.0) + 0j
    return log_c + 1j * phase


def evolve_joint(params: SystemParams, n_max: int, tail_tol: float | None = 1e-10) -> JointState:
    """Sectors ``n = 0..n_max`` of the evolved joint state.

    Args:
        params: system parameters.
        n_max: highest photon number kept (>= 1).
        tail_tol: maximum discarded Poisson weight; ``None`` disables the check.

    Raises:
        TruncationError: when the discarded weight exceeds ``tail_tol``.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    n = np.arange(n_max + 1)
    log_c = _log_coefficients(params, n)
    coeffs = np.exp(log_c)
    state = JointState(params, n, coeffs, params.amplitude(n))
    if tail_tol is not None and state.tail_probability > tail_tol:
        lam = abs(params.alpha) ** 2
        m = n_max
        while gammainc(m + 1, lam) > tail_tol and m < 10 * HARD_CAP:
            m += 1
        raise TruncationError(
            f"n_max={n_max} discards weight {state.tail_probability:.3e} > {tail_tol:.1e}", m
        )
    return state


@dataclass(frozen=True)
class Homodyne:
    """Projection on the quadrature eigenstate ``|x(theta)>``."""

    x: float
    theta: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.theta)):
            raise ValueError("homodyne setting must be finite")


@dataclass(frozen=True)
class Heterodyne:
    """Projection on the coherent state ``|sigma>``."""

    sigma: complex

    def __post_init__(self):
        if not np.isfinite(self.sigma):
            raise ValueError("heterodyne outcome must be finite")
        object.__setattr__(self, "sigma", complex(self.sigma))


MeasurementSetting = Homodyne | Heterodyne


def _hermite_functions(n_max: int, x: float) -> np.ndarray:
    """``H_n(x) e^{-x^2/2} / (sqrt(2^n n!) pi^{1/4})`` for n = 0..n_max,
    by the normalized recurrence (no factorial overflow)."""
    h = np.empty(n_max + 1)
    h[0] = math.exp(-x * x / 2) / math.pi ** 0.25
    if n_max >= 1:
        h[1] = math.sqrt(2.0) * x * h[0]
    for m in range(1, n_max):
        h[m + 1] = math.sqrt(2.0 / (m + 1)) * x * h[m] - math.sqrt(m / (m + 1)) * h[m - 1]
    return h


def measurement_amplitude(setting: MeasurementSetting, n):
    """Overlap ``<outcome|n>`` of the measurement eigenstate with Fock state ``n``.

    Accepts a scalar or an array of photon numbers.
    """
    n_arr = np.asarray(n, dtype=int)
    if np.any(n_arr < 0):
        raise ValueError("photon numbers must be non-negative")
    top = int(n_arr.max()) if n_arr.size else 0
    if isinstance(setting, Homodyne):
        m = np.arange(top + 1)
        table = _hermite_functions(top, float(setting.x)) * np.exp(-1j * setting.theta * m)
    elif isinstance(setting, Heterodyne):
        m = np.arange(top + 1)
        s = setting.sigma
        table = np.zeros(top + 1, dtype=complex)
        if s == 0:
            table[0] = 1.0
        else:
            table = np.exp(m * np.log(s.conjugate()) - 0.5 * gammaln(m + 1.0) - abs(s) ** 2 / 2)
    else:
        raise TypeError(f"unknown measurement setting {setting!r}")
    out = table[n_arr]
    return out if out.ndim else complex(out)


def _conditional_vector(joint: JointState, setting: MeasurementSetting) -> CoherentSuperposition:
    d = joint.weights * measurement_amplitude(setting, joint.photon_numbers)
    if np.max(np.abs(d)) < 1e-300:
        raise DegenerateOutcomeError(f"outcome {setting} has zero probability")
    return CoherentSuperposition(d, joint.amplitudes)


def outcome_density(joint: JointState, setting: MeasurementSetting) -> float:
    """Unnormalized norm of the conditional mirror state.

    For homodyne this is the probability density of ``x`` at fixed angle;
    for heterodyne it is the density with respect to ``d^2 sigma / pi``.
    """
    d = joint.weights * measurement_amplitude(setting, joint.photon_numbers)
    return CoherentSuperposition(d, joint.amplitudes).norm_squared


def condition(joint: JointState, setting: MeasurementSetting) -> CoherentSuperposition:
    """Normalized conditional mirror state for a measurement outcome.

    Raises:
        DegenerateOutcomeError: if every conditional weight underflows.
    """
    return _conditional_vector(joint, setting).merged().normalize()


def choose_cutoff(params: SystemParams, setting: MeasurementSetting, tol: float = 1e-10,
                  hard_cap: int = HARD_CAP) -> int:
    """Smallest ``n_max >= 1`` whose discarded conditional weight is below ``tol``.

    Uses the diagonal weights ``|c_n f(n)|^2``, normalized by their sum up to
    ``hard_cap``.

    Raises:
        CutoffError: if no cutoff up to ``hard_cap`` qualifies.
    """
    if not 0 < tol <= 1:
        raise ValueError("tol must be in (0, 1]")
    n = np.arange(hard_cap + 1)
    log_c = _log_coefficients(params, n).real
    f = np.abs(measurement_amplitude(setting, n))
    with np.errstate(divide="ignore"):
        log_s = 2 * log_c + 2 * np.log(f)
    s = np.exp(log_s - np.max(log_s))
    # tail[m] = weight of sectors above m
    tail = np.concatenate([np.cumsum(s[::-1])[::-1][1:], [0.0]]) / s.sum()
    ok = np.nonzero(tail < tol)[0]
    ok = ok[ok >= 1]
    if ok.size == 0 or ok[0] >= hard_cap:
        raise CutoffError(f"no cutoff <= {hard_cap} reaches tolerance {tol:g}")
    return int(ok[0])
