"""Quantum-jump unraveling of cavity decay for the sector-structured state.

Under cavity loss the state keeps the form ``sum_n c_n |n>_c |xi_n>_m``:
the Hamiltonian only displaces the mirror by an amount proportional to the
photon number, the non-Hermitian part only rescales sectors, and a jump
``sqrt(kappa) a`` moves sector ``n`` to ``n - 1``. No Fock basis is ever
needed for the mirror.

Internally amplitudes ``xi`` live in the frame rotating at the mechanical
frequency, where the sector-``n`` generator is
``-k n (b e^{-i tau} + b^dag e^{i tau})``. Over ``[t0, t1]`` it acts as

    e^{i k^2 n^2 (t1 - t0 - sin(t1 - t0))} D(k n (e^{i t1} - e^{i t0})),

which composes exactly, so a no-jump step is exact rather than first order.
Lab-frame amplitudes are ``xi e^{-i tau}`` and the field rotation
``e^{-i r tau n}`` is applied on output. With no loss this reproduces the
closed-form joint state (amplitudes and phases) to rounding.

Jumps follow the standard first-order rule: at every step draw
``eps ~ U[0, 1)`` and jump iff ``eps <= dp = kappa dtau <a^dag a>``. A jump
is applied at the start of its step and the step's evolution still follows,
so jumps never stall the Hamiltonian clock.
Between jumps sector populations only decay as ``e^{-kappa n t}``, so the
fast path evaluates ``dp`` for a whole block of steps at once and applies
the no-jump evolution in a single exact segment; the jump record is the
same as stepping one by one.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import math

import numpy as np
from scipy.special import gammainc, gammaln

from .conditioning import MeasurementSetting, SystemParams, measurement_amplitude
from .core import CoherentSuperposition
from .errors import DegenerateOutcomeError
from .macroscopicity import MixtureState

__all__ = [
    "SectorState",
    "NoiseParams",
    "ThermalInit",
    "DEFAULT_DTAU",
    "initial_sector_state",
    "jump_probability",
    "no_jump_step",
    "apply_jump",
    "run_trajectory",
    "simulate_trajectory",
    "reference_trajectory",
    "run_ensemble",
    "sample_thermal",
    "rng_stream",
    "ensemble_condition",
    "mean_photon_number",
    "to_lab_frame",
]

log = logging.getLogger(__name__)

DEFAULT_DTAU = math.pi * 1e-5
_BLOCK = 8192


@dataclass(frozen=True, eq=False)
class SectorState:
    """Field-mirror state as sectors ``(n, coefficient, mirror amplitude)``."""

    photon_numbers: np.ndarray
    coefficients: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        n = np.array(self.photon_numbers, dtype=int).reshape(-1)
        c = np.array(self.coefficients, dtype=complex).reshape(-1)
        a = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if not (n.shape == c.shape == a.shape) or n.size == 0:
            raise ValueError("sector arrays must be non-empty and of equal length")
        if np.any(np.diff(n) <= 0) or n[0] < 0:
            raise ValueError("photon numbers must be strictly increasing and >= 0")
        for arr in (n, c, a):
            arr.setflags(write=False)
        object.__setattr__(self, "photon_numbers", n)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "amplitudes", a)

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.coefficients) ** 2))

    def normalize(self) -> SectorState:
        return SectorState(self.photon_numbers, self.coefficients / math.sqrt(self.norm), self.amplitudes)

    def mean_photon_number(self) -> float:
        pop = np.abs(self.coefficients) ** 2
        return float(np.sum(self.photon_numbers * pop) / pop.sum())

    def sectors(self) -> list[tuple[int, complex, complex]]:
        return list(zip(self.photon_numbers.tolist(), self.coefficients.tolist(), self.amplitudes.tolist()))


@dataclass(frozen=True)
class NoiseParams:
    """Cavity loss rate and unraveling controls (rates in units of omega_m)."""

    kappa: float
    dtau: float = DEFAULT_DTAU
    n_traj: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.kappa < 0 or not math.isfinite(self.kappa):
            raise ValueError("kappa must be finite and >= 0")
        if not self.dtau > 0:
            raise ValueError("dtau must be > 0")
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class ThermalInit:
    """Displaced thermal mirror state, sampled through its P function."""

    beta: complex
    nbar: float

    def __post_init__(self):
        if self.nbar < 0:
            raise ValueError("nbar must be >= 0")


def rng_stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for trajectory ``index``: Philox keyed by (seed, index)."""
    key = np.array([seed % 2 ** 64, index % 2 ** 64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_thermal(init: ThermalInit, rng: np.random.Generator) -> complex:
    """Draw a coherent amplitude from the P function of a displaced thermal state."""
    if init.nbar == 0:
        return complex(init.beta)
    s = math.sqrt(init.nbar / 2)
    re, im = rng.normal(0.0, s, size=2)
    return complex(init.beta) + complex(re, im)


def default_n_max(alpha: complex, tol: float = 1e-16) -> int:
    lam = abs(alpha) ** 2
    n = 1
    while gammainc(n + 1, lam) > tol:
        n += 1
    return n


def initial_sector_state(alpha: complex, beta: complex, n_max: int) -> SectorState:
    """Truncated ``|alpha>_c |beta>_m``, renormalized."""
    n = np.arange(n_max + 1)
    if alpha == 0:
        c = (n == 0).astype(complex)
    else:
        c = np.exp(n * np.log(complex(alpha)) - 0.5 * gammaln(n + 1.0) - abs(alpha) ** 2 / 2)
    return SectorState(n, c, np.full(n.size, complex(beta))).normalize()


def jump_probability(state: SectorState, kappa: float, dtau: float) -> float:
    """``kappa dtau <a^dag a>`` for the normalized state."""
    dp = kappa * dtau * state.mean_photon_number()
    if dp > 0.1:
        log.warning("jump probability %.3g per step is large; reduce dtau", dp)
    return dp


def _segment_factors(n, xi, kappa, k, t0, t1):
    """Exact no-jump propagation of sectors over ``[t0, t1]`` (rotating frame)."""
    zeta = k * n * (np.exp(1j * t1) - np.exp(1j * t0))
    span = t1 - t0
    phase = (k * n) ** 2 * (span - math.sin(span)) + np.imag(zeta * np.conj(xi))
    factor = np.exp(1j * phase - 0.5 * kappa * n * span)
    return xi + zeta, factor


def no_jump_step(state: SectorState, tau: float, dtau: float, k: float, kappa: float) -> SectorState:
    """Evolve a rotating-frame state from ``tau`` to ``tau + dtau`` without a jump.

    Sector ``n`` is displaced by ``k n (e^{i(tau+dtau)} - e^{i tau})``
    (= ``i k n dtau e^{i tau}`` to first order), picks up the composition
    phase and is damped by ``e^{-kappa n dtau / 2}``; the result is
    renormalized.
    """
    n = state.photon_numbers
    xi, factor = _segment_factors(n, state.amplitudes, kappa, k, tau, tau + dtau)
    return SectorState(n, state.coefficients * factor, xi).normalize()


def apply_jump(state: SectorState) -> SectorState:
    """Apply ``a`` (up to ``sqrt(kappa)``): sector ``n`` becomes ``n - 1``."""
    n = state.photon_numbers
    keep = n >= 1
    if not np.any(keep & (state.coefficients != 0)):
        raise ValueError("jump on a field-vacuum state has zero probability")
    c = np.sqrt(n[keep]) * state.coefficients[keep]
    return SectorState(n[keep] - 1, c, state.amplitudes[keep]).normalize()


def to_lab_frame(state: SectorState, tau: float, r: float = 0.0) -> SectorState:
    """Rotate mirror amplitudes by ``e^{-i tau}`` and apply the field phase."""
    n = state.photon_numbers
    return SectorState(n, state.coefficients * np.exp(-1j * r * tau * n), state.amplitudes * np.exp(-1j * tau))


def _n_steps(tau: float, dtau: float) -> int:
    return int(round(tau / dtau))


def _check_step(kappa: float, dtau: float, n_max: int):
    if kappa * dtau * n_max >= 0.01:
        raise ValueError(f"kappa*dtau*n_max = {kappa * dtau * n_max:.3g} must stay below 0.01")


def _start(params, noise, init, rng, n_max):
    beta = sample_thermal(init, rng) if isinstance(init, ThermalInit) else params.beta
    if n_max is None:
        n_max = default_n_max(params.alpha)
    _check_step(noise.kappa, noise.dtau, n_max)
    return initial_sector_state(params.alpha, beta, n_max)


def reference_trajectory(params: SystemParams, noise: NoiseParams, init: ThermalInit | None = None,
                         rng: np.random.Generator | None = None, n_max: int | None = None,
                         n_steps: int | None = None) -> tuple[SectorState, list[int]]:
    """Step-by-step trajectory using :func:`no_jump_step` and :func:`apply_jump`.

    Slow; kept as the literal form of the algorithm to check the fast path.
    Returns the rotating-frame state after ``n_steps`` steps and the jump steps.
    """
    rng = rng if rng is not None else rng_stream(noise.seed, 0)
    state = _start(params, noise, init, rng, n_max)
    total = _n_steps(params.tau, noise.dtau) if n_steps is None else n_steps
    eps = rng.random(total)
    jumps = []
    for j in range(total):
        dp = jump_probability(state, noise.kappa, noise.dtau)
        if dp > 0 and eps[j] <= dp:
            state = apply_jump(state)
            jumps.append(j)
        state = no_jump_step(state, j * noise.dtau, noise.dtau, params.k, noise.kappa)
    return state, jumps


def simulate_trajectory(params: SystemParams, noise: NoiseParams, init: ThermalInit | None = None,
                        rng: np.random.Generator | None = None, n_max: int | None = None,
                        n_steps: int | None = None) -> tuple[SectorState, list[int]]:
    """Fast equivalent of :func:`reference_trajectory` (same draws, same rule).

    Returns the rotating-frame state after ``n_steps`` steps and the list of
    steps at which jumps occurred.
    """
    rng = rng if rng is not None else rng_stream(noise.seed, 0)
    state = _start(params, noise, init, rng, n_max)
    total = _n_steps(params.tau, noise.dtau) if n_steps is None else n_steps
    eps = rng.random(total)
    kappa, dt, k = noise.kappa, noise.dtau, params.k

    n = state.photon_numbers.astype(float)
    c = state.coefficients.copy()
    xi = state.amplitudes.copy()
    jumps: list[int] = []
    j0 = 0  # first step of the current no-jump segment
    while j0 < total and kappa > 0:
        pop0 = np.abs(c) ** 2
        pop0 /= pop0.sum()
        if not np.any(pop0[n > 0] > 0):
            break
        found = None
        j = j0
        while j < total:
            m = np.arange(j - j0, min(j - j0 + _BLOCK, total - j0))
            decay = np.exp(-kappa * dt * np.outer(m, n))
            pops = decay * pop0
            dp = kappa * dt * (pops @ n) / pops.sum(axis=1)
            hit = np.nonzero(eps[j0 + m] <= dp)[0]
            if hit.size:
                found = j0 + int(m[hit[0]])
                break
            j = j0 + int(m[-1]) + 1
        if found is None:
            break
        # steps j0 .. found-1 without a jump, then the jump at the start of step `found`
        xi, factor = _segment_factors(n, xi, kappa, k, j0 * dt, found * dt)
        c = c * factor
        c /= math.sqrt(np.sum(np.abs(c) ** 2))
        st = apply_jump(SectorState(n.astype(int), c, xi))
        n = st.photon_numbers.astype(float)
        xi, factor = _segment_factors(n, st.amplitudes, kappa, k, found * dt, (found + 1) * dt)
        c = st.coefficients * factor
        c /= math.sqrt(np.sum(np.abs(c) ** 2))
        jumps.append(found)
        j0 = found + 1
    if j0 < total:
        xi, factor = _segment_factors(n, xi, kappa, k, j0 * dt, total * dt)
        c = c * factor
    return SectorState(n.astype(int), c, xi).normalize(), jumps


def run_trajectory(params: SystemParams, noise: NoiseParams, init: ThermalInit | None = None,
                   rng: np.random.Generator | None = None, n_max: int | None = None) -> SectorState:
    """One trajectory from ``tau = 0`` to ``params.tau``; lab-frame output.

    ``init`` selects a displaced thermal mirror (sampled per trajectory);
    ``None`` means the coherent state ``|params.beta>``.
    """
    state, _ = simulate_trajectory(params, noise, init, rng, n_max)
    total = _n_steps(params.tau, noise.dtau)
    return to_lab_frame(state, total * noise.dtau, params.r)


def run_ensemble(params: SystemParams, noise: NoiseParams, init: ThermalInit | None = None,
                 n_max: int | None = None, threads: int = 1) -> list[SectorState]:
    """``noise.n_traj`` independent trajectories, ordered by trajectory index.

    Trajectory ``i`` draws from :func:`rng_stream` ``(noise.seed, i)``, so the
    output does not depend on ``threads``.
    """
    def one(i):
        return run_trajectory(params, noise, init, rng_stream(noise.seed, i), n_max)

    if threads <= 1:
        return [one(i) for i in range(noise.n_traj)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(noise.n_traj)))


def mean_photon_number(trajectories) -> tuple[float, float]:
    """Ensemble mean of ``<a^dag a>`` and its standard error."""
    vals = np.array([t.mean_photon_number() for t in trajectories])
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return float(vals.mean()), se


def ensemble_condition(trajectories, setting: MeasurementSetting, prune: float = 1e-14) -> MixtureState:
    """Condition every trajectory on the same field outcome and mix them.

    Each trajectory contributes its normalized conditional mirror state with
    weight proportional to its own outcome probability. Terms with relative
    weight below ``prune`` are dropped.

    Raises:
        DegenerateOutcomeError: if every trajectory assigns the outcome zero probability.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("empty trajectory list")
    comps = []
    weights = []
    for t in trajectories:
        d = t.coefficients * measurement_amplitude(setting, t.photon_numbers)
        if np.max(np.abs(d)) < 1e-300:
            continue
        st = CoherentSuperposition(d, t.amplitudes).merged()
        prob = st.norm_squared
        if prob <= 0:
            continue
        comps.append(st.normalize().pruned(prune))
        weights.append(prob)
    if not comps:
        raise DegenerateOutcomeError(f"outcome {setting} impossible for every trajectory")
    return MixtureState.from_weights(weights, comps)
