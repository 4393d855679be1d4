import math

import numpy as np
import pytest

from macromech.conditioning import Heterodyne, Homodyne, SystemParams, condition, evolve_joint
from macromech.core import coherent_overlap
from macromech.errors import DegenerateOutcomeError
from macromech.fidelity import state_fidelity
from macromech.trajectories import (
    DEFAULT_DTAU,
    NoiseParams,
    SectorState,
    ThermalInit,
    apply_jump,
    ensemble_condition,
    initial_sector_state,
    jump_probability,
    mean_photon_number,
    no_jump_step,
    reference_trajectory,
    rng_stream,
    run_ensemble,
    run_trajectory,
    sample_thermal,
    simulate_trajectory,
)

BASE = SystemParams(0.8, 2.0, 1.0, math.pi)


def single(n, c=1.0, a=0.0):
    return SectorState([n], [c], [a])


def test_sector_state_validation():
    with pytest.raises(ValueError):
        SectorState([1, 1], [1, 1], [0, 0])
    with pytest.raises(ValueError):
        SectorState([], [], [])


def test_jump_probability_examples():
    assert jump_probability(single(0), 0.1, DEFAULT_DTAU) == 0
    assert jump_probability(single(1), 0.1, DEFAULT_DTAU) == pytest.approx(math.pi * 1e-6)
    st = initial_sector_state(0.8, 2.0, 20)
    assert jump_probability(st, 0.1, DEFAULT_DTAU) == pytest.approx(0.64 * 0.1 * math.pi * 1e-5, rel=1e-12)


def test_jump_probability_warns(caplog):
    jump_probability(single(3), 1.0, 0.05)
    assert "large" in caplog.text


def test_no_jump_identity():
    st = initial_sector_state(0.8, 1 + 1j, 8)
    out = no_jump_step(st, 0.3, 1e-3, 0.0, 0.0)
    assert np.allclose(out.coefficients, st.coefficients)
    assert np.allclose(out.amplitudes, st.amplitudes)


def test_no_jump_first_step():
    out = no_jump_step(single(1), 0.0, 1e-4, 1.0, 0.0)
    assert out.amplitudes[0] == pytest.approx(1e-4j, abs=1e-8)
    assert out.coefficients[0] == pytest.approx(1.0, abs=1e-12)


def test_no_jump_norm_preserved():
    st = initial_sector_state(1.2, 0.5, 15)
    for j in range(50):
        st = no_jump_step(st, j * 0.01, 0.01, 1.0, 0.3)
        assert st.norm == pytest.approx(1.0, abs=1e-12)


def test_unitary_limit_matches_closed_form():
    st = run_trajectory(BASE, NoiseParams(0.0, n_traj=1), n_max=20)
    assert np.allclose(st.amplitudes, 2 * st.photon_numbers - 2, atol=1e-4)
    joint = evolve_joint(BASE, 20, tail_tol=None)
    c = joint.weights / np.linalg.norm(joint.weights)
    assert np.allclose(st.coefficients, c, atol=1e-12)


def test_apply_jump_examples():
    out = apply_jump(single(1, 1.0, 0.7j))
    assert out.photon_numbers.tolist() == [0]
    assert abs(out.coefficients[0]) == pytest.approx(1.0)
    assert out.amplitudes[0] == 0.7j
    two = apply_jump(SectorState([1, 2], [1, 1], [0.1, 0.2]))
    assert two.coefficients[1] / two.coefficients[0] == pytest.approx(math.sqrt(2))
    with pytest.raises(ValueError):
        apply_jump(single(0))


def test_noise_params_validation():
    with pytest.raises(ValueError):
        NoiseParams(-0.1)
    with pytest.raises(ValueError):
        NoiseParams(0.1, dtau=0)
    with pytest.raises(ValueError):
        NoiseParams(0.1, n_traj=0)
    with pytest.raises(ValueError):
        run_trajectory(BASE, NoiseParams(10.0, dtau=1e-3), n_max=20)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_fast_path_matches_step_by_step(seed):
    p = SystemParams(1.5, 0.5 - 0.5j, 0.7, 1.5)
    noise = NoiseParams(kappa=2.0, dtau=1e-4, seed=seed)
    fast, jf = simulate_trajectory(p, noise, rng=rng_stream(seed, 0), n_max=25)
    ref, jr = reference_trajectory(p, noise, rng=rng_stream(seed, 0), n_max=25)
    assert jf == jr
    assert len(jf) > 0
    assert np.array_equal(fast.photon_numbers, ref.photon_numbers)
    assert np.allclose(fast.coefficients, ref.coefficients, atol=1e-10)
    assert np.allclose(fast.amplitudes, ref.amplitudes, atol=1e-10)


def test_determinism_and_thread_independence():
    noise = NoiseParams(0.3, n_traj=12, seed=99)
    a = run_ensemble(BASE, noise)
    b = run_ensemble(BASE, noise, threads=3)
    for x, y in zip(a, b):
        assert np.array_equal(x.coefficients, y.coefficients)
        assert np.array_equal(x.amplitudes, y.amplitudes)


def test_sample_thermal_statistics():
    init = ThermalInit(1 - 0.5j, 1.3)
    rng = rng_stream(4, 0)
    draws = np.array([sample_thermal(init, rng) for _ in range(100_000)])
    se = math.sqrt(init.nbar / draws.size)
    assert abs(draws.mean() - init.beta) < 3 * se
    dev = np.abs(draws - init.beta) ** 2
    assert abs(dev.mean() - init.nbar) < 3 * dev.std() / math.sqrt(draws.size)
    assert sample_thermal(ThermalInit(0.5, 0.0), rng) == 0.5


def test_single_unitary_trajectory_conditions_like_closed_form():
    setting = Heterodyne(0.9 + 0.4j)
    traj = [run_trajectory(BASE, NoiseParams(0.0, n_traj=1), n_max=25)]
    mix = ensemble_condition(traj, setting)
    ref = condition(evolve_joint(BASE, 25), setting)
    assert len(mix) == 1
    assert state_fidelity(mix.components[0], ref) > 1 - 1e-12


def test_ensemble_condition_degenerate():
    traj = [run_trajectory(BASE, NoiseParams(0.0, n_traj=1), n_max=10)]
    with pytest.raises(DegenerateOutcomeError):
        ensemble_condition(traj, Heterodyne(60.0))
    with pytest.raises(ValueError):
        ensemble_condition([], Homodyne(0.0))


def test_photon_decay_law_small_ensemble():
    kappa = 0.2
    trajs = run_ensemble(BASE, NoiseParams(kappa, n_traj=100, seed=8))
    mean, se = mean_photon_number(trajs)
    assert abs(mean - 0.64 * math.exp(-kappa * math.pi)) <= 3 * se + 1e-12


def test_step_size_convergence_of_no_jump_branch():
    kappa = 0.1
    st = initial_sector_state(0.8, 2.0, 15)

    def evolve(dt):
        s = st
        for j in range(int(round(1.0 / dt))):
            s = no_jump_step(s, j * dt, dt, 1.0, kappa)
        return s

    a = evolve(1e-3)
    b = evolve(5e-4)

    def overlap(x, y):
        ov = coherent_overlap(x.amplitudes[:, None], y.amplitudes[None, :])
        same = x.photon_numbers[:, None] == y.photon_numbers[None, :]
        return abs(np.conj(x.coefficients) @ (ov * same) @ y.coefficients) ** 2

    assert overlap(a, b) > 1 - 1e-6
