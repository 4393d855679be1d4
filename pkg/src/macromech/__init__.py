"""Conditional macroscopic quantum states of a mechanical oscillator.

Coherent-state superpositions, measurement conditioning, the phase-space
macroscopicity measure, quantum-jump dissipation, single-excitation
conditioning of Gaussian states and cat-state fidelities.
"""

from .conditioning import Heterodyne, Homodyne, SystemParams, condition, evolve_joint
from .core import CoherentSuperposition, char_function, cross_integral, displaced_element, wigner
from .fidelity import CatSpec, cat_state, optimize_lambda, state_fidelity
from .macroscopicity import MixtureState, mean_excitations, measure_I, measure_I_mixture

__version__ = "0.1.0"

__all__ = [
    "CatSpec",
    "CoherentSuperposition",
    "Heterodyne",
    "Homodyne",
    "MixtureState",
    "SystemParams",
    "cat_state",
    "char_function",
    "condition",
    "cross_integral",
    "displaced_element",
    "evolve_joint",
    "mean_excitations",
    "measure_I",
    "measure_I_mixture",
    "optimize_lambda",
    "state_fidelity",
    "wigner",
]
