"""Scattering solver for interface Dirac block models with compact perturbations."""

from .model import BlockModel, PerturbationSpec, Theta, build_model, perturbation_library, random_ftr
from .spectral import HermiteBasis, Mode, ModeBasis, enumerate_modes, ladder_coeff

__version__ = "0.1.0"
