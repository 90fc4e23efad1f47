"""Volterra series identification with orthonormal basis functions and TC regularization."""
__version__ = "0.1.0"

from .basis import BasisBank, BasisSpec, evaluate_coefficients, filter_inputs, project_kernel, reconstruct_kernel
from .estimators import METHODS, Dataset, EstimatorConfig, ModelEstimate, estimate, validate
from .poles import PoleSearchConfig, algorithm1, optimal_kautz_params, optimal_laguerre_pole, truncation_cost
from .regularization import (
    Hyperparameters,
    TuningConfig,
    block_penalty,
    kernel_penalty,
    ls_solve,
    marginal_likelihood_cost,
    rels_solve,
    tune_hyperparameters,
)
from .signals import PRESETS, RationalFilter, WienerSystem, nrms, preset, true_wiener_kernels, wiener_simulate
from .volterra import Layout, SymmetricKernel, VolterraModel, build_regressor, enumerate_indices, evaluate_volterra
