"""Ternary branch quantization toolkit.

Core surface: the smooth temperature-controlled quantizer and its exact
inference counterpart (quantizer), closed-form gradients (grads), one-shot
initialization (fit), LR/temperature schedules (schedules), fixed-point
activation clipping (actquant), the full-adder cost model (costmodel),
packed ternary serialization (packing), and the desk-scale training stack
(nn). The hot kernels run on a compiled extension when available; see
dbq.backend.
"""

import os as _os

# cap BLAS/OpenMP worker pools before numpy spins them up; default 1 for
# bit-reproducible runs, override with DBQ_THREADS
_dbq_threads = _os.environ.get("DBQ_THREADS", "1")
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, _dbq_threads)

from .backend import backend_name
from .quantizer import (QuantizerParams, TernaryBranches, branch_coefficients,
                        branch_sparsity, decompose, forward_infer, forward_train,
                        project_alphas, quant_levels, reconstruct, sign_matrix,
                        smooth_step, step_coefficients, thresholds_sorted)
from .grads import QuantizerGrads, backward, finite_diff_check
from .fit import KMeansResult, fit_alphas, init_quantizer, init_scales, \
    init_thresholds, kmeans_1d
from .schedules import TrainSchedule, cosine_lr, sgd_step, temperature_at, warmup_lr
from .actquant import BnChannelParams, clip_value, relu_x_grad, relu_x_quant
from .costmodel import (ArchError, ArchSpec, CostReport, LayerSpec, Precision,
                        PrecisionAssignment, comp_cost, cost_report,
                        densities_from_sparsity, effective_precisions, load_arch,
                        load_assignment, repr_cost, sparse_comp_cost,
                        sparsity_table, storage_cost)
from .packing import (BadMagicError, InvalidCodeError, PackError, TruncatedError,
                      UnsupportedVersionError, blob_size, pack, pack_container,
                      unpack, unpack_container)

__version__ = "0.1.0"

__all__ = [
    "backend_name", "QuantizerParams", "TernaryBranches", "branch_coefficients",
    "branch_sparsity", "decompose", "forward_infer", "forward_train",
    "project_alphas", "quant_levels", "reconstruct", "sign_matrix", "smooth_step",
    "step_coefficients", "thresholds_sorted", "QuantizerGrads", "backward",
    "finite_diff_check", "KMeansResult", "fit_alphas", "init_quantizer",
    "init_scales", "init_thresholds", "kmeans_1d", "TrainSchedule", "cosine_lr",
    "sgd_step", "temperature_at", "warmup_lr", "BnChannelParams", "clip_value",
    "relu_x_grad", "relu_x_quant", "ArchError", "ArchSpec", "CostReport",
    "LayerSpec", "Precision", "PrecisionAssignment", "comp_cost", "cost_report",
    "densities_from_sparsity", "effective_precisions", "load_arch",
    "load_assignment", "repr_cost",
    "sparse_comp_cost", "sparsity_table", "storage_cost", "BadMagicError",
    "InvalidCodeError", "PackError", "TruncatedError", "UnsupportedVersionError",
    "blob_size", "pack", "pack_container", "unpack", "unpack_container",
    "__version__",
]
