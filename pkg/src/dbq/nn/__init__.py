"""Desk-scale training stack: numpy layers with hand-written backward
passes, quantized-weight wrappers, synthetic datasets, and the FP /
fine-tune training loops."""

from .layers import (AvgPool2d, BatchNorm, Conv2d, Dense, Flatten, ForwardCtx,
                     Param, QuantizedConv2d, QuantizedDense, ReLU, ReLUX,
                     softmax_cross_entropy)
from .model import (Sequential, build_mlp, build_model, build_toy_cnn,
                    load_checkpoint, save_checkpoint)
from .data import Dataset, gaussian_blobs, load_idx, patch_images, save_idx, spirals
from .training import (TrainConfig, evaluate, finetune_quantized, train_fp,
                       write_metrics_csv)

__all__ = [
    "AvgPool2d", "BatchNorm", "Conv2d", "Dense", "Flatten", "ForwardCtx",
    "Param", "QuantizedConv2d", "QuantizedDense", "ReLU", "ReLUX",
    "softmax_cross_entropy", "Sequential", "build_mlp", "build_model",
    "build_toy_cnn", "load_checkpoint",
    "save_checkpoint", "Dataset", "gaussian_blobs", "load_idx", "patch_images",
    "save_idx", "spirals", "TrainConfig", "evaluate", "finetune_quantized",
    "train_fp", "write_metrics_csv",
]
