"""Wiener chaos expansions for linear equations driven by Gaussian fields."""
from . import errors
from ._backend import BACKEND
from .gaussian_field import (
    FBm,
    FieldModel,
    KernelSpec,
    OUStable,
    OUUnstable,
    Rho,
    TimeGrid,
    Wiener,
    kernel_from_dict,
)
from .hermite_chaos import ChaosVector, wick_exp, wick_product
from .multiindex import IndexSet, MultiIndex, TruncationSpec

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ChaosVector",
    "FBm",
    "FieldModel",
    "IndexSet",
    "KernelSpec",
    "MultiIndex",
    "OUStable",
    "OUUnstable",
    "Rho",
    "TimeGrid",
    "TruncationSpec",
    "Wiener",
    "errors",
    "kernel_from_dict",
    "wick_exp",
    "wick_product",
]
