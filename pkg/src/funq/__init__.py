"""Product functional quantization of Gaussian processes under the sup-norm."""

from .allocation import Allocation, allocate, choose_block_length, integer_allocation, nu_theoretical
from .expansions import Grid, GridPath, ProcessSpec, default_grid, sequence_for
from .gauss1d import ScalarQuantizer, build_quantizer
from .product_quant import DistortionReport, ProductQuantizer, build, mc_distortion

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "DistortionReport",
    "Grid",
    "GridPath",
    "ProcessSpec",
    "ProductQuantizer",
    "ScalarQuantizer",
    "allocate",
    "build",
    "build_quantizer",
    "choose_block_length",
    "default_grid",
    "integer_allocation",
    "mc_distortion",
    "nu_theoretical",
    "sequence_for",
]
