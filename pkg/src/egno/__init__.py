"""Equivariant graph neural operator for charged N-body dynamics.

A self-contained workbench: a softened-Coulomb simulator generates ground
truth, an EGNN backbone stacked with spectral temporal convolutions learns
state-to-trajectory prediction on a float64 autodiff engine, and the harness
trains, evaluates and checkpoints everything reproducibly.
"""
from .fourier import ComplexSpectrum, FeatureMask, FourierKernel
from .geometry import GeometricGraph, RigidTransform, Trajectory
from .harness import Checkpoint, MetricsReport, RunConfig
from .model import EgnoConfig, EgnoParams, TimeGrid
from .nbody import DatasetSplit, SimConfig
from .optim import AdamState
from .tensor import Tensor

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "AdamState",
    "GeometricGraph",
    "RigidTransform",
    "Trajectory",
    "SimConfig",
    "DatasetSplit",
    "ComplexSpectrum",
    "FourierKernel",
    "FeatureMask",
    "TimeGrid",
    "EgnoConfig",
    "EgnoParams",
    "RunConfig",
    "Checkpoint",
    "MetricsReport",
    "__version__",
]
