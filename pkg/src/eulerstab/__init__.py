"""Linear stability of sinusoidal shear flows of the 3D Euler equations on periodic boxes."""
__version__ = "0.1.0"

from .lattice import DomainScaling, WaveVector, ellipsoid_lattice_points, principal_representative
from .linearization import (
    ShearFlowParams,
    ReducedClassParams,
    assemble_class_operator,
    reduce_parameters,
)
from .spectral import FlowVerdict, SpectrumReport, classify_class, flow_verdict, lambda_star
from .parametric import approximability, parametric_witness, plane_lattice_rank

__all__ = [
    "DomainScaling",
    "WaveVector",
    "ellipsoid_lattice_points",
    "principal_representative",
    "ShearFlowParams",
    "ReducedClassParams",
    "assemble_class_operator",
    "reduce_parameters",
    "FlowVerdict",
    "SpectrumReport",
    "classify_class",
    "flow_verdict",
    "lambda_star",
    "approximability",
    "parametric_witness",
    "plane_lattice_rank",
]
