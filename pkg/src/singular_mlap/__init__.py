"""Numerical verification toolkit for singular m-Laplacian systems."""

from .mesh import DomainSpec, Mesh, build_graded_mesh, default_grading
from .regime import DecayLaw, ExponentTuple, RegimePrediction, TauRange, classify, validate_structural
from .scalar import NewtonSettings, ScalarProblem, SingularWeight, apply_m_laplacian, solve_scalar
from .system import InvariantBand, SystemSettings, SystemState, solve_system, uniqueness_probe

__all__ = [
    "DomainSpec", "Mesh", "build_graded_mesh", "default_grading",
    "DecayLaw", "ExponentTuple", "RegimePrediction", "TauRange", "classify", "validate_structural",
    "NewtonSettings", "ScalarProblem", "SingularWeight", "apply_m_laplacian", "solve_scalar",
    "InvariantBand", "SystemSettings", "SystemState", "solve_system", "uniqueness_probe",
]
