"""Null controllability of the Stokes system by transmutation of wave controls."""

from .domain import DomainSpec, ControlMask, build_domain, control_mask, full_mask
from .errors import AdmissibilityError, ControlTimeError, ConvergenceError, GridError
from .stokesop import StokesModes, eig_modes, leray_project

__all__ = [
    "DomainSpec", "ControlMask", "build_domain", "control_mask", "full_mask",
    "AdmissibilityError", "ControlTimeError", "ConvergenceError", "GridError",
    "StokesModes", "eig_modes", "leray_project",
]
