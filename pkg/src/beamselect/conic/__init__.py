"""Continuous subproblems: beamforming SOCP, robust SDR and their solvers."""

from .backends import ClarabelBackend, ConicBackend, CvxoptBackend, get_backend
from .program import (
    ConicProgram,
    TightnessCheck,
    build_bf_socp,
    build_rbf_sdr,
    build_restricted,
    build_reweighted_socp,
    build_z_relaxation,
    check_sdr_tightness,
    extract_rank_one,
)
from .solve import INFEASIBLE, NUMERICAL_ERROR, OPTIMAL, ConicSolution, cone_residual, solve

__all__ = [
    "ClarabelBackend",
    "ConicBackend",
    "ConicProgram",
    "ConicSolution",
    "CvxoptBackend",
    "INFEASIBLE",
    "NUMERICAL_ERROR",
    "OPTIMAL",
    "TightnessCheck",
    "build_bf_socp",
    "build_rbf_sdr",
    "build_restricted",
    "build_reweighted_socp",
    "build_z_relaxation",
    "check_sdr_tightness",
    "cone_residual",
    "extract_rank_one",
    "get_backend",
    "solve",
]
