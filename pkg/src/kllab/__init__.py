"""Komatu-Loewner chains in standard slit domains: kernels, slit motion, SKLE and the half-plane transform."""

__version__ = "0.1.0"

from . import backend
from .errors import KLError
from .geometry import SlitVector, contains, distance_R, scale, translate, validate
from .kernel import KernelConfig, KernelSolution, bmd_constant, drift_b, eval_psi, solve_kernel
from .oracle import oracle_kernel_fd
from .drivers import DeterministicDriver
from .slit_ode import ODEConfig, Trajectory, comparison_lower_bound, evolve_slits, explosion_report
from .chain import ChainConfig, evolve_map, hcap_estimate, hull_at, trace_tip
from .skle import (BmdConstant, CoefficientSpec, Const, SkleConfig, Zero, mc_explosion, probe_condition_B,
                   sample_path)
from .transform import IotaConfig, evolve_iota, ito_drive_check, loewner_halfplane

__all__ = [
    "__version__", "backend", "KLError",
    "SlitVector", "validate", "distance_R", "translate", "scale", "contains",
    "KernelConfig", "KernelSolution", "solve_kernel", "eval_psi", "drift_b", "bmd_constant", "oracle_kernel_fd",
    "DeterministicDriver", "ODEConfig", "Trajectory", "evolve_slits", "explosion_report", "comparison_lower_bound",
    "ChainConfig", "evolve_map", "hull_at", "trace_tip", "hcap_estimate",
    "Const", "Zero", "BmdConstant", "CoefficientSpec", "SkleConfig", "sample_path", "mc_explosion",
    "probe_condition_B",
    "IotaConfig", "evolve_iota", "loewner_halfplane", "ito_drive_check",
]
