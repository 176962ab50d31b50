"""Geometric synthesis of back-action-evading quantum feedback controllers."""

from .h2 import OptResult, h2_norm, h2_norm_quadrature, hinf_norm, optimize
from .quantum import (
    QuadratureSystem,
    build_system,
    check_physical_realizability,
    is_passive,
    is_passive_direct,
    to_annihilation,
)
from .spectra import (
    NoiseSpec,
    StateSpaceTF,
    eval_tf,
    noise_psd,
    sensing_transfers,
    sql,
    thermal_ratio,
    verify_bae,
)
from .subspace import Subspace, find_friend_F, find_friend_G, vstar, vsub
from .synthesis import (
    PlantSpec,
    apply_realizability_constraints,
    assemble_coherent_loop,
    assemble_direct_loop,
    build_optomech_plant,
    cavity_controller,
    check_solvability,
    controller_matrices,
    synthesize_family,
)

__version__ = "0.1.0"

__all__ = [
    "apply_realizability_constraints",
    "assemble_coherent_loop",
    "assemble_direct_loop",
    "build_optomech_plant",
    "build_system",
    "cavity_controller",
    "check_physical_realizability",
    "check_solvability",
    "controller_matrices",
    "eval_tf",
    "find_friend_F",
    "find_friend_G",
    "h2_norm",
    "h2_norm_quadrature",
    "hinf_norm",
    "is_passive",
    "is_passive_direct",
    "noise_psd",
    "NoiseSpec",
    "optimize",
    "OptResult",
    "PlantSpec",
    "QuadratureSystem",
    "sensing_transfers",
    "sql",
    "StateSpaceTF",
    "Subspace",
    "synthesize_family",
    "thermal_ratio",
    "to_annihilation",
    "verify_bae",
    "vstar",
    "vsub",
]
