from .cat0 import (CertificationResult, certify, check_cn, check_convexity, check_cs,
                   check_quadratic_identity, quasi_inner)
from .families import (NonexpansiveFamily, branch_projection_family, nonexpansive_check,
                       projection_family)
from .km import (KMConfig, KMModuli, KMRun, af_membership, boundedness_check,
                 displacement_series, fejer_gate, km_bundle, km_moduli, liminf_check,
                 liminf_simple_check, run_skm, verify_fejer_step)
from .spaces import SpaceInstance, euclidean_ball_space, star_tree_space

__all__ = [
    "CertificationResult", "KMConfig", "KMModuli", "KMRun", "NonexpansiveFamily",
    "SpaceInstance", "af_membership", "boundedness_check", "branch_projection_family",
    "certify", "check_cn", "check_convexity", "check_cs", "check_quadratic_identity",
    "displacement_series", "euclidean_ball_space", "fejer_gate", "km_bundle", "km_moduli",
    "liminf_check", "liminf_simple_check", "nonexpansive_check", "projection_family",
    "quasi_inner", "run_skm", "star_tree_space", "verify_fejer_step",
]
