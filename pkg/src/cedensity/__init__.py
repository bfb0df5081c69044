"""Numerical machinery for critical orbits, return combinatorics and parameter densities of interval maps."""
from .family import (
    LogisticFamily,
    MapFamily,
    PolyFamily,
    RescaledFamily,
    is_nondegenerate,
    jet,
    load_family,
    make_logistic,
    make_poly_family,
)
from .orbit import (
    OrbitData,
    ce_exponent,
    critical_orbit,
    distortion_sum,
    nv_check,
    recurrence_profile,
    summability_partial,
    transversality_sum,
)
from .returns import (
    EpsGeometry,
    essential_returns,
    essential_scan,
    free_returns,
    q_eps,
    return_depths,
    return_sequence,
)
from .classify import Config, density_sweep, evaluate_row, x_membership, y_membership
from .balls import Ball, BallFamily, deep_set, is_special, lemma_bound_check, random_special_family
from .boxes import ParameterBox, box_family, box_radius, find_precritical, verify_box, xi

__version__ = "0.1.0"
