"""Unitary network models on lattices: quantum walks, BB and CMV matrices, Chalker-Coddington networks.

Submodules
----------
lattice      sparse operators on the periodic torus
models       constructors for the four model families
equivalence  unitary maps between the families, with residual checks
fibered      symbols, band structure, thresholds and M-good arcs
mourre       conjugate operators, commutator positivity, eigenvalue stability
dynamics     evolution, moments and spectral-measure estimates
config, cli  experiment configs and the command-line front end
"""

__version__ = "0.1.0"

from .errors import ConfigurationError, GaugeObstructionError, ValidationError, WrapError
from .lattice import (
    CoinField, LatticeShape, NetworkOperator, StateVector, UnitaryMatrix, apply, build_coin_operator,
    build_shift, check_locality, compose, identity, operator_power,
)
from .models import (
    BbParams, CcParams, QwParams, VerblunskiSeq, build_bb, build_cc_original, build_cc_qw, build_cmv, build_qw,
    coin_from_params, measure_moments, named_coin, one_sided_cmv, verblunski_from_measure,
)
from .equivalence import (
    Verification, bb_square_root_walk, bb_to_qw_square, cyclic_to_cmv, gauge_transform, qw_to_bb, verify_cc,
    verify_qw_bb,
)
from .fibered import (
    ArcSet, BandStructure, Symbol, arc, band_structure, cc_closed_form, essential_spectrum, is_m_good,
    qw1d_c_delta, qw1d_closed_form, symbol_cc, symbol_from_operator, symbol_qw,
)
from .mourre import (
    PerturbationProfile, build_conjugate, eigenvalue_stability, mourre_check, perturbation_field, perturbed_field,
    regularity_integral,
)
from .dynamics import (
    arc_eigen_statistics, autocorrelation, diagonalize, evolve, spectral_measure_estimate, spreading_exponent,
)

__all__ = [name for name in dir() if not name.startswith("_")]
