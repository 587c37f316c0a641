"""Flat-band skin effect toolkit for non-Hermitian three-band chains."""
__version__ = "0.1.0"

from .errors import (ConfigurationError, DegeneracyAnomalyError, DomainError, FlatSkinError,
                     NumericalError, OnCurveError, ParseError, PreconditionError,
                     SelfOrthogonalityError)
from .model import (ModelSpec, ParamSet, bloch_hamiltonian, builtin_flatband3, load_model_spec,
                    nonbloch_hamiltonian, obc_hamiltonian, pbc_ring_hamiltonian)

__all__ = [
    "ConfigurationError", "DegeneracyAnomalyError", "DomainError", "FlatSkinError", "NumericalError",
    "OnCurveError", "ParseError", "PreconditionError", "SelfOrthogonalityError",
    "ModelSpec", "ParamSet", "bloch_hamiltonian", "builtin_flatband3", "load_model_spec",
    "nonbloch_hamiltonian", "obc_hamiltonian", "pbc_ring_hamiltonian",
]
