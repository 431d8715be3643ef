"""Cell eigenproblem: discretisation, Perron eigenpairs and derived quantities."""

from .cell import CellGrid, CellOperator, assemble_cell_operator, required_points
from .eigen import EigenPair, dense_eigen_oracle, principal_eigenpair
from .hamiltonian import (
    CellMeasure,
    DVResult,
    clear_cache,
    donsker_varadhan,
    dv_functional,
    eigenpair,
    hamiltonian,
    hamiltonian_grad_p,
    lln_velocity,
    potential_average,
    stationary_measure,
)

__all__ = [
    "CellGrid",
    "CellMeasure",
    "CellOperator",
    "DVResult",
    "EigenPair",
    "assemble_cell_operator",
    "clear_cache",
    "dense_eigen_oracle",
    "donsker_varadhan",
    "dv_functional",
    "eigenpair",
    "hamiltonian",
    "hamiltonian_grad_p",
    "lln_velocity",
    "potential_average",
    "principal_eigenpair",
    "required_points",
    "stationary_measure",
]
