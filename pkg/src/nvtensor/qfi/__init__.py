"""Quantum Fisher information of MPDO states with respect to the field splitting."""

from .dynamics import (
    DerivativeConfig,
    QFISeries,
    derivative_mpdo,
    derivative_series,
    moving_average,
    qfi_dynamics,
    single_probe_model,
    single_probe_qfi,
)
from .oracle import qfi_exact_oracle
from .sweep import (
    QFIResult,
    SLDOperator,
    default_chi_l,
    fit_bonds,
    hermitian_basis,
    qfi_local_sweep,
    random_sld,
    sld_bond_caps,
)

__all__ = [
    "DerivativeConfig",
    "QFISeries",
    "derivative_mpdo",
    "derivative_series",
    "moving_average",
    "qfi_dynamics",
    "single_probe_model",
    "single_probe_qfi",
    "QFIResult",
    "SLDOperator",
    "default_chi_l",
    "fit_bonds",
    "hermitian_basis",
    "qfi_exact_oracle",
    "qfi_local_sweep",
    "random_sld",
    "sld_bond_caps",
]
