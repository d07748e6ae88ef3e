from .linalg import (
    DEFAULT_FLOOR,
    NumericalError,
    TruncationLog,
    TruncationReport,
    svd_split,
    truncated_svd,
)
from .mpo import MPO, apply_mpo, compress_mpo, fsm_mpo, mpo_from_terms
from .mps import (
    MPDO,
    MPS,
    add,
    bond_spectrum,
    canonicalize,
    compress,
    entanglement_entropy,
    move_center,
    mpdo_expectation,
    mpdo_trace,
    normalize_trace,
    operator_entanglement_entropy,
    product_mpdo,
    product_mps,
    pure_mpdo,
    random_mps,
    site_averaged,
)
