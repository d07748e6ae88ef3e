from .exact import CapacityError, ed_reference_evolve, sparse_liouvillian
from .krylov import KrylovConvergenceError, expm_krylov
from .tdvp import TDVPConfig, tdvp_step
from .trajectory import (
    EDConfig,
    Trajectory,
    engine_config,
    initial_state,
    liouvillian_mpo,
    run_trajectory,
)
from .wii import WIIConfig, WIIPropagator, wii_mpo, wii_step
