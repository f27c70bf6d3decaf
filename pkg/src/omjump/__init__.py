"""Photon counting statistics of a laser-driven optomechanical cavity.

The package solves the Lindblad master equation of one optical mode coupled to
one mechanical mode, unravels it into photodetection-conditioned quantum-jump
trajectories, and extracts the full counting statistics of the transmitted
beam: g2(tau), p(N, T_S), Fano factors, higher moments, and the multi-photon
cascade regime map.
"""

from omjump.operators import (
    HilbertDims,
    SystemParams,
    HamiltonianKind,
    build_annihilation,
    build_hamiltonian,
    displacement_operator,
)
from omjump.lindblad import (
    DensityMatrix,
    Liouvillian,
    G2Curve,
    assemble_liouvillian,
    propagate,
    steady_state,
    g2_of_tau,
    conditional_photon_number_check,
)
from omjump.trajectory import (
    TrajectoryConfig,
    TrajectoryRecord,
    run_trajectory,
    run_ensemble,
    sample_detection_records,
)
from omjump.counting import (
    CountingStatistics,
    FanoCurve,
    counting_statistics,
    fano_curve,
    fano_from_g2,
    fano_infinity,
    efficiency_correction,
    shot_noise_zero_freq,
)
from omjump.cascade import (
    CascadeQuery,
    RegimeMap,
    rate_0_to_1,
    rate_0_to_n,
    regime_map,
    cascade_sweep,
)

__version__ = "0.1.0"
