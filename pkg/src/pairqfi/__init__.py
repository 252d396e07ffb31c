"""Quantum and classical Fisher-information limits for 3D source-pair centroid and separation estimation."""

from .aperture import (
    AperturePoint,
    Pupil,
    QuadratureSpec,
    ZernikeBasis,
    aperture_average,
    build_clear_circular_pupil,
    build_pupil,
    check_convergence,
    zernike_eval,
)
from .channels import (
    ChannelModel,
    FisherMatrix,
    channel_derivatives,
    channel_probabilities,
    classical_fi,
)
from .montecarlo import (
    CountFrame,
    EstimationReport,
    SimulationConfig,
    draw_centroid,
    ml_estimate,
    run_experiment,
    sample_frame,
)
from .overlap import (
    MatrixElements,
    OverlapResult,
    SceneParams,
    compute_matrix_elements,
    compute_overlap,
    eigen_identities_check,
)
from .qfi import (
    QcrbResult,
    QfiBlocks,
    Sweep,
    assemble_and_invert,
    centroid_qfi,
    compute_h_ll,
    compute_h_sl_residual,
    compute_h_ss,
    qcrb_grid,
)

__version__ = "0.1.0"

__all__ = [
    "AperturePoint",
    "ChannelModel",
    "CountFrame",
    "EstimationReport",
    "FisherMatrix",
    "MatrixElements",
    "OverlapResult",
    "Pupil",
    "QcrbResult",
    "QfiBlocks",
    "QuadratureSpec",
    "SceneParams",
    "SimulationConfig",
    "Sweep",
    "ZernikeBasis",
    "aperture_average",
    "assemble_and_invert",
    "centroid_qfi",
    "build_clear_circular_pupil",
    "build_pupil",
    "channel_derivatives",
    "channel_probabilities",
    "check_convergence",
    "classical_fi",
    "compute_h_ll",
    "compute_h_sl_residual",
    "compute_h_ss",
    "compute_matrix_elements",
    "compute_overlap",
    "draw_centroid",
    "eigen_identities_check",
    "ml_estimate",
    "qcrb_grid",
    "run_experiment",
    "sample_frame",
    "zernike_eval",
]
