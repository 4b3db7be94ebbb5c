"""MIMO-AFDM baseband simulation and EPA-DR diagonal-reconstruction channel estimation."""

__version__ = "0.1.0"

from .daft import AfdmParams, chirp_diag, daft, daft_matrix, idaft, make_params
from .channel import (
    DelayDopplerProfile,
    MimoChannelRealization,
    Path,
    ProfileSpec,
    effective_band,
    effective_matrix,
    fixed_realization,
    index_indicator,
    propagate,
    sample_channel,
    subchannel_matrix,
)
from .framing import EpaLayout, build_epa_frames, overhead_mimo_afdm, overhead_mimo_otfs
from .chanest import (
    BandedChannelEstimate,
    TransformFactorTable,
    build_factor_table,
    estimate_mimo,
    reconstruct_diagonal,
    transform_factor,
)
from .detect import DetectorConfig, detect_lmmse, detect_ml, detect_mp, make_constellation
from .harness import ExperimentConfig, diversity_slope, nmse, run_ber

__all__ = [name for name in dir() if not name.startswith("_")]
