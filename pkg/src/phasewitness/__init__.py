"""Discriminate random-phase from fixed-phase two-mode squeezed sources.

Two squeezed wavepackets with crossed polarizations are combined and
post-selected on one photon per port, and the ports are analyzed with rotated
polarizers.  A shared source phase gives perfect coincidences at 45 degrees,
while independent random phases do not.
"""

from .analysis import (
    DiscriminationResult,
    PhaseEstimate,
    PhaseMethod,
    Verdict,
    contamination_ratio,
    discriminate,
    estimate_phase_difference,
    predict_conditional_coincidence,
    predict_good_event_rate,
)
from .engine import (
    QND,
    CorrelationSummary,
    Destructive,
    DetectionEvent,
    EventLog,
    ExperimentConfig,
    GoodClass,
    classify_good,
    run_shot,
    run_sweep,
)
from .fock import (
    FockKet4,
    ModeAssignment,
    PureState,
    SqueezeParams,
    make_squeezed_wavepacket,
    overlap,
    photon_sector_probabilities,
    project_total_photon,
    tensor_product,
)
from .optics import (
    AnalyzerSetting,
    DetectorModel,
    PortOutcome,
    Resolving,
    Topology,
    apply_analyzer,
    exact_outcome_distribution,
    sample_counts,
)
from .sources import CustomPhase, RudolphSanders, TwoSource, VanEnkFuchs, draw_wavepacket_pair

__version__ = "0.1.0"
