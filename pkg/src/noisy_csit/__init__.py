"""Outage-optimal power control with quantized, error-prone feedback."""

__version__ = "0.1.0"

from .channel import (  # noqa: E402
    ChannelSpec,
    ClosedFormOutage,
    EmpiricalOutage,
    OutageEstimate,
    comp_outage_closed,
    comp_outage_mc,
    inversion_power,
    mutual_information,
    outage_density,
    outage_model,
    sample_channel,
)
from .exceptions import ClosedFormUnavailable, ConfigError, DeepFadeError, DomainError  # noqa: E402
from .mapping import (  # noqa: E402
    BitMapping,
    TransitionMatrix,
    is_quasi_grey,
    quasi_grey_mapping,
    search_quasi_grey,
    transition_matrix,
)
from .objective import (  # noqa: E402
    PowerCodebook,
    QuantizerDesign,
    avg_power_general,
    avg_power_simplified,
    outage_general,
    outage_simplified,
)
from .optimizer import (  # noqa: E402
    DesignProblem,
    DesignResult,
    KktReport,
    OptimizerOptions,
    kkt_check,
    no_csit_baseline,
    optimize_general,
    optimize_levels,
)
from .simulator import SimReport, empirical_transition, quantize, simulate  # noqa: E402
