"""Rate-splitting MU-MIMO downlink simulator.

Core pieces: domain types and power bookkeeping (:mod:`rsmimo.model`),
seeded channel sampling (:mod:`rsmimo.channel`), RBD/MMSE precoding and the
common-stream power search (:mod:`rsmimo.precoding`), receive combining
(:mod:`rsmimo.combining`), instantaneous and ergodic rates
(:mod:`rsmimo.rates`), factored closed-form cross-checks
(:mod:`rsmimo.analysis`), sweep scenarios with CSV output
(:mod:`rsmimo.scenarios`) and the HTTP service plus CLI
(:mod:`rsmimo.service`, :mod:`rsmimo.cli`).
"""

__version__ = "0.1.0"

from .channel import RngSeed, compose_channel, sample_channel, sample_error
from .combining import (
    ReceiveGeometry,
    combiner_weights,
    minmax_combiner,
    mmsec_combiner,
    mrc_combiner,
    receive_geometry,
    sinr_general,
)
from .model import (
    ChannelSet,
    ConfigurationError,
    PowerAllocation,
    PowerBudgetError,
    RateReport,
    StreamLayout,
    SystemConfig,
    build_layout,
    check_power_budget,
    transmit_signal,
)
from .precoding import (
    PrecoderSet,
    build_mmse_precoders,
    build_precoders,
    build_rbd_precoders,
    common_precoder,
    mmse_precoder,
    power_search,
    rbd_first_stage,
    rbd_second_stage,
    uniform_private_gains,
)
from .rates import (
    EsrPoint,
    common_rate,
    ergodic_sum_rate,
    instantaneous_report,
    private_rate,
    sum_rate,
)
from .scenarios import (
    Scenario,
    SweepResult,
    emit_csv,
    parse_scenario_file,
    reference_scenarios,
    run_scenario,
)

__all__ = [
    "ChannelSet",
    "ConfigurationError",
    "EsrPoint",
    "PowerAllocation",
    "PowerBudgetError",
    "PrecoderSet",
    "RateReport",
    "ReceiveGeometry",
    "RngSeed",
    "Scenario",
    "StreamLayout",
    "SweepResult",
    "SystemConfig",
    "build_layout",
    "build_mmse_precoders",
    "build_precoders",
    "build_rbd_precoders",
    "check_power_budget",
    "combiner_weights",
    "common_precoder",
    "common_rate",
    "compose_channel",
    "emit_csv",
    "ergodic_sum_rate",
    "instantaneous_report",
    "minmax_combiner",
    "mmse_precoder",
    "mmsec_combiner",
    "mrc_combiner",
    "parse_scenario_file",
    "power_search",
    "private_rate",
    "rbd_first_stage",
    "rbd_second_stage",
    "receive_geometry",
    "reference_scenarios",
    "run_scenario",
    "sample_channel",
    "sample_error",
    "sinr_general",
    "sum_rate",
    "transmit_signal",
    "uniform_private_gains",
]
