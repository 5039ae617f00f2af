"""Full-duplex MIMO integrated sensing and communication at mmWave.

Channel synthesis for a hybrid partially-connected node, OFDM radar
processing, analog/digital self-interference cancellation, joint
beamformer optimization under power, saturation and sensing-SINR
constraints, a frame simulator, and a closed-form sensing-range budget.
"""

from .array_channel import (ArrayConfig, ChannelMatrix, DirectSiParams, OfdmParams, Target,
                            codebook_angles, dft_codebook, direct_si_channel, downlink_channel,
                            radar_si_channel, steering_vector)
from .beamforming import (HybridBeamformer, achievable_rate, beam_gain_pattern,
                          select_analog_beams, waterfill, waterfilling_precoder)
from .cancellation import (AnalogCanceller, DigitalCanceller, SaturationSpec, apply_cancellation,
                           design_analog_canceller, design_digital_canceller, residual_rf_power)
from .config import load_config, parse_config
from .errors import ConfigError, InfeasibleError
from .isac_optimizer import ConstraintReport, OptimizedConfig, check_constraints, solve_op
from .link_budget import BudgetParams, LinkBudgetDomainError, required_gain, sensing_range
from .radar import (RangeDopplerMap, TargetEstimate, coarse_doa, extract_targets,
                    range_doppler_map, sensing_sinr)
from .scenario import OpConstraints, Scenario, table_scenario
from .signal_model import ChannelSet
from .simulator import FrameResult, aggregate, run_monte_carlo, simulate_frame
from .waveform import ResourceGrid, random_qam_grid

__version__ = "0.1.0"

__all__ = [
    "ArrayConfig", "ChannelMatrix", "DirectSiParams", "OfdmParams", "Target", "codebook_angles",
    "dft_codebook", "direct_si_channel", "downlink_channel", "radar_si_channel", "steering_vector",
    "HybridBeamformer", "achievable_rate", "beam_gain_pattern", "select_analog_beams", "waterfill",
    "waterfilling_precoder", "AnalogCanceller", "DigitalCanceller", "SaturationSpec",
    "apply_cancellation", "design_analog_canceller", "design_digital_canceller",
    "residual_rf_power", "load_config", "parse_config", "ConfigError", "InfeasibleError",
    "ConstraintReport", "OptimizedConfig", "check_constraints", "solve_op", "BudgetParams",
    "LinkBudgetDomainError", "required_gain", "sensing_range", "RangeDopplerMap", "TargetEstimate",
    "coarse_doa", "extract_targets", "range_doppler_map", "sensing_sinr", "OpConstraints",
    "Scenario", "table_scenario", "ChannelSet", "FrameResult", "aggregate", "run_monte_carlo",
    "simulate_frame", "ResourceGrid", "random_qam_grid",
]
