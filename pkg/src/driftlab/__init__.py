"""Small numpy lab for studying early-training weight drift, activation
sparsity, and activation spikes in MLPs."""

from .activations import TopKConfig, make_activation, topk_apply
from .analysis import PowerLawFit, fit_power_law, r_squared, scale_metrics
from .backend import backend_name
from .errors import (FitError, FormatError, NumericError, StateError,
                     UnsupportedError)
from .harness import (ExperimentConfig, ExperimentResult, RunLog,
                      default_config, emit_metrics, relufy_network,
                      run_experiment)
from .network import (NetworkConfig, Network, backward_trace, build_network,
                      compute_loss, forward_trace)
from .normalization import NormKind, NormLayer, RunningStats, accumulation_stop
from .optim import make_optimizer
from .rng import RngStream
from .theory import build_v_eff, mc_expected_gradient, mc_veff_stats, \
    verification_report

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig", "ExperimentResult", "FitError", "FormatError",
    "Network", "NetworkConfig", "NormKind", "NormLayer", "NumericError",
    "PowerLawFit", "RngStream", "RunLog", "RunningStats", "StateError",
    "TopKConfig", "UnsupportedError", "accumulation_stop", "backend_name",
    "backward_trace", "build_network", "build_v_eff", "compute_loss",
    "default_config", "emit_metrics", "fit_power_law", "forward_trace",
    "make_activation", "make_optimizer", "mc_expected_gradient",
    "mc_veff_stats", "r_squared", "relufy_network", "run_experiment",
    "scale_metrics", "topk_apply", "verification_report", "__version__",
]
