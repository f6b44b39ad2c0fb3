"""Multimodal action-quality score regression.

Feature sequences from rgb/flow/audio backbones are embedded into a shared
latent space, refined by temporal/frequency decoupling blocks, fused across
modalities with complementary attention over three progressive stages, and
regressed to a scalar quality score.
"""

from .autodiff import Var, no_grad
from .config import TrainConfig, load_config, parse_config_text
from .dataio import ModalityBundle, align, gen_synth, load_manifest, read_sample, write_sample
from .gradcheck import grad_check, grad_check_detail
from .metrics import fisher_z_avg, mse_original, ranks, spearman
from .model import PidnetModel, fit, mse_loss, train_step
from .params import ForwardCtx, ParamStore
from .rng import RngState

__all__ = [
    "Var", "no_grad", "TrainConfig", "load_config", "parse_config_text",
    "ModalityBundle", "align", "gen_synth", "load_manifest", "read_sample",
    "write_sample", "grad_check", "grad_check_detail", "fisher_z_avg",
    "mse_original", "ranks", "spearman", "PidnetModel", "fit", "mse_loss",
    "train_step", "ForwardCtx", "ParamStore", "RngState",
]

__version__ = "0.1.0"
