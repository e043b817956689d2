"""Regression networks trained on labels plus self-supervised ranked image sets."""
from ._backend import BACKEND
from .active import active_loop, certainty
from .config import ConfigError, ExperimentConfig
from .metrics import all_metrics, lcc, mae_mse, srocc
from .network import Network
from .ranking import RankingConfig, comparability_labels, multitask_loss, ranking_loss_efficient, ranking_loss_naive
from .tensor import Parameters, SgdConfig, load_checkpoint, save_checkpoint, sgd_step

__version__ = "0.1.0"
