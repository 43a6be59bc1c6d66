"""Within-layer activation-diversity regularization for small MLPs."""

from ._backend import BACKEND
from .data import Dataset, Split, gen_blobs, gen_two_moons, inject_label_noise, load_csv, load_idx
from .diversity import (
    RegularizerOutput,
    RegularizerSpec,
    Variant,
    activation_penalty,
    decov_loss,
    j_det,
    j_direct,
    j_logdet,
    wld_reg_loss,
)
from .gradcheck import gradcheck
from .harness import ExperimentConfig, RunResult, parse_config, run_experiment, sweep
from .linalg import cholesky, det_psd, inverse_psd, logdet_psd, matmul
from .network import Mlp, OptimizerState, train_epoch
from .similarity import SimilarityMatrix, pairwise_similarity, similarity_backward

__all__ = [
    "BACKEND", "Dataset", "Split", "gen_blobs", "gen_two_moons", "inject_label_noise",
    "load_csv", "load_idx", "RegularizerOutput", "RegularizerSpec", "Variant",
    "activation_penalty", "decov_loss", "j_det", "j_direct", "j_logdet", "wld_reg_loss",
    "gradcheck", "ExperimentConfig", "RunResult", "parse_config", "run_experiment", "sweep",
    "cholesky", "det_psd", "inverse_psd", "logdet_psd", "matmul", "Mlp", "OptimizerState",
    "train_epoch", "SimilarityMatrix", "pairwise_similarity", "similarity_backward",
]
