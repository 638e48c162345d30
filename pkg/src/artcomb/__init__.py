"""Heterogeneous drug-combination effect inference for longitudinal outcomes.

Regimens and regimen histories are compared with subset-tree kernels; a
similarity-weighted seating prior clusters individuals by treatment history;
cluster-level regressions with a reduced kernel-feature design are fit by
Gibbs/Metropolis-Hastings sampling; fitted models drive scenario prediction
through a CLI and an HTTP service.
"""

from .drugs import DrugDictionary, Regimen, parse_regimen
from .features import (
    FeatureBasis,
    PcaBasis,
    RepresentativeSet,
    build_weight_matrix,
    kernel_weight_row,
    pca_fit,
    pca_project,
    select_representatives,
)
from .fit import FitResult, fit_model
from .kernel import (
    KernelConfig,
    history_similarity,
    history_similarity_matrix,
    linear_kernel,
    st_kernel,
)
from .model import (
    Hyperparams,
    NoiseState,
    Partition,
    SimilarityContext,
    combination_effect,
    ddcrp_log_pmf,
    ddcrp_sample,
    log_likelihood,
)
from .predict import FittedModel, Scenario, ScenarioPrediction, predict_scenario
from .sampler import ChainOutput, CombEffectSampler, FitDesign, McmcConfig, run_chain
from .simulate import GroundTruth, SimConfig, generate_dataset, generate_histories
from .trees import RegimenHistory, build_regimen_tree, build_sequence_tree

__version__ = "0.1.0"

__all__ = [
    "ChainOutput", "CombEffectSampler", "DrugDictionary", "FeatureBasis",
    "FitDesign", "FitResult", "FittedModel", "GroundTruth", "Hyperparams",
    "KernelConfig", "McmcConfig", "NoiseState", "Partition", "PcaBasis",
    "Regimen", "RegimenHistory", "RepresentativeSet", "Scenario",
    "ScenarioPrediction", "SimConfig", "SimilarityContext",
    "build_regimen_tree", "build_sequence_tree", "build_weight_matrix",
    "combination_effect", "ddcrp_log_pmf", "ddcrp_sample", "fit_model",
    "generate_dataset", "generate_histories", "history_similarity",
    "history_similarity_matrix", "kernel_weight_row", "linear_kernel",
    "log_likelihood", "parse_regimen", "pca_fit", "pca_project",
    "predict_scenario", "run_chain", "select_representatives", "st_kernel",
]
