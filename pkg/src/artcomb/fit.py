"""End-to-end model fitting: features, similarities, chain, bundle output."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LongitudinalDataset
from .drugs import DrugDictionary
from .features import (
    DEFAULT_VARIANCE_THRESHOLD,
    FeatureBasis,
    build_weight_matrix,
    pca_fit,
    select_representatives,
)
from .kernel import KernelConfig, history_similarity_matrix
from .model import Hyperparams
from .sampler import ChainOutput, FitDesign, McmcConfig, run_chain
from .trees import RegimenHistory


@dataclass
class FitResult:
    chain: ChainOutput
    basis: FeatureBasis
    design: FitDesign
    histories: list[RegimenHistory]
    dictionary: DrugDictionary


def build_design(
    dataset: LongitudinalDataset,
    dictionary: DrugDictionary,
    cfg: McmcConfig,
    rep_threshold: int = 10,
    variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD,
    histories: list[RegimenHistory] | None = None,
    centering: bool = True,
) -> tuple[FitDesign, FeatureBasis, list[RegimenHistory]]:
    """Assemble the reduced feature matrix and history similarities for a fit.

    The two baseline modes swap the regimen kernel for the shared-drug linear
    kernel; the Dirichlet-process baseline additionally flattens the history
    similarities to a constant.
    """
    kcfg = KernelConfig(eta=cfg.eta, match_mode=cfg.match_mode)
    kernel_kind = "subtree" if cfg.baseline_mode == "ddcrp_st" else "linear"
    if histories is None:
        histories = dataset.histories()

    reps = select_representatives(dataset.regimens, rep_threshold)
    weights = build_weight_matrix(
        dataset.visit_tuples(), reps, dictionary, kcfg, kernel=kernel_kind
    )
    pca = pca_fit(weights.rows, variance_threshold, centering=centering)
    basis = FeatureBasis(reps, pca, kcfg, kernel=kernel_kind)
    basis.bind(dictionary)
    h = pca.project(weights.rows)

    if cfg.baseline_mode == "normal_linear":
        sim = None
    elif cfg.baseline_mode == "dp_linear":
        sim = np.ones((dataset.n, dataset.n))
        np.fill_diagonal(sim, 0.0)
    else:
        sim = history_similarity_matrix(histories, dictionary, kcfg)

    design = FitDesign(
        y=dataset.y.copy(),
        x=dataset.x.copy(),
        h=h,
        ind_of_visit=dataset.ind_of_visit.copy(),
        n=dataset.n,
        sim=sim,
        item_names=list(dataset.item_names),
        covariate_names=list(dataset.covariate_names),
        individual_ids=list(dataset.ids),
    )
    return design, basis, histories


def fit_model(
    dataset: LongitudinalDataset,
    dictionary: DrugDictionary,
    cfg: McmcConfig,
    rep_threshold: int = 10,
    variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD,
    hyper: Hyperparams | None = None,
    histories: list[RegimenHistory] | None = None,
    centering: bool = True,
) -> FitResult:
    design, basis, histories = build_design(
        dataset, dictionary, cfg, rep_threshold, variance_threshold, histories,
        centering=centering,
    )
    chain = run_chain(design, cfg, hyper=hyper)
    return FitResult(chain, basis, design, histories, dictionary)
