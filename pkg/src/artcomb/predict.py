"""Posterior-predictive scenario engine over a fitted model bundle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import load_histories_csv, save_histories_csv
from .drugs import DrugDictionary, Regimen, parse_regimen
from .errors import DimensionMismatch, EmptyHistory, UnknownIndividual
from .features import FeatureBasis
from .kernel import KernelConfig, SubtreeScorer, TreeCache
from .sampler import ChainOutput
from .trees import RegimenHistory

NOISE_MODES = ("mean_only", "with_omega_eps")


@dataclass
class Scenario:
    """A hypothetical future visit: who, with what covariates, on what regimen."""

    covariates: list[float]
    candidate: str
    individual_id: str | None = None
    history: list[str] | None = None
    noise: str = "with_omega_eps"

    def __post_init__(self):
        if self.noise not in NOISE_MODES:
            raise ValueError(f"noise must be one of {NOISE_MODES}")


@dataclass
class ScenarioPrediction:
    items: list[str]
    mean: list[float]
    lower: list[float]
    upper: list[float]
    level: float
    n_draws: int
    noise: str

    def to_json(self) -> dict:
        return {
            "items": self.items,
            "mean": self.mean,
            "lower": self.lower,
            "upper": self.upper,
            "level": self.level,
            "n_draws": self.n_draws,
            "noise": self.noise,
        }


@dataclass
class FittedModel:
    """Chain draws plus everything needed to featurize and seat new scenarios."""

    chain: ChainOutput
    basis: FeatureBasis
    dictionary: DrugDictionary
    histories: list[RegimenHistory]

    def __post_init__(self):
        d_star = self.basis.pca.d_star
        if self.chain.gamma and self.chain.gamma[0].shape[-1] != d_star:
            raise DimensionMismatch(
                f"chain feature dim {self.chain.gamma[0].shape[-1]} != basis d_star {d_star}"
            )
        self._id_pos = {ident: k for k, ident in enumerate(self.chain.individual_ids)}

    @property
    def n_items(self) -> int:
        return len(self.chain.item_names)

    @property
    def n_covariates(self) -> int:
        return len(self.chain.covariate_names)

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.chain.save(out)
        self.basis.save(out / "basis.json")
        self.dictionary.to_csv(out / "dictionary.csv")
        save_histories_csv(out / "histories.csv", self.histories)

    @classmethod
    def load(cls, out_dir) -> "FittedModel":
        out = Path(out_dir)
        dictionary = DrugDictionary.from_csv(str(out / "dictionary.csv"))
        return cls(
            chain=ChainOutput.load(out),
            basis=FeatureBasis.load(out / "basis.json", dictionary),
            dictionary=dictionary,
            histories=load_histories_csv(out / "histories.csv", dictionary),
        )


def _history_similarities(
    model: FittedModel, episodes: list[Regimen]
) -> np.ndarray:
    """Similarity of a new history to every training individual's history."""
    cfg: KernelConfig = model.basis.kernel_cfg
    cache = TreeCache(model.dictionary)
    scorer = SubtreeScorer(cfg)
    new_tree = cache.sequence_tree(RegimenHistory("scenario", tuple(episodes)))
    return np.array(
        [scorer.score(new_tree, cache.sequence_tree(h)) for h in model.histories]
    )


def predict_scenario(
    model: FittedModel,
    scenario: Scenario,
    level: float = 0.95,
    rng: np.random.Generator | None = None,
    seed: int = 0,
) -> ScenarioPrediction:
    """Per-item posterior-predictive mean and equal-tailed band.

    Training individuals reuse their sampled cluster memberships draw by
    draw; a new individual is seated once per draw from the similarity-
    weighted seating conditional against the training histories, opening a
    fresh cluster from that draw's base measure when indicated.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    if rng is None:
        rng = np.random.default_rng(seed)
    chain = model.chain
    if scenario.individual_id is not None and scenario.individual_id in model._id_pos:
        pos = model._id_pos[scenario.individual_id]
        seat_new = False
    elif scenario.history is not None:
        if not scenario.history:
            raise EmptyHistory("scenario history must contain at least one episode")
        pos = None
        seat_new = True
        episodes = [parse_regimen(t, model.dictionary) for t in scenario.history]
        sims = _history_similarities(model, episodes)
    else:
        raise UnknownIndividual(str(scenario.individual_id))

    x = np.asarray(scenario.covariates, float)
    if x.shape[0] != model.n_covariates:
        raise DimensionMismatch(
            f"covariate length {x.shape[0]} != S={model.n_covariates}"
        )
    candidate = parse_regimen(scenario.candidate, model.dictionary)
    h_row, _ = model.basis.feature_row(candidate)

    q = model.n_items
    n = len(chain.individual_ids)
    draws = np.empty((chain.n_draws, q))
    for t in range(chain.n_draws):
        if seat_new:
            beta_t, gamma_t = _seat_and_params(model, t, sims, n, rng)
        else:
            k = int(chain.assignments[t][pos])
            beta_t, gamma_t = chain.beta[t][k], chain.gamma[t][k]
        mean = beta_t @ x + gamma_t @ h_row
        if scenario.noise == "with_omega_eps":
            s2 = chain.sigma_eps2[t]
            chol = np.linalg.cholesky(s2 * chain.sigma_omega[t])
            omega = chol @ rng.standard_normal(q)
            eps = math.sqrt(s2) * rng.standard_normal(q)
            mean = mean + omega + eps
        draws[t] = mean

    alpha = (1.0 - level) / 2.0
    lower = np.quantile(draws, alpha, axis=0)
    upper = np.quantile(draws, 1.0 - alpha, axis=0)
    return ScenarioPrediction(
        items=list(chain.item_names),
        mean=draws.mean(axis=0).tolist(),
        lower=lower.tolist(),
        upper=upper.tolist(),
        level=level,
        n_draws=chain.n_draws,
        noise=scenario.noise,
    )


def _seat_and_params(model: FittedModel, t: int, sims: np.ndarray, n: int, rng):
    """One seating draw for a new individual, returning its cluster params."""
    chain = model.chain
    assignment = chain.assignments[t]
    m0 = chain.m0[t]
    r = int(chain.r_n[t])
    denom = sims.sum()
    weights = np.empty(r + 1)
    for k in range(r):
        members = assignment == k
        if denom > 0:
            weights[k] = (n / (m0 + n)) * (sims[members].sum() / denom)
        else:
            weights[k] = (n / (m0 + n)) * (members.sum() / n)
    weights[r] = m0 / (m0 + n)
    weights /= weights.sum()
    choice = int(rng.choice(r + 1, p=weights))
    if choice < r:
        return chain.beta[t][choice], chain.gamma[t][choice]
    # new cluster: draw coefficients from this draw's base measure
    q, s = chain.e[t].shape
    d_star = chain.f[t].shape[1]
    beta = np.empty((q, s))
    gamma = np.empty((q, d_star))
    for item in range(q):
        beta[item] = chain.e[t][item] + np.linalg.cholesky(
            chain.big_b[t][item]
        ) @ rng.standard_normal(s)
        gamma[item] = chain.f[t][item] + np.linalg.cholesky(
            chain.lam[t][item]
        ) @ rng.standard_normal(d_star)
    return beta, gamma
