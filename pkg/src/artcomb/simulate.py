"""Synthetic data generation for recovery and calibration experiments.

Histories come from a synthetic pool (or any history CSV), the partition is
drawn from the seating prior over those histories' similarities, and outcomes
follow the sampling model with known coefficient, correlation, and noise
truths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import LongitudinalDataset, load_histories_csv
from .drugs import DrugDictionary, Regimen
from .errors import DimensionMismatch, PoolTooSmall
from .features import build_weight_matrix, pca_fit, select_representatives
from .kernel import KernelConfig, history_similarity_matrix
from .model import SimilarityContext, ddcrp_sample
from .trees import RegimenHistory

# fixed 3-cluster, 3-item, 3-covariate coefficient set for reproducible
# recovery experiments
PRESET_BETA = np.array(
    [
        [
            [0.4201738, -1.5065858, 0.4573016],
            [0.1002570, 0.3885576, -2.5187332],
            [0.8705657, -0.3111586, -0.5348084],
        ],
        [
            [-1.2951632, -0.07094494, -0.7004121],
            [-0.8044954, 0.12646919, -0.3280640],
            [1.3418530, -0.98949773, -0.3472228],
        ],
        [
            [0.4265138, -0.2214469, 0.1368007],
            [-0.3282160, -2.4289411, -0.5135745],
            [0.5458084, 1.7959664, 0.7342632],
        ],
    ]
)


@dataclass
class SimConfig:
    n: int = 60
    q: int = 3
    s: int = 3
    eta_true: float = 0.5
    match_mode: str = "strict"
    pool_size: int = 150
    menu_size: int = 30
    min_len: int = 1
    max_len: int = 4
    max_drugs: int = 4
    visits_per_episode: tuple[int, int] = (1, 2)
    rep_threshold: int = 5
    correlation_offdiag: tuple = (0.25, 0.5, 0.75)
    sigma_eps2_true: float = 1.0
    m0_true: float = 1.0
    seed: int = 0
    pool_file: str | None = None
    beta_truth: str = "normal"           # "normal" or "preset"
    gamma_truth_space: str = "reduced"   # "reduced" (on the PCA features) or "raw"
    variance_threshold: float = 0.999
    fixed_partition: list[int] | None = None
    require_r_true: int | None = None    # rejection-sample the prior partition
    min_cluster_size: int = 1
    max_partition_tries: int = 1000

    def __post_init__(self):
        if self.n < 2 or self.q < 1 or self.s < 1:
            raise ValueError("need n >= 2, q >= 1, s >= 1")
        if self.gamma_truth_space not in ("reduced", "raw"):
            raise ValueError("gamma_truth_space must be 'reduced' or 'raw'")
        expected = self.q * (self.q - 1) // 2
        if len(self.correlation_offdiag) != expected:
            raise ValueError(
                f"correlation_offdiag needs {expected} entries for q={self.q}"
            )
        corr = correlation_from_offdiag(self.q, self.correlation_offdiag)
        if np.linalg.eigvalsh(corr).min() <= 0:
            raise ValueError("correlation_offdiag does not define a valid correlation matrix")


def correlation_from_offdiag(q: int, offdiag) -> np.ndarray:
    corr = np.eye(q)
    pos = 0
    for a in range(q):
        for b in range(a + 1, q):
            corr[a, b] = corr[b, a] = offdiag[pos]
            pos += 1
    return corr


@dataclass
class GroundTruth:
    assignment: np.ndarray          # (n,)
    beta: np.ndarray                # (r, Q, S)
    gamma: np.ndarray               # (r, Q, D) in raw weight space
    h_true: np.ndarray              # (N, Q) per-visit combination effects
    sigma_omega: np.ndarray         # (Q, Q)
    sigma_eps2: float
    eta_true: float
    m0_true: float
    representatives: list[str]
    histories: list[list[str]]      # episode texts per individual
    seed: int

    @property
    def r_true(self) -> int:
        return self.beta.shape[0]

    def to_json(self) -> dict:
        return {
            "assignment": self.assignment.tolist(),
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
            "h_true": self.h_true.tolist(),
            "sigma_omega": self.sigma_omega.tolist(),
            "sigma_eps2": self.sigma_eps2,
            "eta_true": self.eta_true,
            "m0_true": self.m0_true,
            "representatives": self.representatives,
            "histories": self.histories,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GroundTruth":
        return cls(
            assignment=np.asarray(doc["assignment"], int),
            beta=np.asarray(doc["beta"], float),
            gamma=np.asarray(doc["gamma"], float),
            h_true=np.asarray(doc["h_true"], float),
            sigma_omega=np.asarray(doc["sigma_omega"], float),
            sigma_eps2=doc["sigma_eps2"],
            eta_true=doc["eta_true"],
            m0_true=doc["m0_true"],
            representatives=doc["representatives"],
            histories=doc["histories"],
            seed=doc["seed"],
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "GroundTruth":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def generate_regimen_menu(
    menu_size: int,
    dictionary: DrugDictionary,
    rng: np.random.Generator,
    max_drugs: int = 4,
) -> list[Regimen]:
    """Distinct 1..max_drugs-drug regimens, each anchored by a backbone (NRTI)
    agent, mimicking the concentration of practice on recurring combinations."""
    by_class = dictionary.codes_by_class()
    backbone = by_class["NRTI"]
    all_codes = dictionary.codes()
    menu: list[Regimen] = []
    seen = set()
    guard = 0
    while len(menu) < menu_size:
        guard += 1
        if guard > 100 * menu_size:
            raise ValueError("dictionary too small for the requested menu size")
        n_drugs = int(rng.integers(1, max_drugs + 1))
        codes = {str(rng.choice(backbone))}
        while len(codes) < n_drugs:
            codes.add(str(rng.choice(all_codes)))
        reg = Regimen(tuple(sorted(codes)))
        if reg not in seen:
            seen.add(reg)
            menu.append(reg)
    return menu


def generate_histories(
    pool_size: int,
    max_len: int,
    dictionary: DrugDictionary,
    rng: np.random.Generator,
    max_drugs: int = 4,
    menu_size: int = 30,
    min_len: int = 1,
) -> list[RegimenHistory]:
    """Random episode sequences drawn from a shared regimen menu; consecutive
    episodes always differ."""
    menu = generate_regimen_menu(menu_size, dictionary, rng, max_drugs)
    out = []
    for p in range(pool_size):
        length = int(rng.integers(min_len, max_len + 1))
        episodes: list[Regimen] = []
        while len(episodes) < length:
            reg = menu[int(rng.integers(len(menu)))]
            if episodes and episodes[-1] == reg:
                continue
            episodes.append(reg)
        out.append(RegimenHistory(f"pool{p:04d}", tuple(episodes)))
    return out


def generate_dataset(
    cfg: SimConfig,
    dictionary: DrugDictionary | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[LongitudinalDataset, GroundTruth]:
    if dictionary is None:
        dictionary = DrugDictionary.default()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if cfg.pool_file is not None:
        pool = load_histories_csv(cfg.pool_file, dictionary)
    else:
        pool = generate_histories(
            cfg.pool_size, cfg.max_len, dictionary, rng, cfg.max_drugs,
            cfg.menu_size, cfg.min_len,
        )
    if cfg.n > len(pool):
        raise PoolTooSmall(f"pool of {len(pool)} cannot seed {cfg.n} individuals")
    chosen = rng.choice(len(pool), size=cfg.n, replace=False)
    ids = [f"i{k:03d}" for k in range(cfg.n)]
    histories = [
        RegimenHistory(ids[k], pool[int(c)].episodes) for k, c in enumerate(chosen)
    ]

    # per-visit regimens: each episode spans a random number of visits
    vmin, vmax = cfg.visits_per_episode
    regimens: list[Regimen] = []
    ind_of_visit = []
    visit_index = []
    for k, hist in enumerate(histories):
        j = 0
        for episode in hist.episodes:
            for _ in range(int(rng.integers(vmin, vmax + 1))):
                regimens.append(episode)
                ind_of_visit.append(k)
                visit_index.append(j)
                j += 1
    n_visits = len(regimens)
    ind_of_visit = np.asarray(ind_of_visit)
    visit_index = np.asarray(visit_index)

    kcfg = KernelConfig(eta=cfg.eta_true, match_mode=cfg.match_mode)
    sim = history_similarity_matrix(histories, dictionary, kcfg)

    if cfg.fixed_partition is not None:
        assignment = np.asarray(cfg.fixed_partition, int)
        if assignment.shape[0] != cfg.n:
            raise DimensionMismatch("fixed_partition length != n")
    else:
        assignment = None
        for _ in range(cfg.max_partition_tries):
            ctx = SimilarityContext(sim, rng.permutation(cfg.n), cfg.m0_true)
            draw = ddcrp_sample(ctx, rng)
            sizes = np.bincount(draw)
            if cfg.require_r_true is not None and len(sizes) != cfg.require_r_true:
                continue
            if sizes.min() < cfg.min_cluster_size:
                continue
            assignment = draw
            break
        if assignment is None:
            raise ValueError(
                "no prior partition met the cluster-count/size constraints; "
                "relax require_r_true or min_cluster_size"
            )
    r_true = int(assignment.max()) + 1

    if cfg.beta_truth == "preset":
        if (r_true, cfg.q, cfg.s) != (3, 3, 3):
            raise ValueError("preset coefficients need r=3, q=3, s=3")
        beta = PRESET_BETA.copy()
    else:
        beta = rng.standard_normal((r_true, cfg.q, cfg.s))

    visit_tuples = [
        (ids[ind_of_visit[v]], int(visit_index[v]), regimens[v]) for v in range(n_visits)
    ]
    reps = select_representatives(regimens, cfg.rep_threshold)
    weight_rows = build_weight_matrix(visit_tuples, reps, dictionary, kcfg).rows
    if cfg.gamma_truth_space == "reduced":
        # coefficients live on the same reduced features the model fits,
        # keeping the covariate block cleanly identified
        pca = pca_fit(weight_rows, cfg.variance_threshold)
        h_feats = pca.project(weight_rows)
        gamma = rng.standard_normal((r_true, cfg.q, pca.d_star))
        h_true = np.einsum("nd,nqd->nq", h_feats, gamma[assignment[ind_of_visit]])
    else:
        gamma = rng.standard_normal((r_true, cfg.q, len(reps)))
        h_true = np.einsum("nd,nqd->nq", weight_rows, gamma[assignment[ind_of_visit]])

    x = np.empty((n_visits, cfg.s))
    x[:, 0] = 1.0
    if cfg.s >= 2:
        per_ind = rng.standard_normal(cfg.n)
        x[:, 1] = per_ind[ind_of_visit]
    if cfg.s >= 3:
        x[:, 2:] = rng.standard_normal((n_visits, cfg.s - 2))

    sigma_omega = correlation_from_offdiag(cfg.q, cfg.correlation_offdiag)
    chol = np.linalg.cholesky(cfg.sigma_eps2_true * sigma_omega)
    omega = rng.standard_normal((n_visits, cfg.q)) @ chol.T
    eps = rng.standard_normal((n_visits, cfg.q)) * np.sqrt(cfg.sigma_eps2_true)
    cov_term = np.einsum("ns,nqs->nq", x, beta[assignment[ind_of_visit]])
    y = cov_term + h_true + omega + eps

    dataset = LongitudinalDataset(
        ids=ids,
        y=y,
        x=x,
        regimens=regimens,
        visit_index=visit_index,
        ind_of_visit=ind_of_visit,
        item_names=[f"y{i+1}" for i in range(cfg.q)],
        covariate_names=[f"x{i+1}" for i in range(cfg.s)],
    )
    truth = GroundTruth(
        assignment=assignment,
        beta=beta,
        gamma=gamma,
        h_true=h_true,
        sigma_omega=sigma_omega,
        sigma_eps2=cfg.sigma_eps2_true,
        eta_true=cfg.eta_true,
        m0_true=cfg.m0_true,
        representatives=[r.text() for r in reps.regimens],
        histories=[[e.text() for e in h.episodes] for h in histories],
        seed=cfg.seed,
    )
    return dataset, truth
