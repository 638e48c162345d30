"""Gibbs/Metropolis-Hastings sampler for the clustered combination-effect model.

One sweep updates, in order: the partition (per-individual reallocation with
a single auxiliary parameter draw for new clusters), the mass parameter
(auxiliary-beta gamma mixture), the seating permutation (shuffle proposal),
cluster-level regression coefficients (conjugate normals), the latent
mean/covariance layer above them (normal / inverse-Wishart), the per-visit
correlation deviations, the item correlation matrix (random-walk on one
off-diagonal), and the noise variance (inverse-gamma).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import (
    DimensionMismatch,
    NonFiniteLikelihood,
    NonPDScale,
    SingularPrecision,
)
from .model import (
    Hyperparams,
    SimilarityContext,
    ddcrp_sample,
    seating_log_pmf,
    visit_means,
)

BASELINE_MODES = ("ddcrp_st", "dp_linear", "normal_linear")
SIGMA_EPS_MODES = ("paper", "consistent")


@dataclass(frozen=True)
class McmcConfig:
    n_iter: int = 10_000
    burn_in: int = 5_000
    thin: int = 10
    seed: int = 0
    permutation_shuffle_size: int = 3
    permutation_interval: int = 1
    sigma_omega_step: float = 0.05
    sigma_eps_mode: str = "consistent"
    eta: float = 0.5
    match_mode: str = "strict"
    baseline_mode: str = "ddcrp_st"

    def __post_init__(self):
        if not self.n_iter > self.burn_in >= 0:
            raise ValueError("need n_iter > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.permutation_shuffle_size < 2:
            raise ValueError("shuffle size must be >= 2")
        if self.sigma_eps_mode not in SIGMA_EPS_MODES:
            raise ValueError(f"sigma_eps_mode must be one of {SIGMA_EPS_MODES}")
        if self.baseline_mode not in BASELINE_MODES:
            raise ValueError(f"baseline_mode must be one of {BASELINE_MODES}")

    @property
    def n_draws(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "McmcConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in doc.items() if k in known})


@dataclass
class FitDesign:
    """Immutable per-fit arrays shared by every update step."""

    y: np.ndarray                # (N, Q)
    x: np.ndarray                # (N, S)
    h: np.ndarray                # (N, D_star) reduced feature rows
    ind_of_visit: np.ndarray     # (N,)
    n: int
    sim: np.ndarray | None      # (n, n) history similarities; None for fixed partition
    item_names: list[str] = field(default_factory=list)
    covariate_names: list[str] = field(default_factory=list)
    individual_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not (self.y.shape[0] == self.x.shape[0] == self.h.shape[0] == len(self.ind_of_visit)):
            raise DimensionMismatch("design arrays disagree on visit count")
        if np.any(np.diff(self.ind_of_visit) < 0):
            raise ValueError("visit rows must be grouped by individual")
        self.rows_of = [np.nonzero(self.ind_of_visit == i)[0] for i in range(self.n)]
        self.visit_offsets = np.searchsorted(self.ind_of_visit, np.arange(self.n + 1))

    @property
    def q(self) -> int:
        return self.y.shape[1]

    @property
    def s(self) -> int:
        return self.x.shape[1]

    @property
    def d_star(self) -> int:
        return self.h.shape[1]


@dataclass
class McmcState:
    assignment: np.ndarray       # (n,)
    beta: np.ndarray             # (r, Q, S)
    gamma: np.ndarray            # (r, Q, D_star)
    omega: np.ndarray            # (N, Q)
    sigma_omega: np.ndarray      # (Q, Q)
    sigma_eps2: float
    m0: float
    order: np.ndarray            # (n,)
    e: np.ndarray                # (Q, S)
    big_b: np.ndarray            # (Q, S, S)
    f: np.ndarray                # (Q, D_star)
    lam: np.ndarray              # (Q, D_star, D_star)

    @property
    def n_clusters(self) -> int:
        return self.beta.shape[0]


@dataclass
class ChainOutput:
    """Thinned post-burn-in draws plus move acceptance statistics."""

    assignments: np.ndarray          # (T, n)
    r_n: np.ndarray                  # (T,)
    beta: list[np.ndarray]           # T arrays (r_t, Q, S)
    gamma: list[np.ndarray]          # T arrays (r_t, Q, D_star)
    sigma_omega: np.ndarray          # (T, Q, Q)
    sigma_eps2: np.ndarray           # (T,)
    m0: np.ndarray                   # (T,)
    e: np.ndarray                    # (T, Q, S)
    big_b: np.ndarray                # (T, Q, S, S)
    f: np.ndarray                    # (T, Q, D_star)
    lam: np.ndarray                  # (T, Q, D_star, D_star)
    acceptance: dict
    config: McmcConfig
    individual_ids: list[str]
    item_names: list[str]
    covariate_names: list[str]

    @property
    def n_draws(self) -> int:
        return self.assignments.shape[0]

    def partition_at(self, t: int):
        """Stored draw t as a validated Partition record."""
        from .model import Partition

        return Partition(
            assignment=self.assignments[t].copy(),
            beta=self.beta[t].copy(),
            gamma_star=self.gamma[t].copy(),
        )

    def save(self, out_dir) -> None:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "draws.jsonl", "w") as fh:
            for t in range(self.n_draws):
                rec = {
                    "assignments": self.assignments[t].tolist(),
                    "r_n": int(self.r_n[t]),
                    "beta": self.beta[t].tolist(),
                    "gamma_star": self.gamma[t].tolist(),
                    "sigma_omega": self.sigma_omega[t].tolist(),
                    "sigma_eps2": float(self.sigma_eps2[t]),
                    "m0": float(self.m0[t]),
                    "e": self.e[t].tolist(),
                    "B": self.big_b[t].tolist(),
                    "f": self.f[t].tolist(),
                    "Lambda": self.lam[t].tolist(),
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        meta = {
            "config": self.config.to_json(),
            "acceptance": self.acceptance,
            "n_draws": self.n_draws,
            "individual_ids": self.individual_ids,
            "item_names": self.item_names,
            "covariate_names": self.covariate_names,
        }
        with open(out / "meta.json", "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
        with open(out / "assignments.csv", "w") as fh:
            fh.write("draw," + ",".join(self.individual_ids) + "\n")
            for t in range(self.n_draws):
                fh.write(f"{t}," + ",".join(map(str, self.assignments[t].tolist())) + "\n")

    @classmethod
    def load(cls, out_dir) -> "ChainOutput":
        from pathlib import Path

        out = Path(out_dir)
        with open(out / "meta.json") as fh:
            meta = json.load(fh)
        records = []
        with open(out / "draws.jsonl") as fh:
            for line in fh:
                records.append(json.loads(line))
        return cls(
            assignments=np.array([r["assignments"] for r in records], dtype=int),
            r_n=np.array([r["r_n"] for r in records], dtype=int),
            beta=[np.asarray(r["beta"], float) for r in records],
            gamma=[np.asarray(r["gamma_star"], float) for r in records],
            sigma_omega=np.array([r["sigma_omega"] for r in records], float),
            sigma_eps2=np.array([r["sigma_eps2"] for r in records], float),
            m0=np.array([r["m0"] for r in records], float),
            e=np.array([r["e"] for r in records], float),
            big_b=np.array([r["B"] for r in records], float),
            f=np.array([r["f"] for r in records], float),
            lam=np.array([r["Lambda"] for r in records], float),
            acceptance=meta["acceptance"],
            config=McmcConfig.from_json(meta["config"]),
            individual_ids=meta["individual_ids"],
            item_names=meta["item_names"],
            covariate_names=meta["covariate_names"],
        )


def sample_lkj(dim: int, concentration: float, rng: np.random.Generator) -> np.ndarray:
    """Correlation matrix draw with density proportional to det^(concentration-1)
    (onion construction)."""
    if dim == 1:
        return np.array([[1.0]])
    beta = concentration + (dim - 2) / 2.0
    r12 = 2.0 * rng.beta(beta, beta) - 1.0
    sigma = np.array([[1.0, r12], [r12, 1.0]])
    for k in range(2, dim):
        beta -= 0.5
        y = rng.beta(k / 2.0, beta)
        u = rng.normal(size=k)
        u /= np.linalg.norm(u)
        z = np.linalg.cholesky(sigma) @ (math.sqrt(y) * u)
        sigma = np.block([[sigma, z[:, None]], [z[None, :], np.ones((1, 1))]])
    return sigma


def _chol_or_none(mat: np.ndarray) -> np.ndarray | None:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return None


def _draw_mvn_from_precision(
    precision: np.ndarray, rhs: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw from N(V rhs, V) with V = precision^-1."""
    lower = _chol_or_none(precision)
    if lower is None:
        raise SingularPrecision("conditional precision is not positive definite")
    mean = cho_solve((lower, True), rhs, check_finite=False)
    z = rng.standard_normal(rhs.shape[0])
    return mean + solve_triangular(lower.T, z, lower=False, check_finite=False)


def sample_invwishart(df: float, scale: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-Wishart draw with mean scale/(df - p - 1), via the Bartlett
    decomposition of the corresponding Wishart."""
    p = scale.shape[0]
    chol = np.linalg.cholesky(scale)
    a = np.zeros((p, p))
    idx = np.arange(p)
    a[idx, idx] = np.sqrt(rng.chisquare(df - idx))
    if p > 1:
        a[np.tril_indices(p, -1)] = rng.standard_normal(p * (p - 1) // 2)
    m = solve_triangular(a, chol.T, lower=True, check_finite=False)
    return m.T @ m


class _SeatingArrays:
    """Vectorized seating-prior bookkeeping for the reallocation sweep.

    Tracks, per individual, the summed similarity and count of same-cluster
    predecessors under the current seating order; candidate log-prior changes
    for one individual reduce to a handful of array passes over the
    individuals seated after it.
    """

    _TINY = 1e-300  # log-clamp keeping impossible moves at ~exp(-690)

    def __init__(self, sim: np.ndarray, order: np.ndarray, assignment: np.ndarray, m0: float):
        self.sim = sim
        self.order = order
        self.m0 = float(m0)
        self.assignment = assignment  # shared with the sampler state, mutated in place
        n = len(order)
        self.pos = np.empty(n, dtype=int)
        self.pos[order] = np.arange(n)
        s_ord = sim[np.ix_(order, order)]
        lower = np.tri(n, n, -1, dtype=bool)
        # denom[t] = total similarity of the step-t individual to all predecessors
        self.denom_by_pos = np.where(lower, s_ord, 0.0).sum(axis=1)
        c_ord = assignment[order]
        same = (c_ord[:, None] == c_ord[None, :]) & lower
        self.num_before = np.empty(n)
        self.cnt_before = np.empty(n, dtype=int)
        self.num_before[order] = np.where(same, s_ord, 0.0).sum(axis=1)
        self.cnt_before[order] = same.sum(axis=1)
        self.sizes = np.bincount(assignment).tolist()
        self.log_m0 = math.log(self.m0)
        # position-indexed pieces of the founder-to-join swap factor
        steps = np.arange(n, dtype=float)
        self._founder_factor = steps / (self.m0 * np.maximum(self.denom_by_pos, self._TINY))
        self._log_m0_plus = np.log(self.m0 + steps)
        self._last_num_k = np.zeros(len(self.sizes))
        self._last_cnt_k = np.zeros(len(self.sizes), dtype=int)

    def remove(self, i: int) -> bool:
        """Detach i from its cluster; True when the cluster is left empty."""
        p = self.pos[i]
        a = self.assignment[i]
        after = self.order[p + 1 :]
        touched = after[self.assignment[after] == a]
        self.num_before[touched] -= self.sim[i, touched]
        self.cnt_before[touched] -= 1
        self.sizes[a] -= 1
        return self.sizes[a] == 0

    def drop_cluster(self, a: int) -> None:
        """Remove an empty cluster slot, relabeling the last slot into its place."""
        last = len(self.sizes) - 1
        if a != last:
            self.assignment[self.assignment == last] = a
            self.sizes[a] = self.sizes[last]
        self.sizes.pop()

    def candidate_log_priors(self, i: int) -> np.ndarray:
        """Per-candidate log-prior terms (existing clusters plus a new one) up
        to an additive constant shared by all candidates; i must be removed."""
        r = len(self.sizes)
        p = self.pos[i]
        m0 = self.m0
        out = np.zeros(r + 1)
        sim_i = self.sim[i]
        before = self.order[:p]
        if p > 0:
            bc = self.assignment[before]
            num_k = np.bincount(bc, weights=sim_i[before], minlength=r)
            cnt_k = np.bincount(bc, minlength=r)
            denom_p = self.denom_by_pos[p]
            log_new = self.log_m0 - self._log_m0_plus[p]
            ratio = num_k / denom_p if denom_p > 0.0 else cnt_k / p
            joins = math.log(p) - self._log_m0_plus[p] + np.log(np.maximum(ratio, self._TINY))
            out[:r] = np.where(cnt_k > 0, joins, log_new)
            out[r] = log_new
            self._last_num_k = num_k
            self._last_cnt_k = cnt_k
        else:
            self._last_num_k = np.zeros(r)
            self._last_cnt_k = np.zeros(r, dtype=int)
        after = self.order[p + 1 :]
        if len(after):
            ac = self.assignment[after]
            sij = sim_i[after]
            num_j = self.num_before[after]
            cnt_j = self.cnt_before[after]
            founder = cnt_j == 0
            posdenom = self.denom_by_pos[p + 1 :] > 0.0
            # each member's term ratio under "i joins" vs "i absent", fused so a
            # single log covers every branch:
            #   founder, sim-weighted: t * s_ij / (m0 * denom_t)
            #   founder, zero-denom:   1 / m0
            #   joiner, sim-weighted:  (num + s_ij) / num
            #   joiner, zero-denom:    (cnt + 1) / cnt
            safe_num = np.maximum(num_j, self._TINY)
            arg = np.where(
                posdenom,
                np.where(
                    founder,
                    np.maximum(sij, self._TINY) * self._founder_factor[p + 1 :],
                    (num_j + sij) / safe_num,
                ),
                np.where(founder, 1.0 / m0, (cnt_j + 1.0) / np.maximum(cnt_j, 1)),
            )
            out[:r] += np.bincount(ac, weights=np.log(arg), minlength=r)
        return out

    def insert(self, i: int, k: int) -> None:
        """Attach i to cluster k (k == len(sizes) opens a new cluster); relies
        on the bookkeeping cached by the preceding candidate_log_priors call."""
        p = self.pos[i]
        if k == len(self.sizes):
            self.sizes.append(0)
            num_i, cnt_i = 0.0, 0
        else:
            num_i = float(self._last_num_k[k]) if k < len(self._last_num_k) else 0.0
            cnt_i = int(self._last_cnt_k[k]) if k < len(self._last_cnt_k) else 0
        after = self.order[p + 1 :]
        touched = after[self.assignment[after] == k]
        self.num_before[touched] += self.sim[i, touched]
        self.cnt_before[touched] += 1
        self.num_before[i] = num_i
        self.cnt_before[i] = cnt_i
        self.sizes[k] += 1
        self.assignment[i] = k


class CombEffectSampler:
    """Owns one chain's state and implements every conditional update."""

    def __init__(
        self,
        design: FitDesign,
        cfg: McmcConfig,
        rng: np.random.Generator,
        hyper: Hyperparams | None = None,
    ):
        self.design = design
        self.cfg = cfg
        self.rng = rng
        self.hyper = hyper if hyper is not None else Hyperparams.defaults(design.s, design.d_star)
        self.fixed_partition = cfg.baseline_mode == "normal_linear"
        self.accept_counts = {"permutation": [0, 0], "sigma_omega": [0, 0]}
        self._e0_inv = np.linalg.inv(self.hyper.e0_cov)
        self._f0_inv = np.linalg.inv(self.hyper.f0_cov)
        self.state = self._initial_state()
        self._refresh_prior_factors()

    # ------------------------------------------------------------------ setup

    def _initial_state(self) -> McmcState:
        d = self.design
        rng = self.rng
        order = rng.permutation(d.n)
        if self.fixed_partition:
            assignment = np.arange(d.n)
        else:
            ctx = SimilarityContext(d.sim, order, 1.0)
            assignment = ddcrp_sample(ctx, rng)
        r = assignment.max() + 1
        return McmcState(
            assignment=assignment,
            beta=rng.standard_normal((r, d.q, d.s)),
            gamma=rng.standard_normal((r, d.q, d.d_star)),
            omega=np.zeros((d.y.shape[0], d.q)),
            sigma_omega=np.eye(d.q),
            sigma_eps2=1.0,
            m0=1.0,
            order=order,
            e=np.zeros((d.q, d.s)),
            big_b=np.tile(np.eye(d.s), (d.q, 1, 1)),
            f=np.zeros((d.q, d.d_star)),
            lam=np.tile(np.eye(d.d_star), (d.q, 1, 1)),
        )

    def prior_draw(self) -> None:
        """Replace the whole state by a draw from the prior (given the design)."""
        d = self.design
        rng = self.rng
        hp = self.hyper
        st = self.state
        st.m0 = float(rng.gamma(hp.c0, 1.0 / hp.d0))
        st.order = rng.permutation(d.n)
        if self.fixed_partition:
            st.assignment = np.arange(d.n)
        else:
            st.assignment = ddcrp_sample(SimilarityContext(d.sim, st.order, st.m0), rng)
        r = st.assignment.max() + 1
        chol_e0 = np.linalg.cholesky(hp.e0_cov)
        chol_f0 = np.linalg.cholesky(hp.f0_cov)
        st.e = (chol_e0 @ rng.standard_normal((d.q, d.s, 1)))[..., 0]
        st.f = (chol_f0 @ rng.standard_normal((d.q, d.d_star, 1)))[..., 0]
        st.big_b = np.stack(
            [sample_invwishart(hp.b0, hp.b0_scale, rng) for _ in range(d.q)]
        )
        st.lam = np.stack(
            [sample_invwishart(hp.lambda0, hp.lambda0_scale, rng) for _ in range(d.q)]
        )
        self._refresh_prior_factors()
        st.beta = np.stack([self._draw_from_base(which="beta") for _ in range(r)])
        st.gamma = np.stack([self._draw_from_base(which="gamma") for _ in range(r)])
        st.sigma_eps2 = float(hp.g2 / rng.gamma(hp.g1, 1.0))
        st.sigma_omega = sample_lkj(d.q, 2.0, rng)
        chol_so = np.linalg.cholesky(st.sigma_omega * st.sigma_eps2)
        st.omega = rng.standard_normal((d.y.shape[0], d.q)) @ chol_so.T

    def resample_outcomes(self) -> None:
        """Regenerate Y from the current state (used by joint-distribution tests)."""
        d = self.design
        st = self.state
        means = visit_means(st.assignment, st.beta, st.gamma, d.x, d.h, d.ind_of_visit)
        eps = self.rng.standard_normal(d.y.shape) * math.sqrt(st.sigma_eps2)
        d.y[...] = means + st.omega + eps

    def _refresh_prior_factors(self) -> None:
        st = self.state
        self._b_inv = np.stack([np.linalg.inv(b) for b in st.big_b])
        self._lam_inv = np.stack([np.linalg.inv(l) for l in st.lam])
        self._chol_b = np.stack([np.linalg.cholesky(b) for b in st.big_b])
        self._chol_lam = np.stack([np.linalg.cholesky(l) for l in st.lam])

    def _draw_from_base(self, which: str) -> np.ndarray:
        """One (Q, dim) coefficient block from the current base measure."""
        st = self.state
        if which == "beta":
            mean, chol = st.e, self._chol_b
        else:
            mean, chol = st.f, self._chol_lam
        z = self.rng.standard_normal(mean.shape)
        return mean + np.einsum("qij,qj->qi", chol, z)

    # ------------------------------------------------- partition (reallocation)

    def _candidate_log_weights(
        self,
        i: int,
        seats: "_SeatingArrays",
        beta_list: list[np.ndarray],
        gamma_list: list[np.ndarray],
        resid: np.ndarray,
        aux_beta: np.ndarray,
        aux_gamma: np.ndarray,
        inv_2s2: float,
    ) -> np.ndarray:
        """Unnormalized log reallocation weights for every existing cluster plus
        a new one, with i already removed from the seating arrays."""
        d = self.design
        rows = d.rows_of[i]
        xi, hi, ri = d.x[rows], d.h[rows], resid[rows]
        beta_all = np.stack(beta_list + [aux_beta])
        gamma_all = np.stack(gamma_list + [aux_gamma])
        means = np.einsum("js,kqs->kjq", xi, beta_all) + np.einsum(
            "jd,kqd->kjq", hi, gamma_all
        )
        sse = ((ri[None, :, :] - means) ** 2).sum(axis=(1, 2))
        return seats.candidate_log_priors(i) - sse * inv_2s2

    def update_partition(self) -> None:
        if self.fixed_partition:
            return
        d = self.design
        st = self.state
        rng = self.rng
        resid = d.y - st.omega
        inv_2s2 = 1.0 / (2.0 * st.sigma_eps2)
        seats = _SeatingArrays(d.sim, st.order, st.assignment, st.m0)
        beta_list = [st.beta[k] for k in range(st.n_clusters)]
        gamma_list = [st.gamma[k] for k in range(st.n_clusters)]
        offsets = d.visit_offsets

        def sse_column(beta_k: np.ndarray, gamma_k: np.ndarray) -> np.ndarray:
            """Per-individual residual sum of squares under one cluster's params."""
            mean = d.x @ beta_k.T + d.h @ gamma_k.T
            per_visit = ((resid - mean) ** 2).sum(axis=1)
            return np.add.reduceat(per_visit, offsets[:-1])

        # cluster params are fixed during the sweep, so per-individual candidate
        # likelihoods come from cached columns
        sse_cols = [sse_column(b, g) for b, g in zip(beta_list, gamma_list)]

        # one fresh base-measure draw per reallocation step, batched up front
        sweep = rng.permutation(d.n)
        zb = rng.standard_normal((d.n, d.q, d.s))
        zg = rng.standard_normal((d.n, d.q, d.d_star))
        aux_betas = st.e[None] + np.einsum("qij,nqj->nqi", self._chol_b, zb)
        aux_gammas = st.f[None] + np.einsum("qij,nqj->nqi", self._chol_lam, zg)

        for step, i in enumerate(sweep):
            current = int(st.assignment[i])
            if seats.remove(i):
                # vacated singleton: its parameters become the new-cluster
                # candidate, keeping the single-auxiliary update exact
                aux_beta, aux_gamma = beta_list[current], gamma_list[current]
                aux_col = sse_cols[current]
                last = len(beta_list) - 1
                seats.drop_cluster(current)
                if current != last:
                    beta_list[current] = beta_list[last]
                    gamma_list[current] = gamma_list[last]
                    sse_cols[current] = sse_cols[last]
                beta_list.pop()
                gamma_list.pop()
                sse_cols.pop()
            else:
                aux_beta = aux_betas[step]
                aux_gamma = aux_gammas[step]
                aux_col = None

            rows = slice(offsets[i], offsets[i + 1])
            if aux_col is None:
                aux_mean = d.x[rows] @ aux_beta.T + d.h[rows] @ aux_gamma.T
                aux_sse = float(((resid[rows] - aux_mean) ** 2).sum())
            else:
                aux_sse = float(aux_col[i])
            sse = np.fromiter(
                (col[i] for col in sse_cols), dtype=float, count=len(sse_cols)
            )
            logw = seats.candidate_log_priors(i)
            logw[:-1] -= sse * inv_2s2
            logw[-1] -= aux_sse * inv_2s2
            logw -= logw.max()
            weights = np.exp(logw)
            cdf = np.cumsum(weights)
            choice = min(int(np.searchsorted(cdf, rng.random() * cdf[-1])), len(weights) - 1)
            if choice == len(beta_list):
                beta_list.append(aux_beta)
                gamma_list.append(aux_gamma)
                sse_cols.append(sse_column(aux_beta, aux_gamma) if aux_col is None else aux_col)
            seats.insert(i, choice)

        st.beta = np.stack(beta_list)
        st.gamma = np.stack(gamma_list)

    # --------------------------------------------------------- mass parameter

    def update_mass(self) -> None:
        if self.fixed_partition:
            return
        st = self.state
        hp = self.hyper
        n = self.design.n
        r = st.n_clusters
        tau0 = self.rng.beta(st.m0 + 1.0, n)
        rate = hp.d0 - math.log(tau0)
        w1 = hp.c0 + r - 1.0
        w2 = n * rate
        if self.rng.uniform() < w1 / (w1 + w2):
            shape = hp.c0 + r
        else:
            shape = hp.c0 + r - 1.0
        st.m0 = float(self.rng.gamma(shape, 1.0 / rate))

    # ----------------------------------------------------- seating permutation

    def update_permutation(self) -> None:
        if self.fixed_partition:
            return
        st = self.state
        d = self.design
        k = min(self.cfg.permutation_shuffle_size, d.n)
        positions = self.rng.choice(d.n, size=k, replace=False)
        proposal = st.order.copy()
        proposal[positions] = proposal[self.rng.permutation(positions)]
        current_lp = seating_log_pmf(st.assignment, d.sim, st.order, st.m0)
        proposal_lp = seating_log_pmf(st.assignment, d.sim, proposal, st.m0)
        self.accept_counts["permutation"][1] += 1
        if math.log(self.rng.uniform()) < proposal_lp - current_lp:
            st.order = proposal
            self.accept_counts["permutation"][0] += 1

    # ------------------------------------------------------- cluster parameters

    def update_cluster_params(self) -> None:
        d = self.design
        st = self.state
        resid = d.y - st.omega
        inv_s2 = 1.0 / st.sigma_eps2
        cluster_of_visit = st.assignment[d.ind_of_visit]
        for k in range(st.n_clusters):
            rows = np.nonzero(cluster_of_visit == k)[0]
            xk, hk, rk = d.x[rows], d.h[rows], resid[rows]
            xtx = xk.T @ xk
            hth = hk.T @ hk
            for q in range(d.q):
                partial = rk[:, q] - hk @ st.gamma[k, q]
                precision = inv_s2 * xtx + self._b_inv[q]
                rhs = inv_s2 * (xk.T @ partial) + self._b_inv[q] @ st.e[q]
                st.beta[k, q] = _draw_mvn_from_precision(precision, rhs, self.rng)

                partial = rk[:, q] - xk @ st.beta[k, q]
                precision = inv_s2 * hth + self._lam_inv[q]
                rhs = inv_s2 * (hk.T @ partial) + self._lam_inv[q] @ st.f[q]
                st.gamma[k, q] = _draw_mvn_from_precision(precision, rhs, self.rng)

    # ------------------------------------------------------------- hyper layer

    def update_hyperparams(self) -> None:
        d = self.design
        st = self.state
        hp = self.hyper
        r = st.n_clusters
        for q in range(d.q):
            precision = self._e0_inv + r * self._b_inv[q]
            rhs = self._b_inv[q] @ st.beta[:, q, :].sum(axis=0)
            st.e[q] = _draw_mvn_from_precision(precision, rhs, self.rng)

            dev = st.beta[:, q, :] - st.e[q]
            scale = hp.b0_scale + dev.T @ dev
            scale = 0.5 * (scale + scale.T)
            if _chol_or_none(scale) is None:
                raise NonPDScale("beta-level inverse-Wishart scale lost definiteness")
            st.big_b[q] = sample_invwishart(hp.b0 + r, scale, self.rng)

            precision = self._f0_inv + r * self._lam_inv[q]
            rhs = self._lam_inv[q] @ st.gamma[:, q, :].sum(axis=0)
            st.f[q] = _draw_mvn_from_precision(precision, rhs, self.rng)

            dev = st.gamma[:, q, :] - st.f[q]
            scale = hp.lambda0_scale + dev.T @ dev
            scale = 0.5 * (scale + scale.T)
            if _chol_or_none(scale) is None:
                raise NonPDScale("feature-level inverse-Wishart scale lost definiteness")
            st.lam[q] = sample_invwishart(hp.lambda0 + r, scale, self.rng)
        self._refresh_prior_factors()

    # --------------------------------------------------------- omega per visit

    def update_omega(self) -> None:
        d = self.design
        st = self.state
        means = visit_means(st.assignment, st.beta, st.gamma, d.x, d.h, d.ind_of_visit)
        ytil = d.y - means
        a = np.linalg.inv(np.eye(d.q) + np.linalg.inv(st.sigma_omega))
        a = 0.5 * (a + a.T)
        mu = ytil @ a
        chol = np.linalg.cholesky(st.sigma_eps2 * a)
        st.omega = mu + self.rng.standard_normal(ytil.shape) @ chol.T

    # ------------------------------------------------------- correlation matrix

    def update_sigma_omega(self) -> None:
        d = self.design
        st = self.state
        if d.q < 2:
            return
        pairs = [(a, b) for a in range(d.q) for b in range(a + 1, d.q)]
        a_idx, b_idx = pairs[int(self.rng.integers(len(pairs)))]
        proposal = st.sigma_omega.copy()
        step = self.rng.uniform(-self.cfg.sigma_omega_step, self.cfg.sigma_omega_step)
        proposal[a_idx, b_idx] = proposal[b_idx, a_idx] = proposal[a_idx, b_idx] + step
        self.accept_counts["sigma_omega"][1] += 1
        if abs(proposal[a_idx, b_idx]) >= 1.0 or _chol_or_none(proposal) is None:
            return
        w = st.omega.T @ st.omega
        n_terms = st.omega.shape[0]

        def log_target(corr: np.ndarray) -> float:
            sign, logdet = np.linalg.slogdet(corr)
            if sign <= 0:
                return -math.inf
            quad = np.trace(np.linalg.solve(corr, w)) / st.sigma_eps2
            return (1.0 - n_terms / 2.0) * logdet - 0.5 * quad

        if math.log(self.rng.uniform()) < log_target(proposal) - log_target(st.sigma_omega):
            st.sigma_omega = proposal
            self.accept_counts["sigma_omega"][0] += 1

    # ------------------------------------------------------------ noise variance

    def update_sigma_eps(self) -> None:
        d = self.design
        st = self.state
        hp = self.hyper
        means = visit_means(st.assignment, st.beta, st.gamma, d.x, d.h, d.ind_of_visit)
        resid = d.y - means - st.omega
        nq = resid.size
        shape = hp.g1 + nq / 2.0
        rate = hp.g2 + 0.5 * (resid**2).sum()
        if self.cfg.sigma_eps_mode == "consistent":
            w = st.omega.T @ st.omega
            shape += nq / 2.0
            rate += 0.5 * np.trace(np.linalg.solve(st.sigma_omega, w))
        st.sigma_eps2 = float(rate / self.rng.gamma(shape, 1.0))

    # ------------------------------------------------------------------- driver

    def sweep(self, iteration: int = 0) -> None:
        self.update_partition()
        self.update_mass()
        if (iteration % self.cfg.permutation_interval) == 0:
            self.update_permutation()
        self.update_cluster_params()
        self.update_hyperparams()
        self.update_omega()
        self.update_sigma_omega()
        self.update_sigma_eps()

    def _check_finite(self) -> None:
        st = self.state
        finite = (
            np.isfinite(st.beta).all()
            and np.isfinite(st.gamma).all()
            and np.isfinite(st.omega).all()
            and math.isfinite(st.sigma_eps2)
            and math.isfinite(st.m0)
        )
        if not finite:
            raise NonFiniteLikelihood("sampler state became non-finite")

    def run(self) -> ChainOutput:
        cfg = self.cfg
        store = {
            "assignments": [], "r_n": [], "beta": [], "gamma": [],
            "sigma_omega": [], "sigma_eps2": [], "m0": [],
            "e": [], "big_b": [], "f": [], "lam": [],
        }
        for it in range(cfg.n_iter):
            self.sweep(it)
            if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                self._check_finite()
                st = self.state
                store["assignments"].append(st.assignment.copy())
                store["r_n"].append(st.n_clusters)
                store["beta"].append(st.beta.copy())
                store["gamma"].append(st.gamma.copy())
                store["sigma_omega"].append(st.sigma_omega.copy())
                store["sigma_eps2"].append(st.sigma_eps2)
                store["m0"].append(st.m0)
                store["e"].append(st.e.copy())
                store["big_b"].append(st.big_b.copy())
                store["f"].append(st.f.copy())
                store["lam"].append(st.lam.copy())
        acc = {
            name: (counts[0] / counts[1] if counts[1] else 0.0)
            for name, counts in self.accept_counts.items()
        }
        return ChainOutput(
            assignments=np.array(store["assignments"], dtype=int),
            r_n=np.array(store["r_n"], dtype=int),
            beta=store["beta"],
            gamma=store["gamma"],
            sigma_omega=np.array(store["sigma_omega"]),
            sigma_eps2=np.array(store["sigma_eps2"]),
            m0=np.array(store["m0"]),
            e=np.array(store["e"]),
            big_b=np.array(store["big_b"]),
            f=np.array(store["f"]),
            lam=np.array(store["lam"]),
            acceptance=acc,
            config=cfg,
            individual_ids=self.design.individual_ids
            or [str(i) for i in range(self.design.n)],
            item_names=self.design.item_names or [f"y{q+1}" for q in range(self.design.q)],
            covariate_names=self.design.covariate_names
            or [f"x{s+1}" for s in range(self.design.s)],
        )


def run_chain(
    design: FitDesign,
    cfg: McmcConfig,
    rng: np.random.Generator | None = None,
    hyper: Hyperparams | None = None,
) -> ChainOutput:
    """Run one chain start-to-finish under the given configuration."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    sampler = CombEffectSampler(design, cfg, rng, hyper=hyper)
    return sampler.run()
