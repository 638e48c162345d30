"""Probability model core: partition prior, parameter containers, likelihood.

The clustering prior seats individuals sequentially in a random order; at
each step the new individual joins an existing subset with probability
proportional to its summed treatment-history similarity to that subset's
earlier members, or opens a new subset with mass-parameter weight.  With a
constant similarity function the prior collapses to the ordinary Chinese
restaurant process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteLikelihood

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class SimilarityContext:
    """Pairwise history similarities, seating order, and mass parameter."""

    s_matrix: np.ndarray    # (n, n) symmetric, non-negative
    order: np.ndarray       # permutation of 0..n-1; order[t] seats at step t+1
    m0: float

    def __post_init__(self):
        s = np.asarray(self.s_matrix, float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise DimensionMismatch("similarity matrix must be square")
        if not np.isfinite(s).all() or (s < 0).any():
            raise ValueError("similarities must be finite and non-negative")
        if not np.allclose(s, s.T):
            raise ValueError("similarity matrix must be symmetric")
        order = np.asarray(self.order)
        if sorted(order.tolist()) != list(range(s.shape[0])):
            raise ValueError("order must be a permutation of 0..n-1")
        if self.m0 <= 0:
            raise ValueError("mass parameter must be positive")
        self.s_matrix = s
        self.order = order

    @property
    def n(self) -> int:
        return self.s_matrix.shape[0]


def seating_log_pmf(
    assignment: np.ndarray, s_matrix: np.ndarray, order: np.ndarray, m0: float
) -> float:
    """Seating-prior log pmf from raw arrays (no validation; hot path)."""
    return float(_seating_terms_raw(assignment, s_matrix, order, m0).sum())


def _seating_terms(assignment: np.ndarray, ctx: SimilarityContext) -> np.ndarray:
    return _seating_terms_raw(assignment, ctx.s_matrix, ctx.order, ctx.m0)


def _seating_terms_raw(
    assignment: np.ndarray, s_matrix: np.ndarray, order: np.ndarray, m0: float
) -> np.ndarray:
    """Per-step log conditionals of the seating product (step 1 contributes 0)."""
    n = len(order)
    s_ord = s_matrix[np.ix_(order, order)]
    c_ord = np.asarray(assignment)[order]
    lower = np.tri(n, n, -1, dtype=bool)
    same = (c_ord[:, None] == c_ord[None, :]) & lower
    denom = np.where(lower, s_ord, 0.0).sum(axis=1)
    num = np.where(same, s_ord, 0.0).sum(axis=1)
    cnt = same.sum(axis=1)
    steps = np.arange(n, dtype=float)  # step t has t predecessors
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)
        fallback = np.where(steps > 0, cnt / np.where(steps > 0, steps, 1.0), 0.0)
        ratio = np.where(denom > 0, ratio, fallback)
        join = np.log(steps) - np.log(m0 + steps) + np.log(ratio)
        new = math.log(m0) - np.log(m0 + steps)
    terms = np.where(cnt == 0, new, join)
    terms[0] = 0.0
    return terms


def ddcrp_log_pmf(assignment: np.ndarray, ctx: SimilarityContext) -> float:
    """Log probability of a partition under the similarity-weighted seating prior.

    Steps whose predecessors all have zero similarity fall back to uniform
    within-subset weights, keeping the pmf normalized.
    """
    assignment = np.asarray(assignment)
    if assignment.shape[0] != ctx.n:
        raise DimensionMismatch("assignment length != similarity matrix size")
    return float(_seating_terms(assignment, ctx).sum())


def ddcrp_sample(ctx: SimilarityContext, rng: np.random.Generator) -> np.ndarray:
    """One partition draw by sequential seating in the context's order."""
    n = ctx.n
    assignment = np.full(n, -1, dtype=int)
    clusters: list[list[int]] = []
    for t in range(n):
        i = ctx.order[t]
        if t == 0:
            clusters.append([i])
            assignment[i] = 0
            continue
        predecessors = ctx.order[:t]
        sims = ctx.s_matrix[i, predecessors]
        denom = sims.sum()
        weights = np.empty(len(clusters) + 1)
        for k, members in enumerate(clusters):
            if denom > 0:
                in_k = ctx.s_matrix[i, members].sum()
                weights[k] = (t / (ctx.m0 + t)) * (in_k / denom)
            else:
                weights[k] = (t / (ctx.m0 + t)) * (len(members) / t)
        weights[-1] = ctx.m0 / (ctx.m0 + t)
        weights /= weights.sum()
        choice = int(rng.choice(len(weights), p=weights))
        if choice == len(clusters):
            clusters.append([i])
        else:
            clusters[choice].append(i)
        assignment[i] = choice
    return assignment


@dataclass
class ClusterParams:
    """Per-cluster regression coefficients: covariate block and feature block."""

    beta: np.ndarray        # (Q, S)
    gamma_star: np.ndarray  # (Q, D_star)

    def __post_init__(self):
        if not (np.isfinite(self.beta).all() and np.isfinite(self.gamma_star).all()):
            raise ValueError("cluster parameters must be finite")


@dataclass
class Partition:
    """Cluster assignment with stacked per-cluster parameter arrays."""

    assignment: np.ndarray  # (n,) ints in 0..r-1
    beta: np.ndarray        # (r, Q, S)
    gamma_star: np.ndarray  # (r, Q, D_star)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        r = self.beta.shape[0]
        if self.gamma_star.shape[0] != r:
            raise DimensionMismatch("beta/gamma cluster counts differ")
        labels = np.unique(self.assignment)
        if len(labels) != r or labels.min() != 0 or labels.max() != r - 1:
            raise ValueError("cluster ids must be contiguous 0..r-1 and non-empty")

    @property
    def n_clusters(self) -> int:
        return self.beta.shape[0]


@dataclass
class NoiseState:
    """Item-correlation deviations and noise scales."""

    omega: np.ndarray        # (N, Q)
    sigma_omega: np.ndarray  # (Q, Q) correlation matrix
    sigma_eps2: float

    def __post_init__(self):
        q = self.sigma_omega.shape[0]
        if self.sigma_omega.shape != (q, q):
            raise DimensionMismatch("sigma_omega must be square")
        if not np.allclose(np.diag(self.sigma_omega), 1.0):
            raise ValueError("sigma_omega must have a unit diagonal")
        if self.sigma_eps2 <= 0:
            raise ValueError("sigma_eps2 must be positive")


@dataclass
class Hyperparams:
    """Fixed hyperprior constants; the latent (e, B, f, Lambda) layer is sampled."""

    c0: float
    d0: float
    g1: float
    g2: float
    e0_cov: np.ndarray       # (S, S) prior covariance of the beta-level mean
    b0: float                # inverse-Wishart df for the beta-level covariance
    b0_scale: np.ndarray     # (S, S) inverse-Wishart scale
    f0_cov: np.ndarray       # (D_star, D_star)
    lambda0: float
    lambda0_scale: np.ndarray  # (D_star, D_star)

    def __post_init__(self):
        s = self.e0_cov.shape[0]
        d = self.f0_cov.shape[0]
        if self.b0 <= s - 1:
            raise ValueError("b0 must exceed S-1")
        if self.lambda0 <= d - 1:
            raise ValueError("lambda0 must exceed D_star-1")
        for name, mat in [
            ("e0_cov", self.e0_cov),
            ("b0_scale", self.b0_scale),
            ("f0_cov", self.f0_cov),
            ("lambda0_scale", self.lambda0_scale),
        ]:
            if not np.allclose(mat, mat.T):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(mat).min() <= 0:
                raise ValueError(f"{name} must be positive definite")

    @classmethod
    def defaults(cls, s: int, d_star: int) -> "Hyperparams":
        """Diffuse conjugate settings: unit gamma/inverse-gamma shapes, 100-scaled
        normal covariances, minimal inverse-Wishart degrees of freedom."""
        return cls(
            c0=1.0,
            d0=1.0,
            g1=1.0,
            g2=1.0,
            e0_cov=100.0 * np.eye(s),
            b0=float(s + 1),
            b0_scale=np.linalg.inv(100.0 * np.eye(s)),
            f0_cov=100.0 * np.eye(d_star),
            lambda0=float(d_star + 1),
            lambda0_scale=np.linalg.inv(100.0 * np.eye(d_star)),
        )


def combination_effect(gamma_star: np.ndarray, h_row: np.ndarray) -> np.ndarray:
    """Regimen-specific outcome contribution: gamma_star @ h_row."""
    gamma_star = np.asarray(gamma_star, float)
    h_row = np.asarray(h_row, float)
    if gamma_star.shape[-1] != h_row.shape[-1]:
        raise DimensionMismatch(
            f"gamma_star columns {gamma_star.shape[-1]} != feature length {h_row.shape[-1]}"
        )
    return gamma_star @ h_row


def visit_means(
    assignment: np.ndarray,
    beta: np.ndarray,
    gamma_star: np.ndarray,
    x: np.ndarray,
    h: np.ndarray,
    ind_of_visit: np.ndarray,
) -> np.ndarray:
    """Mean outcome per visit: beta_c X + gamma_c Htilde, stacked (N, Q)."""
    cv = assignment[ind_of_visit]
    return np.einsum("ns,nqs->nq", x, beta[cv]) + np.einsum(
        "nd,nqd->nq", h, gamma_star[cv]
    )


def log_likelihood(
    y: np.ndarray,
    means: np.ndarray,
    omega: np.ndarray,
    sigma_eps2: float,
) -> float:
    """Gaussian visit likelihood with isotropic noise around mean + omega."""
    resid = y - means - omega
    if not np.isfinite(resid).all() or sigma_eps2 <= 0:
        raise NonFiniteLikelihood("degenerate likelihood inputs")
    nq = resid.size
    return float(
        -0.5 * nq * (LOG_2PI + math.log(sigma_eps2)) - (resid**2).sum() / (2.0 * sigma_eps2)
    )
