"""Kernel-weight design matrix over representative regimens, reduced by PCA.

Every visit's regimen is scored against D representative regimens with the
subset-tree kernel; each row of weights is normalized to sum to one and the
resulting N x D matrix is column-centered and reduced to the leading
principal components that explain the configured share of total variance.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .drugs import DrugDictionary, Regimen
from .errors import DimensionMismatch, NoRepresentatives
from .kernel import KernelConfig, SubtreeScorer, TreeCache, linear_kernel

DEFAULT_VARIANCE_THRESHOLD = 0.999


@dataclass(frozen=True)
class RepresentativeSet:
    """Ordered anchor regimens for the combination-effect smoother."""

    regimens: tuple[Regimen, ...]
    min_visit_threshold: int

    def __post_init__(self):
        if not self.regimens:
            raise NoRepresentatives("representative set must be non-empty")
        if len(set(self.regimens)) != len(self.regimens):
            raise ValueError("duplicate representative regimens")

    def __len__(self) -> int:
        return len(self.regimens)


def select_representatives(
    visit_regimens: list[Regimen | None], threshold: int
) -> RepresentativeSet:
    """All regimens used in strictly more than ``threshold`` visits, in canonical order."""
    counts = Counter(r for r in visit_regimens if r is not None)
    chosen = sorted((r for r, c in counts.items() if c > threshold), key=lambda r: r.text())
    if not chosen:
        raise NoRepresentatives(
            f"no regimen exceeds {threshold} visits; lower the threshold"
        )
    return RepresentativeSet(tuple(chosen), threshold)


class WeightRowBuilder:
    """Computes normalized kernel-weight rows against a fixed representative set."""

    def __init__(
        self,
        reps: RepresentativeSet,
        dictionary: DrugDictionary,
        cfg: KernelConfig,
        kernel: str = "subtree",
    ):
        if kernel not in ("subtree", "linear"):
            raise ValueError(f"unknown kernel {kernel!r}")
        self.reps = reps
        self.dictionary = dictionary
        self.cfg = cfg
        self.kernel = kernel
        self._cache = TreeCache(dictionary)
        self._scorer = SubtreeScorer(cfg)
        self._rep_trees = [self._cache.regimen_tree(r) for r in reps.regimens]

    def raw_row(self, z: Regimen) -> np.ndarray:
        if self.kernel == "linear":
            return np.array([linear_kernel(z, r) for r in self.reps.regimens])
        tz = self._cache.regimen_tree(z)
        return np.array([self._scorer.score(tz, tr) for tr in self._rep_trees])

    def row(self, z: Regimen | None) -> tuple[np.ndarray, bool]:
        """Normalized weight row and a fallback flag.

        Rows with zero total similarity (possible under strict matching) and
        untreated visits fall back to the uniform row so the smoother stays
        defined everywhere; callers can audit the flag.
        """
        d = len(self.reps)
        if z is None:
            return np.full(d, 1.0 / d), True
        raw = self.raw_row(z)
        total = raw.sum()
        if total <= 0.0:
            return np.full(d, 1.0 / d), True
        return raw / total, False


def kernel_weight_row(
    z: Regimen,
    reps: RepresentativeSet,
    dictionary: DrugDictionary,
    cfg: KernelConfig,
) -> tuple[np.ndarray, bool]:
    return WeightRowBuilder(reps, dictionary, cfg).row(z)


@dataclass
class KernelWeightMatrix:
    rows: np.ndarray                      # (N, D), each row sums to 1
    row_index: list[tuple[str, int]]      # (individual_id, visit_index) per row
    fallback: np.ndarray                  # (N,) bool, uniform-fallback rows

    def __post_init__(self):
        if self.rows.ndim != 2:
            raise DimensionMismatch("weight matrix must be 2-D")
        if len(self.row_index) != self.rows.shape[0]:
            raise DimensionMismatch("row index length does not match matrix")


def build_weight_matrix(
    visits: list[tuple[str, int, Regimen | None]],
    reps: RepresentativeSet,
    dictionary: DrugDictionary,
    cfg: KernelConfig,
    kernel: str = "subtree",
) -> KernelWeightMatrix:
    builder = WeightRowBuilder(reps, dictionary, cfg, kernel=kernel)
    rows = np.empty((len(visits), len(reps)))
    flags = np.zeros(len(visits), bool)
    index = []
    for i, (ind, visit, reg) in enumerate(visits):
        rows[i], flags[i] = builder.row(reg)
        index.append((ind, visit))
    return KernelWeightMatrix(rows, index, flags)


@dataclass
class PcaBasis:
    """Column means plus orthonormal loadings for projecting weight rows."""

    column_means: np.ndarray              # (D,)
    loadings: np.ndarray                  # (D, D_star)
    explained_variance_ratio: np.ndarray  # (D_star,)
    d_star: int
    variance_threshold: float
    zero_variance: bool = False
    centering: bool = True

    def project(self, row: np.ndarray) -> np.ndarray:
        row = np.asarray(row, float)
        if row.shape[-1] != self.column_means.shape[0]:
            raise DimensionMismatch(
                f"row length {row.shape[-1]} != D={self.column_means.shape[0]}"
            )
        centered = row - self.column_means if self.centering else row
        return centered @ self.loadings

    def reconstruct(self, projected: np.ndarray) -> np.ndarray:
        base = projected @ self.loadings.T
        return base + self.column_means if self.centering else base


def pca_fit(
    rows: np.ndarray,
    variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD,
    centering: bool = True,
) -> PcaBasis:
    """Column-centered PCA keeping the smallest component count whose
    cumulative explained variance reaches the threshold.

    Loading signs are fixed so each component's largest-magnitude entry is
    positive, making refits bit-reproducible.
    """
    rows = np.asarray(rows, float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise DimensionMismatch("need an (N, D) matrix with N >= 2")
    if not 0.0 < variance_threshold <= 1.0:
        raise ValueError("variance_threshold must be in (0, 1]")
    means = rows.mean(axis=0) if centering else np.zeros(rows.shape[1])
    centered = rows - means
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    var = svals**2
    total = var.sum()
    scale = max(1.0, float(np.abs(rows).max()) ** 2)
    if total <= 1e-24 * scale:
        # all rows identical: keep a single direction, flag the degeneracy
        loadings = np.zeros((rows.shape[1], 1))
        loadings[0, 0] = 1.0
        return PcaBasis(
            column_means=means,
            loadings=loadings,
            explained_variance_ratio=np.array([1.0]),
            d_star=1,
            variance_threshold=variance_threshold,
            zero_variance=True,
            centering=centering,
        )
    ratio = var / total
    cumulative = np.cumsum(ratio)
    d_star = int(np.searchsorted(cumulative, variance_threshold - 1e-12) + 1)
    d_star = min(d_star, len(ratio))
    loadings = vt[:d_star].T.copy()
    for j in range(d_star):
        col = loadings[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            loadings[:, j] = -col
    return PcaBasis(
        column_means=means,
        loadings=loadings,
        explained_variance_ratio=ratio[:d_star],
        d_star=d_star,
        variance_threshold=variance_threshold,
        centering=centering,
    )


def pca_project(basis: PcaBasis, row: np.ndarray) -> np.ndarray:
    return basis.project(row)


@dataclass
class FeatureBasis:
    """Everything needed to featurize an unseen regimen identically to training."""

    representatives: RepresentativeSet
    pca: PcaBasis
    kernel_cfg: KernelConfig
    kernel: str = "subtree"
    _builder: WeightRowBuilder | None = field(default=None, repr=False, compare=False)

    def bind(self, dictionary: DrugDictionary) -> None:
        self._builder = WeightRowBuilder(
            self.representatives, dictionary, self.kernel_cfg, kernel=self.kernel
        )

    def feature_row(self, z: Regimen | None) -> tuple[np.ndarray, bool]:
        if self._builder is None:
            raise RuntimeError("call bind(dictionary) before featurizing")
        row, flagged = self._builder.row(z)
        return self.pca.project(row), flagged

    def to_json(self) -> dict:
        return {
            "representatives": [r.text() for r in self.representatives.regimens],
            "min_visit_threshold": self.representatives.min_visit_threshold,
            "column_means": self.pca.column_means.tolist(),
            "loadings": self.pca.loadings.tolist(),
            "explained_variance_ratio": self.pca.explained_variance_ratio.tolist(),
            "d_star": self.pca.d_star,
            "variance_threshold": self.pca.variance_threshold,
            "zero_variance": self.pca.zero_variance,
            "centering": self.pca.centering,
            "kernel": self.kernel,
            "eta": self.kernel_cfg.eta,
            "match_mode": self.kernel_cfg.match_mode,
        }

    @classmethod
    def from_json(cls, doc: dict, dictionary: DrugDictionary) -> "FeatureBasis":
        from .drugs import parse_regimen

        reps = RepresentativeSet(
            tuple(parse_regimen(t, dictionary) for t in doc["representatives"]),
            doc["min_visit_threshold"],
        )
        pca = PcaBasis(
            column_means=np.asarray(doc["column_means"], float),
            loadings=np.asarray(doc["loadings"], float),
            explained_variance_ratio=np.asarray(doc["explained_variance_ratio"], float),
            d_star=doc["d_star"],
            variance_threshold=doc["variance_threshold"],
            zero_variance=doc["zero_variance"],
            centering=doc["centering"],
        )
        cfg = KernelConfig(eta=doc["eta"], match_mode=doc["match_mode"])
        basis = cls(reps, pca, cfg, kernel=doc["kernel"])
        basis.bind(dictionary)
        return basis

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path, dictionary: DrugDictionary) -> "FeatureBasis":
        with open(path) as fh:
            return cls.from_json(json.load(fh), dictionary)
