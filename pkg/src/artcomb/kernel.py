"""Subset-tree and linear kernels over regimen trees.

The subset-tree score between two labeled trees sums, over all node pairs,
a recursive match value: terminal pairs contribute 0; pairs whose children
label multisets differ contribute 0; matching pairs contribute
``eta * prod_s (1 + rho(child_a_s, child_b_s))`` over canonically ordered
child pairs.  The decay factor ``eta`` in (0, 1] damps deep fragments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drugs import DrugDictionary, Regimen
from .trees import Node, RegimenHistory, build_regimen_tree, build_sequence_tree

MATCH_MODES = ("strict", "class_relaxed")


@dataclass(frozen=True)
class KernelConfig:
    """Decay factor and matching rule for the subset-tree kernel.

    ``class_relaxed`` lets two pre-terminal class nodes match whenever their
    class labels agree, ignoring the drug leaves; the default strict rule
    compares children label multisets literally.
    """

    eta: float = 0.5
    match_mode: str = "strict"

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if self.match_mode not in MATCH_MODES:
            raise ValueError(f"match_mode must be one of {MATCH_MODES}")


class SubtreeScorer:
    """Subset-tree kernel evaluator with a match-value cache.

    The cache is keyed on node object identity, so reusing one scorer across
    many tree pairs that share subtrees (episode trees in a history matrix,
    representative trees in a weight matrix) avoids recomputing their scores.
    """

    def __init__(self, cfg: KernelConfig):
        self.cfg = cfg
        self._eta = cfg.eta
        self._relaxed = cfg.match_mode == "class_relaxed"
        self._rho: dict[tuple[int, int], float] = {}
        self._sorted: dict[int, tuple[Node, ...]] = {}

    def _children(self, node: Node) -> tuple[Node, ...]:
        key = id(node)
        got = self._sorted.get(key)
        if got is None:
            got = tuple(sorted(node.children, key=lambda n: n.canon))
            self._sorted[key] = got
        return got

    def rho(self, na: Node, nb: Node) -> float:
        if na.is_leaf or nb.is_leaf:
            return 0.0
        key = (id(na), id(nb))
        cached = self._rho.get(key)
        if cached is not None:
            return cached
        ca = self._children(na)
        cb = self._children(nb)
        if self._relaxed and all(c.is_leaf for c in ca) and all(c.is_leaf for c in cb):
            # class-level match: labels agree, leaf identities ignored
            value = self._eta if (na.label == nb.label and len(ca) == len(cb)) else 0.0
        elif [c.label for c in ca] != [c.label for c in cb]:
            value = 0.0
        else:
            value = self._eta
            for cha, chb in zip(ca, cb):
                value *= 1.0 + self.rho(cha, chb)
        self._rho[key] = value
        return value

    def score(self, a: Node, b: Node) -> float:
        return float(sum(self.rho(na, nb) for na in a.walk() for nb in b.walk()))


def st_kernel(a: Node, b: Node, cfg: KernelConfig) -> float:
    """Subset-tree similarity between two trees; symmetric and non-negative."""
    return SubtreeScorer(cfg).score(a, b)


def regimen_kernel(a: Regimen, b: Regimen, dictionary: DrugDictionary, cfg: KernelConfig) -> float:
    return st_kernel(build_regimen_tree(a, dictionary), build_regimen_tree(b, dictionary), cfg)


def history_similarity(
    h1: RegimenHistory, h2: RegimenHistory, dictionary: DrugDictionary, cfg: KernelConfig
) -> float:
    """Subset-tree score between the two sequence trees.

    Handles histories of different lengths; episode order beyond multiset
    content does not affect the score (children are canonically paired).
    """
    return st_kernel(
        build_sequence_tree(h1, dictionary), build_sequence_tree(h2, dictionary), cfg
    )


class TreeCache:
    """Regimen/sequence tree builder that reuses subtrees across calls."""

    def __init__(self, dictionary: DrugDictionary):
        self.dictionary = dictionary
        self._regimen: dict[Regimen, Node] = {}

    def regimen_tree(self, regimen: Regimen) -> Node:
        tree = self._regimen.get(regimen)
        if tree is None:
            tree = build_regimen_tree(regimen, self.dictionary)
            self._regimen[regimen] = tree
        return tree

    def sequence_tree(self, history: RegimenHistory) -> Node:
        from .trees import SEQUENCE_ROOT
        from .errors import EmptyHistory

        if not history.episodes:
            raise EmptyHistory(f"individual {history.owner!r} has an empty history")
        return Node(SEQUENCE_ROOT, tuple(self.regimen_tree(r) for r in history.episodes))


def history_similarity_matrix(
    histories: list[RegimenHistory], dictionary: DrugDictionary, cfg: KernelConfig
) -> np.ndarray:
    """Dense symmetric matrix of pairwise history similarities."""
    cache = TreeCache(dictionary)
    scorer = SubtreeScorer(cfg)
    trees = [cache.sequence_tree(h) for h in histories]
    n = len(histories)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            out[i, j] = out[j, i] = scorer.score(trees[i], trees[j])
    return out


def regimen_gram(
    regimens: list[Regimen], dictionary: DrugDictionary, cfg: KernelConfig
) -> np.ndarray:
    cache = TreeCache(dictionary)
    scorer = SubtreeScorer(cfg)
    trees = [cache.regimen_tree(r) for r in regimens]
    n = len(regimens)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            out[i, j] = out[j, i] = scorer.score(trees[i], trees[j])
    return out


def linear_kernel(a: Regimen, b: Regimen) -> float:
    """Shared-drug proportion: |a & b| / max(|a|, |b|), in [0, 1]."""
    sa, sb = set(a.drugs), set(b.drugs)
    return len(sa & sb) / max(len(sa), len(sb))
