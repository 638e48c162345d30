"""Tree representations of regimens and regimen histories.

A single regimen becomes a depth-3 tree: a REGIMEN root, one class node per
drug, and one drug-code leaf under each class node.  A history of regimen
episodes becomes one tree whose ART root has the episode trees as children.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .drugs import DrugDictionary, Regimen
from .errors import EmptyHistory

REGIMEN_ROOT = "REGIMEN"
SEQUENCE_ROOT = "ART"


@dataclass(frozen=True)
class Node:
    """Immutable labeled tree node.

    ``canon`` is a serialized form of the subtree used both as a canonical
    sort key for children and as a cheap structural-equality key.
    """

    label: str
    children: tuple["Node", ...] = ()
    canon: str = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.children:
            inner = " ".join(ch.canon for ch in self.children)
            canon = f"({self.label} {inner})"
        else:
            canon = f"({self.label})"
        object.__setattr__(self, "canon", canon)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def walk(self) -> list["Node"]:
        """All nodes in pre-order."""
        out = [self]
        for ch in self.children:
            out.extend(ch.walk())
        return out

    def depth(self) -> int:
        if not self.children:
            return 1
        return 1 + max(ch.depth() for ch in self.children)


def build_regimen_tree(regimen: Regimen, dictionary: DrugDictionary) -> Node:
    """Depth-3 tree: REGIMEN root, one class node per drug, one leaf per drug.

    Children are stored in canonical order (class label, then drug code).
    """
    class_nodes = [
        Node(dictionary.drug_class(code), (Node(code),)) for code in regimen.drugs
    ]
    class_nodes.sort(key=lambda n: n.canon)
    return Node(REGIMEN_ROOT, tuple(class_nodes))


@dataclass(frozen=True)
class RegimenHistory:
    """Ordered regimen episodes for one individual (first-use order)."""

    owner: str
    episodes: tuple[Regimen, ...]

    def __len__(self) -> int:
        return len(self.episodes)


def history_from_visits(
    owner: str,
    visit_regimens: list[Regimen | None],
    collapse_duplicates: bool = True,
) -> RegimenHistory:
    """Build a history from per-visit regimens.

    Visits with no recorded treatment (None) are skipped.  Consecutive exact
    duplicates collapse into one episode unless ``collapse_duplicates`` is off.
    """
    episodes: list[Regimen] = []
    for reg in visit_regimens:
        if reg is None:
            continue
        if collapse_duplicates and episodes and episodes[-1] == reg:
            continue
        episodes.append(reg)
    if not episodes:
        raise EmptyHistory(f"individual {owner!r} has no treated visits")
    return RegimenHistory(owner, tuple(episodes))


def build_sequence_tree(history: RegimenHistory, dictionary: DrugDictionary) -> Node:
    """ART root whose children are the episode regimen trees, in episode order."""
    if not history.episodes:
        raise EmptyHistory(f"individual {history.owner!r} has an empty history")
    children = tuple(build_regimen_tree(reg, dictionary) for reg in history.episodes)
    return Node(SEQUENCE_ROOT, children)
