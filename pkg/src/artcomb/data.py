"""Longitudinal dataset container and CSV input/output.

Visits CSV layout: ``individual_id,visit_index,regimen,y1..yQ,x1..xS`` with
an empty regimen cell meaning no treatment recorded at that visit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .drugs import DrugDictionary, Regimen, parse_regimen
from .errors import DimensionMismatch
from .trees import RegimenHistory, history_from_visits


@dataclass
class LongitudinalDataset:
    """Visit-level outcomes, covariates and regimens, sorted by individual.

    Rows are grouped by individual (contiguous) and ordered by visit index;
    ``ind_of_visit`` maps each row to the individual's position in ``ids``.
    """

    ids: list[str]                     # n individual identifiers
    y: np.ndarray                      # (N, Q)
    x: np.ndarray                      # (N, S), first column 1
    regimens: list[Regimen | None]     # length N
    visit_index: np.ndarray            # (N,), per-visit index within individual
    ind_of_visit: np.ndarray           # (N,), individual position per row
    item_names: list[str]
    covariate_names: list[str]

    def __post_init__(self):
        n_rows = self.y.shape[0]
        if not (
            self.x.shape[0] == n_rows
            and len(self.regimens) == n_rows
            and self.ind_of_visit.shape[0] == n_rows
        ):
            raise DimensionMismatch("visit arrays disagree on row count")
        if not np.isfinite(self.y).all() or not np.isfinite(self.x).all():
            raise ValueError("outcomes and covariates must be finite")
        if self.x.shape[1] >= 1 and not np.allclose(self.x[:, 0], 1.0):
            raise ValueError("the first covariate column is the intercept and must be 1")
        counts = np.bincount(self.ind_of_visit, minlength=len(self.ids))
        if (counts == 0).any():
            raise ValueError("every individual needs at least one visit")

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def n_visits(self) -> int:
        return self.y.shape[0]

    @property
    def q(self) -> int:
        return self.y.shape[1]

    @property
    def s(self) -> int:
        return self.x.shape[1]

    def visit_rows(self, individual_pos: int) -> np.ndarray:
        return np.nonzero(self.ind_of_visit == individual_pos)[0]

    def visit_tuples(self) -> list[tuple[str, int, Regimen | None]]:
        return [
            (self.ids[self.ind_of_visit[r]], int(self.visit_index[r]), self.regimens[r])
            for r in range(self.n_visits)
        ]

    def histories(self, collapse_duplicates: bool = True) -> list[RegimenHistory]:
        """Per-individual regimen episode histories derived from visit order."""
        out = []
        for pos, ident in enumerate(self.ids):
            rows = self.visit_rows(pos)
            regs = [self.regimens[r] for r in rows]
            out.append(history_from_visits(ident, regs, collapse_duplicates))
        return out


def load_visits_csv(path, dictionary: DrugDictionary) -> LongitudinalDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if header[:3] != ["individual_id", "visit_index", "regimen"]:
        raise ValueError("visits CSV must start with individual_id,visit_index,regimen")
    item_names = [h for h in header[3:] if h.startswith("y")]
    covariate_names = [h for h in header[3:] if h.startswith("x")]
    q, s = len(item_names), len(covariate_names)
    if q == 0 or s == 0:
        raise ValueError("expected y* outcome and x* covariate columns")

    parsed = []
    for row in rows:
        ident, visit, reg_text = row[0], int(row[1]), row[2].strip()
        reg = parse_regimen(reg_text, dictionary) if reg_text else None
        yvals = [float(v) for v in row[3 : 3 + q]]
        xvals = [float(v) for v in row[3 + q : 3 + q + s]]
        parsed.append((ident, visit, reg, yvals, xvals))
    parsed.sort(key=lambda t: (t[0], t[1]))

    ids = []
    ind_of_visit = []
    for ident, *_ in parsed:
        if not ids or ids[-1] != ident:
            ids.append(ident)
        ind_of_visit.append(len(ids) - 1)

    return LongitudinalDataset(
        ids=ids,
        y=np.array([p[3] for p in parsed]),
        x=np.array([p[4] for p in parsed]),
        regimens=[p[2] for p in parsed],
        visit_index=np.array([p[1] for p in parsed]),
        ind_of_visit=np.array(ind_of_visit),
        item_names=item_names,
        covariate_names=covariate_names,
    )


def save_visits_csv(path, data: LongitudinalDataset) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["individual_id", "visit_index", "regimen"] + data.item_names + data.covariate_names
        )
        for r in range(data.n_visits):
            reg = data.regimens[r]
            writer.writerow(
                [
                    data.ids[data.ind_of_visit[r]],
                    int(data.visit_index[r]),
                    reg.text() if reg is not None else "",
                ]
                + [repr(float(v)) for v in data.y[r]]
                + [repr(float(v)) for v in data.x[r]]
            )


def load_histories_csv(path, dictionary: DrugDictionary) -> list[RegimenHistory]:
    """Visit-level history file: ``individual_id,visit_index,regimen``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        per_ind: dict[str, list[tuple[int, Regimen | None]]] = {}
        for row in reader:
            reg_text = row["regimen"].strip()
            reg = parse_regimen(reg_text, dictionary) if reg_text else None
            per_ind.setdefault(row["individual_id"], []).append(
                (int(row["visit_index"]), reg)
            )
    out = []
    for ident in sorted(per_ind):
        visits = [reg for _, reg in sorted(per_ind[ident], key=lambda t: t[0])]
        out.append(history_from_visits(ident, visits))
    return out


def save_histories_csv(path, histories: list[RegimenHistory]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["individual_id", "visit_index", "regimen"])
        for hist in histories:
            for j, reg in enumerate(hist.episodes):
                writer.writerow([hist.owner, j, reg.text()])
