"""Drug dictionary and regimen parsing.

A regimen is an unordered set of drug codes; the dictionary maps each code
to one of five mechanism classes (NRTI, NNRTI, PI, INSTI, EI).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .errors import DuplicateDrug, EmptyRegimen, UnknownDrug

DRUG_CLASSES = ("NRTI", "NNRTI", "PI", "INSTI", "EI")

# 24 agents across the five classes, codes as used in clinical visit records.
_DEFAULT_ENTRIES = [
    ("ABC", "NRTI", "Abacavir"),
    ("AZT", "NRTI", "Zidovudine"),
    ("D4T", "NRTI", "Stavudine"),
    ("DDC", "NRTI", "Zalcitabine"),
    ("DDI", "NRTI", "Didanosine"),
    ("FTC", "NRTI", "Emtricitabine"),
    ("LAM", "NRTI", "Lamivudine"),
    ("TDF", "NRTI", "Tenofovir Disoproxil Fumarate"),
    ("EFV", "NNRTI", "Efavirenz"),
    ("ETV", "NNRTI", "Etravirine"),
    ("NVP", "NNRTI", "Nevirapine"),
    ("RPV", "NNRTI", "Rilpivirine"),
    ("ATZ", "PI", "Atazanavir"),
    ("DRV", "PI", "Darunavir"),
    ("FPV", "PI", "Fosamprenavir"),
    ("IDV", "PI", "Indinavir"),
    ("LPV", "PI", "Lopinavir"),
    ("NFV", "PI", "Nelfinavir"),
    ("RTV", "PI", "Ritonavir"),
    ("SQV", "PI", "Saquinavir"),
    ("DGT", "INSTI", "Dolutegravir"),
    ("ELV", "INSTI", "Elvitegravir"),
    ("RAL", "INSTI", "Raltegravir"),
    ("SLZ", "EI", "Maraviroc"),
]


@dataclass(frozen=True)
class DrugDictionary:
    """Immutable code -> (class, display name) lookup."""

    entries: tuple[tuple[str, str, str], ...]
    _by_code: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_code = {}
        for code, drug_class, name in self.entries:
            if not code:
                raise ValueError("drug code must be non-empty")
            if code in by_code:
                raise DuplicateDrug(code)
            if drug_class not in DRUG_CLASSES:
                raise ValueError(f"unknown drug class {drug_class!r} for {code!r}")
            by_code[code] = (drug_class, name)
        object.__setattr__(self, "_by_code", by_code)

    def __contains__(self, code: str) -> bool:
        return code in self._by_code

    def drug_class(self, code: str) -> str:
        try:
            return self._by_code[code][0]
        except KeyError:
            raise UnknownDrug(code) from None

    def display_name(self, code: str) -> str:
        try:
            return self._by_code[code][1]
        except KeyError:
            raise UnknownDrug(code) from None

    def codes(self) -> list[str]:
        return [code for code, _, _ in self.entries]

    def codes_by_class(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {c: [] for c in DRUG_CLASSES}
        for code, drug_class, _ in self.entries:
            out[drug_class].append(code)
        return out

    @classmethod
    def default(cls) -> "DrugDictionary":
        return cls(tuple(_DEFAULT_ENTRIES))

    @classmethod
    def from_csv(cls, path_or_buffer) -> "DrugDictionary":
        """Load from CSV with header ``code,class,name``."""
        if isinstance(path_or_buffer, (str,)):
            fh = open(path_or_buffer, newline="")
            close = True
        else:
            fh = path_or_buffer
            close = False
        try:
            reader = csv.DictReader(fh)
            entries = tuple(
                (row["code"].strip(), row["class"].strip(), row.get("name", "").strip())
                for row in reader
            )
        finally:
            if close:
                fh.close()
        return cls(entries)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["code", "class", "name"])
        for code, drug_class, name in self.entries:
            writer.writerow([code, drug_class, name])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


@dataclass(frozen=True, order=True)
class Regimen:
    """A non-empty drug combination, stored with codes in sorted order."""

    drugs: tuple[str, ...]

    def __post_init__(self):
        if not self.drugs:
            raise EmptyRegimen("regimen must contain at least one drug")
        if list(self.drugs) != sorted(set(self.drugs)):
            raise ValueError("Regimen codes must be unique and sorted; use parse_regimen")

    def __len__(self) -> int:
        return len(self.drugs)

    def text(self) -> str:
        return "+".join(self.drugs)

    def __str__(self) -> str:
        return self.text()


def parse_regimen(text: str, dictionary: DrugDictionary) -> Regimen:
    """Parse a plus-separated drug string (e.g. ``"D4T+LAM+NFV"``) into a Regimen.

    Raises UnknownDrug / DuplicateDrug / EmptyRegimen on bad input.
    """
    if text is None or not text.strip():
        raise EmptyRegimen("empty regimen text")
    codes = [tok.strip() for tok in text.split("+")]
    seen = set()
    for code in codes:
        if not code:
            raise EmptyRegimen(f"blank drug token in {text!r}")
        if code not in dictionary:
            raise UnknownDrug(code)
        if code in seen:
            raise DuplicateDrug(code)
        seen.add(code)
    return Regimen(tuple(sorted(seen)))
