import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from artcomb.drugs import DrugDictionary, parse_regimen


@pytest.fixture(scope="session")
def default_dict():
    return DrugDictionary.default()


@pytest.fixture(scope="session")
def small_dict():
    """10-drug dictionary used by the oracle-equivalence sweeps."""
    entries = tuple(
        (code, cls, code)
        for code, cls in [
            ("ABC", "NRTI"), ("AZT", "NRTI"), ("D4T", "NRTI"), ("LAM", "NRTI"),
            ("EFV", "NNRTI"), ("NVP", "NNRTI"),
            ("IDV", "PI"), ("RTV", "PI"),
            ("RAL", "INSTI"),
            ("SLZ", "EI"),
        ]
    )
    return DrugDictionary(entries)


@pytest.fixture(scope="session")
def fig2_regimens(default_dict):
    a = parse_regimen("D4T+LAM+EFV", default_dict)
    b = parse_regimen("D4T+LAM+IDV", default_dict)
    c = parse_regimen("FTC+TDF+ATZ+RTV", default_dict)
    return a, b, c
