import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from miai.dataset import Attribute, Dataset, Schema, builtin_schema, load_csv, preprocess_adult, split
from miai.models import train_decision_tree

DATA = Path(os.environ.get("MIAI_DATA_DIR", Path(__file__).resolve().parents[1] / "data"))
ADULT_CSV = DATA / "adult" / "adult.csv"
GSS_CSV = DATA / "gss" / "gss.csv"


def toy_schema(k=2, m=2, extra=()):
    """Two categorical features, a sensitive attribute with ``k`` values, a target with ``m`` labels."""
    attrs = [
        Attribute("a", "categorical", ("p", "q")),
        Attribute("b", "categorical", ("u", "v", "w")),
        *extra,
        Attribute("s", "categorical", tuple(f"s{i}" for i in range(k)), role="sensitive",
                  positive=f"s{k - 1}"),
        Attribute("y", "categorical", tuple(f"y{i}" for i in range(m)), role="target"),
    ]
    return Schema(tuple(attrs), name="toy")


def toy_dataset(rows, schema=None, provenance="DS_T"):
    schema = schema or toy_schema()
    frame = pd.DataFrame(rows, columns=schema.names)
    return Dataset(schema, frame, provenance)


def random_toy(n, seed=0, k=2, m=2):
    schema = toy_schema(k, m)
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        rows.append({
            "a": rng.choice(["p", "q"]), "b": rng.choice(["u", "v", "w"]),
            "s": f"s{rng.integers(k)}", "y": f"y{rng.integers(m)}",
        })
    return toy_dataset(rows, schema)


@pytest.fixture(scope="session")
def adult_clean():
    if not ADULT_CSV.exists():
        pytest.fail(f"Adult data missing at {ADULT_CSV}; run `miai prepare-data adult --raw ...`")
    return preprocess_adult(load_csv(ADULT_CSV, builtin_schema("adult")))


@pytest.fixture(scope="session")
def adult_split(adult_clean):
    return split(adult_clean, 10_000, 0)


@pytest.fixture(scope="session")
def adult_tree(adult_split):
    return train_decision_tree(adult_split[1])


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
