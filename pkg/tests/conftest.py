import numpy as np
import pytest

from kpidiag.tabular import ColumnData, Dataset, DiagnosisConfig


def make_dataset(name="d", **columns):
    """Build a Dataset from keyword columns.

    Lists of str/None become categorical; lists of 0/1/None binary; other numbers numeric.
    """
    cols = []
    for key, vals in columns.items():
        vals = list(vals)
        non_null = [v for v in vals if v is not None]
        if all(isinstance(v, str) for v in non_null) and non_null:
            cols.append((key, ColumnData.categorical(vals)))
        elif all(v in (0, 1) for v in non_null):
            cols.append((key, ColumnData.binary(vals)))
        else:
            cols.append((key, ColumnData.numeric(vals)))
    return Dataset(name, cols)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def basic_config():
    return DiagnosisConfig("fail", ("os",), ("h1", "h2"))


# acceptance criteria outcomes, printed once at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
