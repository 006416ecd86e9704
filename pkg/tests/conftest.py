import os
from pathlib import Path

import pytest

from churnlab.synthetic import write_synthetic_csv

REPO = Path(__file__).resolve().parents[1]
_acceptance: dict[str, list[tuple[str, str, str]]] = {}


def dataset_path() -> Path | None:
    """The public e-commerce churn table, exported to CSV."""
    env = os.environ.get("CHURNLAB_DATASET")
    candidates = [Path(env)] if env else []
    candidates.append(REPO / "data" / "ecommerce.csv")
    for p in candidates:
        if p.is_file():
            return p
    return None


@pytest.fixture(scope="session")
def synthetic_csv(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("synthetic") / "synthetic.csv"
    write_synthetic_csv(path, n_rows=1500, seed=7)
    return path


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
    status = "PASS" if rep.passed else "FAIL"
    _acceptance.setdefault(marker.args[0], []).append((item.name, status, detail))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id): acceptance criterion the test checks")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(_acceptance, key=lambda c: int(c.split(".")[0])):
        parts = _acceptance[cid]
        status = "PASS" if all(s == "PASS" for _, s, _ in parts) else "FAIL"
        tr.write_line(f"criterion {cid}: {status}")
        for name, s, detail in parts:
            tr.write_line(f"    {s} {name}" + (f": {detail}" if detail else ""))
