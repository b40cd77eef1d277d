import numpy as np
import pytest
import torch

from genretransfer.networks import Discriminator, Generator, GenreClassifierNet, init_weights


@pytest.fixture
def tiny_nets():
    g = torch.Generator().manual_seed(0)
    return (
        init_weights(Generator(width=8, n_res_blocks=2), g),
        init_weights(Discriminator(width=8), g),
        init_weights(GenreClassifierNet(width=8), g),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one PASS/FAIL line per acceptance criterion, printed after the run
_criteria: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid, title): acceptance criterion checked by this test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = _markers.get(report.nodeid)
    if marker is None:
        return
    cid, title = marker
    entry = _criteria.setdefault(cid, {"title": title, "ok": True, "tests": 0})
    entry["tests"] += 1
    entry["ok"] = entry["ok"] and report.outcome == "passed"


_markers: dict[str, tuple[str, str]] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _markers[item.nodeid] = tuple(m.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_criteria, key=lambda c: (len(c), c)):
        e = _criteria[cid]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {cid:<3} {status}  {e['title']} ({e['tests']} checks)")
