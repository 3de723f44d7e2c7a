import re

import numpy as np
import pytest

from mshepard.assembly import assemble
from mshepard.covering import build_covering
from mshepard.experiment import ExperimentConfig, build_nodes
from mshepard.geometry import uniform_nodeset
from mshepard.model import MarketParams
from mshepard.shepard import MultinodeShepard

CONFIGS = ("halton", "uniform", "waldron", "waldron+lines")

_ACCEPTANCE = {}


@pytest.fixture
def market():
    return MarketParams()


@pytest.fixture(scope="session")
def small_nodes():
    return uniform_nodeset(12)


@pytest.fixture(scope="session")
def small_basis(small_nodes):
    return MultinodeShepard(small_nodes, build_covering(small_nodes, 2, 10))


class _Setups:
    """Node set, basis and spatial system per configuration, built once."""

    def __init__(self):
        self._cache = {}

    def __call__(self, name):
        if name not in self._cache:
            cfg = ExperimentConfig(configuration=name)
            nodes = build_nodes(cfg)
            cov = build_covering(nodes, cfg.p, cfg.q)
            basis = MultinodeShepard(nodes, cov)
            self._cache[name] = (nodes, cov, basis, assemble(basis, nodes, cfg.market))
        return self._cache[name]


@pytest.fixture(scope="session")
def setups():
    return _Setups()


@pytest.fixture(scope="session")
def reference_cache(request):
    return request.config.cache.mkdir("mshepard-reference")


@pytest.fixture
def criterion():
    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok
    return record


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)", report.nodeid)
    if m and report.when == "call" and report.failed:
        n = int(m.group(1))
        if n not in _ACCEPTANCE:
            _ACCEPTANCE[n] = f"criterion {n:2d}: FAIL  (raised before reporting)"


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])


def random_triangle_points(rng, count, side=8.0):
    u = rng.random((count, 2))
    flip = u.sum(axis=1) > 1
    u[flip] = 1 - u[flip]
    return side * u


class _Runs:
    """End-to-end experiments per configuration sharing one FD reference.

    The Halton run comes first and computes the reference from scratch, so
    its wall time covers solve, reference and report.
    """

    def __init__(self, out_root):
        self._out = out_root
        self._cache = {}
        self.reference = None
        self.wall = {}

    def __call__(self, name):
        import time
        from mshepard.experiment import run_experiment
        if "halton" not in self._cache and name != "halton":
            self("halton")
        if name not in self._cache:
            cfg = ExperimentConfig(configuration=name, rbf=(name == "halton"))
            t0 = time.perf_counter()
            res = run_experiment(cfg, self._out / name.replace("+", "_"),
                                 reference=self.reference)
            self.wall[name] = time.perf_counter() - t0
            if self.reference is None:
                self.reference = res.reference
            self._cache[name] = res
        return self._cache[name]


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    return _Runs(tmp_path_factory.mktemp("runs"))
