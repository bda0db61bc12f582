import zlib

import numpy as np
import pytest

from srconc import chains, measures

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def name_seed(name: str) -> int:
    """Stable small seed for a fixture name (hash() is per-process)."""
    return zlib.crc32(name.encode()) % 2**16

K3_EDGES = [(0, 1), (1, 2), (0, 2)]
K4_EDGES = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
C5_EDGES = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]


def random_projection_kernel(n: int, rank: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, rank)))
    return q @ q.T


def build_fixture_measures() -> dict:
    """The SR fixture families the acceptance criteria quantify over.

    Keys map to (measure, k) with k the homogeneity degree used in the
    1/(2k) gap bound; non-homogeneous entries carry k = n/2.
    """
    out = {}
    for n, k in [(2, 1), (3, 1), (4, 2), (5, 2), (6, 3), (6, 1), (5, 3)]:
        out[f"uniform_{n}_{k}"] = (measures.make_uniform_k_subsets(n, k), float(k))
    out["trees_k3"] = (measures.make_spanning_tree_measure(K3_EDGES), 2.0)
    out["trees_k4"] = (measures.make_spanning_tree_measure(K4_EDGES), 3.0)
    out["trees_c5"] = (measures.make_spanning_tree_measure(C5_EDGES), 4.0)
    for n, seed in [(4, 11), (5, 12), (6, 13)]:
        kern = random_projection_kernel(n, 2, seed)
        out[f"dpp_{n}"] = (measures.make_projection_dpp(kern), 2.0)
    out["cube_2"] = (measures.make_bernoulli_product([0.5, 0.5]), 1.0)
    out["bern_4"] = (measures.make_bernoulli_product([0.3, 0.6, 0.8, 0.5]), 2.0)
    return out


@pytest.fixture(scope="session")
def fixture_measures():
    return build_fixture_measures()


@pytest.fixture(scope="session")
def fixture_walks(fixture_measures):
    """Normalized hermon_salez walks, built once per session."""
    return {name: chains.hermon_salez(m)
            for name, (m, _) in fixture_measures.items()}
