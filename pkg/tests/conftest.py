import sys
from pathlib import Path

import numpy as np
from hypothesis import settings, strategies as st

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@st.composite
def edge_lists(draw, min_n=1, max_n=12, weighted=False):
    n = draw(st.integers(min_n, max_n))
    pairs = st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda p: p[0] != p[1])
    edges = draw(st.lists(pairs, max_size=3 * n))
    weights = None
    if weighted:
        weights = draw(st.lists(st.floats(0.1, 5.0), min_size=len(edges), max_size=len(edges)))
    return n, edges, weights


@st.composite
def graphs_with_features(draw, max_n=10, d=3):
    n, edges, _ = draw(edge_lists(min_n=2, max_n=max_n))
    seed = draw(st.integers(0, 2**31))
    x = np.random.default_rng(seed).standard_normal((n, d))
    return n, edges, x


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "SUMMARY", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
