import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from retrieval_annotator.core import LabelEntry, Taxonomy  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"

_criteria: list[tuple[str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion this test implements")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    outcome = "PASS" if call.excinfo is None else "FAIL"
    text = marker.args[1]
    if hasattr(item, "callspec"):
        text += f" [{item.callspec.id}]"
    _criteria.append((str(marker.args[0]), text, outcome))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    def order(c):
        n = c[0]
        digits = len(n) - len(n.lstrip("0123456789"))
        return int(n[:digits]), n

    for n, text, outcome in sorted(_criteria, key=order):
        terminalreporter.write_line(f"[{outcome}] criterion {n}: {text}")


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def toy_taxonomy():
    """Three labels in the plane: A=(1,0), B=(0,1), C=(0.6,0.8)."""
    return Taxonomy(
        [
            LabelEntry("A", "alpha", "label a", np.array([1.0, 0.0])),
            LabelEntry("B", "beta", "label b", np.array([0.0, 1.0])),
            LabelEntry("C", "gamma", "label c", np.array([0.6, 0.8])),
        ]
    )


class StubEmbedder:
    """Deterministic text -> vector map; counts calls like a remote gateway."""

    def __init__(self, dim=8, table=None, fail=False):
        self.dim = dim
        self.table = dict(table or {})
        self.calls = 0
        self.texts = 0
        self.fail = fail

    def embed_texts(self, texts):
        from retrieval_annotator.errors import ServiceUnreachable

        self.calls += 1
        self.texts += len(texts)
        if self.fail:
            raise ServiceUnreachable("stub is down")
        out = []
        for t in texts:
            if t in self.table:
                out.append(np.asarray(self.table[t], dtype=float))
            else:
                seed = int.from_bytes(t.encode("utf-8")[:8].ljust(8, b"\0"), "little") ^ len(t)
                out.append(np.random.default_rng(seed).normal(size=self.dim))
        return out


@pytest.fixture
def stub_embedder():
    return StubEmbedder
