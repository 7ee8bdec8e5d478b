import itertools
import sys

import numpy as np
import pytest

from qlease.field import FieldParams
from qlease.rng import make_rng


@pytest.fixture
def rng():
    return make_rng(20240611)


def span_by_enumeration(rows, q, lam):
    """All vectors in the row span, by trying every coefficient tuple."""
    rows = [tuple(int(c) % q for c in r) for r in rows]
    out = set()
    for coeffs in itertools.product(range(q), repeat=len(rows)):
        v = [0] * lam
        for c, r in zip(coeffs, rows):
            for i in range(lam):
                v[i] = (v[i] + c * r[i]) % q
        out.add(tuple(v))
    return out


def dense_fourier_matrix(params: FieldParams) -> np.ndarray:
    """F[y, x] = q^(-lam/2) w^<x,y>, built entry by entry."""
    q, lam = params.q, params.lam
    vecs = list(itertools.product(range(q), repeat=lam))
    w = np.exp(2j * np.pi / q)
    F = np.empty((len(vecs), len(vecs)), dtype=complex)
    for i, y in enumerate(vecs):
        for j, x in enumerate(vecs):
            F[i, j] = w ** (sum(a * b for a, b in zip(x, y)) % q)
    return F / np.sqrt(q ** lam)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
