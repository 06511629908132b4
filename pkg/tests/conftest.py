import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gauss_solve(A, B):
    """Gaussian elimination with partial pivoting; returns (log|det A|, A^{-1} B).

    Written out element by element so it shares no code with LAPACK.
    """
    A = [list(map(float, row)) for row in A]
    B = np.atleast_2d(np.asarray(B, dtype=float).T).T.copy()
    B = [list(map(float, row)) for row in B]
    n = len(A)
    logdet = 0.0
    for c in range(n):
        p = max(range(c, n), key=lambda r: abs(A[r][c]))
        A[c], A[p] = A[p], A[c]
        B[c], B[p] = B[p], B[c]
        piv = A[c][c]
        logdet += np.log(abs(piv))
        for r in range(c + 1, n):
            f = A[r][c] / piv
            if f == 0.0:
                continue
            for k in range(c, n):
                A[r][k] -= f * A[c][k]
            for k in range(len(B[r])):
                B[r][k] -= f * B[c][k]
    X = [[0.0] * len(B[0]) for _ in range(n)]
    for r in range(n - 1, -1, -1):
        for k in range(len(B[0])):
            s = B[r][k] - sum(A[r][j] * X[j][k] for j in range(r + 1, n))
            X[r][k] = s / A[r][r]
    return logdet, np.array(X)


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    ACCEPTANCE_LINES.append((number, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
