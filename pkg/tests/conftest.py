import numpy as np
import pytest

from pwtp.projector import MlpConfig, PwtpConfig
from pwtp.rng import Rng


def gauss_solve(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Dense Gaussian elimination with partial pivoting (independent oracle)."""
    a = np.array(mat, dtype=np.float64)
    b = np.array(rhs, dtype=np.float64)
    if b.ndim == 1:
        b = b[:, None]
    n = a.shape[0]
    for col in range(n):
        piv = col + np.argmax(np.abs(a[col:, col]))
        a[[col, piv]] = a[[piv, col]]
        b[[col, piv]] = b[[piv, col]]
        for row in range(col + 1, n):
            factor = a[row, col] / a[col, col]
            a[row, col:] -= factor * a[col, col:]
            b[row] -= factor * b[col]
    x = np.zeros_like(b)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1 :] @ x[row + 1 :]) / a[row, row]
    return x.reshape(np.shape(rhs))


def gauss_rank(mat: np.ndarray, tol: float = 1e-10) -> int:
    """Row-reduction rank (independent of SVD-based checks)."""
    a = np.array(mat, dtype=np.float64)
    rows, cols = a.shape
    rank, row = 0, 0
    for col in range(cols):
        piv = row + np.argmax(np.abs(a[row:, col]))
        if abs(a[piv, col]) < tol:
            continue
        a[[row, piv]] = a[[piv, row]]
        for r in range(rows):
            if r != row:
                a[r] -= a[r, col] / a[row, col] * a[row]
        row += 1
        rank += 1
        if row == rows:
            break
    return rank


def random_spd(rng: Rng, d: int) -> np.ndarray:
    m = rng.uniform_array((d, d), -1.0, 1.0)
    return m @ m.T + d * np.eye(d)


@pytest.fixture
def small_cfg():
    """Tiny projector configuration used by gradient checks."""
    return PwtpConfig(T=4, D=1, k=3, s=2, c_prime=4,
                      mlp=MlpConfig(r=2, beta=0.25, blocks=1), ridge=1e-6)


@pytest.fixture
def default_cfg():
    return PwtpConfig()
