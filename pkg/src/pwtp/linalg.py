"""Batched solves for small symmetric positive definite systems."""

import numpy as np


class SingularBasisError(ValueError):
    pass


def _find_bad_index(mats: np.ndarray) -> int:
    for i in range(mats.shape[0]):
        try:
            np.linalg.cholesky(mats[i])
        except np.linalg.LinAlgError:
            return i
    return -1


def spd_solve_batch(mats: np.ndarray, rhs: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """Solve (M_b + ridge*I) z_b = rhs_b for a stack of small SPD matrices.

    mats: (B, D, D) symmetric, rhs: (B, D, C). Uses Cholesky; a non-positive
    pivot after the ridge raises SingularBasisError naming the batch index.
    """
    mats = np.asarray(mats, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise ValueError(f"expected (B, D, D) matrices, got {mats.shape}")
    if rhs.ndim != 3 or rhs.shape[0] != mats.shape[0] or rhs.shape[1] != mats.shape[1]:
        raise ValueError(f"rhs shape {rhs.shape} does not match matrices {mats.shape}")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    reg = mats + ridge * np.eye(mats.shape[1])
    try:
        chol = np.linalg.cholesky(reg)
    except np.linalg.LinAlgError:
        raise SingularBasisError(
            f"singular basis at batch index {_find_bad_index(reg)}"
        ) from None
    w = np.linalg.solve(chol, rhs)
    return np.linalg.solve(np.swapaxes(chol, -1, -2), w)
