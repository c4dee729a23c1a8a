"""Orthogonal-decomposition least squares shared by the model fitters."""
import numpy as np
import scipy.linalg


def lstsq_qr(A: np.ndarray, b: np.ndarray, ridge: float = 0.0) -> tuple[np.ndarray, int]:
    """Minimize ``|A x - b|^2 + ridge |x|^2`` by pivoted QR.

    Returns ``(x, rank)`` where rank is that of the (augmented) matrix; the
    caller decides what to do with a deficient rank.
    """
    M, p = A.shape
    if ridge > 0:
        A = np.vstack([A, np.sqrt(ridge) * np.eye(p)])
        b = np.concatenate([b, np.zeros(p)])
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(A.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    x = np.zeros(p)
    if rank:
        z = scipy.linalg.solve_triangular(R[:rank, :rank], (Q.T @ b)[:rank])
        x[piv[:rank]] = z
    return x, rank
