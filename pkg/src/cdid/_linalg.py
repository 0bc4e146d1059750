import numpy as np


def independent_columns(X: np.ndarray, weights: np.ndarray | None = None, tol: float = 1e-8) -> np.ndarray:
    """Indices of a maximal left-to-right set of linearly independent columns.

    Columns are visited in order; a column is kept when its (weighted) residual
    after projection on the columns already kept is larger than ``tol`` times
    its own norm. Later columns are therefore the ones dropped.
    """
    X = np.asarray(X, dtype=float)
    if weights is not None:
        X = X * np.sqrt(np.asarray(weights, dtype=float))[:, None]
    basis: list[np.ndarray] = []
    keep = []
    for j in range(X.shape[1]):
        v = X[:, j].copy()
        norm0 = np.linalg.norm(v)
        if norm0 == 0:
            continue
        # two passes of Gram-Schmidt for stability
        for _ in range(2):
            for q in basis:
                v -= (q @ v) * q
        r = np.linalg.norm(v)
        if r > tol * norm0:
            basis.append(v / r)
            keep.append(j)
    return np.array(keep, dtype=int)


def weighted_lstsq(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    return coef
