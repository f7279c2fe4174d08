"""Input validation helpers shared by the estimators and free functions."""

import numpy as np
from sklearn.utils import check_array


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


def check_points(X, dim=None, name="X"):
    """Return ``X`` as a finite float array of shape (n, N) with N >= 2."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=float, ensure_all_finite=True, input_name=name)
    if X.shape[1] < 2:
        raise DomainError(f"{name} must have dimension N >= 2, got {X.shape[1]}")
    if dim is not None and X.shape[1] != dim:
        raise DomainError(f"{name} has dimension {X.shape[1]}, expected {dim}")
    return X


def check_vector(x, dim=None, name="x"):
    return check_points(x, dim=dim, name=name)[0]


def check_unit_rows(V, tol=1e-12, name="normals"):
    norms = np.linalg.norm(V, axis=1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise DomainError(f"{name} must have unit length within {tol}")
    return V


def normalize_rows(V):
    V = np.asarray(V, dtype=float)
    norms = np.linalg.norm(V, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise DomainError("cannot normalize a zero vector")
    return V / norms


def check_lambda(lam, closed=False):
    """Validate a contact parameter, open interval (-1, 1) unless ``closed``."""
    lam = float(lam)
    if not np.isfinite(lam):
        raise DomainError("lambda must be finite")
    if closed:
        if not -1.0 <= lam <= 1.0:
            raise DomainError(f"lambda={lam} outside [-1, 1]")
    elif not -1.0 < lam < 1.0:
        raise DomainError(f"lambda={lam} outside (-1, 1)")
    return lam


def check_dimension(N, minimum=2):
    if int(N) != N or N < minimum:
        raise DomainError(f"dimension must be an integer >= {minimum}, got {N}")
    return int(N)
