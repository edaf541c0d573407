"""Input validation helpers shared by the estimators and pure functions."""

import numpy as np

from .exceptions import DomainError

SYM_TOL = 1e-9
PSD_TOL = 1e-9


def check_vector(x, size=None, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {x.shape}")
    if size is not None and x.shape[0] != size:
        raise ValueError(f"{name} must have length {size}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_points(X, dim=None, name="X", min_points=0):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and dim is not None and X.shape[0] == dim:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D (n_points, dim), got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"{name} must have {dim} columns, got {X.shape[1]}")
    if X.shape[0] < min_points:
        raise ValueError(f"{name} needs at least {min_points} points, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_covariance(P, size=None, name="P", tol=PSD_TOL):
    """Validate a symmetric PSD matrix and return it as a float array.

    Raises DomainError for asymmetric or indefinite input.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"{name} must be square, got shape {P.shape}")
    if size is not None and P.shape[0] != size:
        raise ValueError(f"{name} must be {size}x{size}, got {P.shape}")
    if not np.all(np.isfinite(P)):
        raise DomainError(f"{name} contains non-finite values")
    scale = max(1.0, float(np.max(np.abs(P))))
    if np.max(np.abs(P - P.T)) > tol * scale:
        raise DomainError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(0.5 * (P + P.T))[0] < -tol * scale:
        raise DomainError(f"{name} is not positive semidefinite")
    return P


def symmetrize(P):
    return 0.5 * (P + np.swapaxes(P, -1, -2))
