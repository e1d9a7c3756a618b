"""Kernel functions and their gradients with respect to the first argument.

Each kernel is described by a small immutable :class:`KernelSpec` so that
models built on top of it can be serialized without pickling callables.
Three kinds are supported:

``rbf``
    k(x, y) = exp(-w * ||x - y||^2) with precision-style parameter w.
``linear``
    k(x, y) = x . y (parameter free).
``rational-quadratic``
    k(x, y) = (1 + ||x - y||^2 / (2 * alpha * length^2))^(-alpha).

All evaluation routines are pure functions of immutable inputs and safe
for concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("rbf", "linear", "rational-quadratic")


@dataclass(frozen=True)
class KernelSpec:
    """Parameter record for a positive semi-definite kernel.

    Parameters the chosen kind does not use are ignored (a linear kernel
    carries no parameters at all).  Parameters the kind does use must be
    strictly positive.
    """

    kind: str = "rbf"
    width: float = 1.0
    rq_alpha: float = 1.0
    rq_length: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}, expected one of {KINDS}")
        if self.kind == "rbf" and not self.width > 0:
            raise ValueError(f"rbf width must be positive, got {self.width}")
        if self.kind == "rational-quadratic":
            if not self.rq_alpha > 0:
                raise ValueError(f"rational-quadratic alpha must be positive, got {self.rq_alpha}")
            if not self.rq_length > 0:
                raise ValueError(f"rational-quadratic length must be positive, got {self.rq_length}")


def kernel_to_dict(spec: KernelSpec) -> dict:
    """JSON-ready mapping ``{"kind", "w", "alpha", "length"}``."""
    return {
        "kind": spec.kind,
        "w": spec.width,
        "alpha": spec.rq_alpha,
        "length": spec.rq_length,
    }


def kernel_from_dict(obj: dict) -> KernelSpec:
    """Inverse of :func:`kernel_to_dict`; missing parameters default to 1."""
    return KernelSpec(
        kind=obj["kind"],
        width=float(obj.get("w", 1.0)),
        rq_alpha=float(obj.get("alpha", 1.0)),
        rq_length=float(obj.get("length", 1.0)),
    )


def _as_point(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ValueError(f"{name} must be a 1-d point, got shape {x.shape}")
    return x


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = _as_point(x, "x")
    y = _as_point(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: x has {x.size} components, y has {y.size}")
    return x, y


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Evaluate k(x, y) for a single pair of points."""
    x, y = _check_pair(x, y)
    if spec.kind == "linear":
        return float(x @ y)
    sq = float(np.sum((x - y) ** 2))
    if spec.kind == "rbf":
        return float(np.exp(-spec.width * sq))
    base = 1.0 + sq / (2.0 * spec.rq_alpha * spec.rq_length**2)
    return float(base**-spec.rq_alpha)


def kernel_grad_x(spec: KernelSpec, x, y) -> np.ndarray:
    """Gradient of k(., y) at x.

    For the translation-invariant kinds (rbf, rational-quadratic) this is
    antisymmetric under swapping the arguments:
    kernel_grad_x(x, y) = -kernel_grad_x(y, x).
    """
    x, y = _check_pair(x, y)
    if spec.kind == "linear":
        return y.copy()
    diff = x - y
    sq = float(diff @ diff)
    if spec.kind == "rbf":
        return -2.0 * spec.width * np.exp(-spec.width * sq) * diff
    base = 1.0 + sq / (2.0 * spec.rq_alpha * spec.rq_length**2)
    return -(base ** -(spec.rq_alpha + 1.0)) * diff / spec.rq_length**2


def _as_matrix(X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {X.shape}")
    return X


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # ||a||^2 + ||b||^2 - 2 a.b, clamped against tiny negative round-off
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return sq


def kernel_vector(spec: KernelSpec, x0, points) -> np.ndarray:
    """Vector of kernel values (k(x0, p_1), ..., k(x0, p_n))."""
    x0 = _as_point(x0, "x0")
    P = _as_matrix(points, "points")
    if P.shape[1] != x0.size:
        raise ValueError(f"dimension mismatch: x0 has {x0.size} components, points have {P.shape[1]}")
    if spec.kind == "linear":
        return P @ x0
    sq = np.sum((P - x0) ** 2, axis=1)
    if spec.kind == "rbf":
        return np.exp(-spec.width * sq)
    base = 1.0 + sq / (2.0 * spec.rq_alpha * spec.rq_length**2)
    return base**-spec.rq_alpha


def kernel_gram(spec: KernelSpec, points) -> np.ndarray:
    """Symmetric Gram matrix K_ij = k(p_i, p_j)."""
    P = _as_matrix(points, "points")
    if spec.kind == "linear":
        K = P @ P.T
    else:
        sq = _sq_dists(P, P)
        if spec.kind == "rbf":
            K = np.exp(-spec.width * sq)
        else:
            base = 1.0 + sq / (2.0 * spec.rq_alpha * spec.rq_length**2)
            K = base**-spec.rq_alpha
    return 0.5 * (K + K.T)


def kernel_grad_matrix(spec: KernelSpec, x0, points) -> np.ndarray:
    """Stacked gradients; row i is the gradient of k(., p_i) at x0."""
    x0 = _as_point(x0, "x0")
    P = _as_matrix(points, "points")
    if P.shape[1] != x0.size:
        raise ValueError(f"dimension mismatch: x0 has {x0.size} components, points have {P.shape[1]}")
    if spec.kind == "linear":
        return P.copy()
    diff = x0 - P
    sq = np.sum(diff * diff, axis=1)
    if spec.kind == "rbf":
        return -2.0 * spec.width * np.exp(-spec.width * sq)[:, None] * diff
    base = 1.0 + sq / (2.0 * spec.rq_alpha * spec.rq_length**2)
    return -(base ** -(spec.rq_alpha + 1.0))[:, None] * diff / spec.rq_length**2
