"""Numerical subspace arithmetic and invariant-subspace algorithms.

Every subspace is stored as an orthonormal basis (columns) together with a
relative rank tolerance.  Rank decisions are taken on singular values; a
value counts as nonzero when it exceeds ``tol * max(s_max, scale)`` where
``scale`` is the norm of the map that produced the matrix.  The scale floor
keeps round-off noise in products such as ``(I - P) A`` from being promoted
to genuine directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_TOL = 1e-9

__all__ = [
    "Subspace",
    "image",
    "kernel",
    "full_space",
    "zero_space",
    "subspace_sum",
    "intersect",
    "preimage",
    "map_subspace",
    "orth_complement",
    "contains",
    "equal",
    "is_A_invariant",
    "is_AB_invariant",
    "is_CA_invariant",
    "vstar",
    "vsub",
    "find_friend_F",
    "find_friend_G",
    "controllable_subspace",
    "unobservable_subspace",
]


@dataclass(frozen=True)
class Subspace:
    """A linear subspace of R^n given by orthonormal basis columns."""

    basis: np.ndarray
    tol: float = DEFAULT_TOL
    iterations: int = field(default=0, compare=False)

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim != 2:
            raise ValueError("basis must be a 2-D array")
        if basis.shape[0] == 0:
            raise ValueError("empty ambient space")
        object.__setattr__(self, "basis", basis)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def residual(self, x) -> np.ndarray:
        """Norms of the components of the columns of ``x`` orthogonal to the subspace."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        r = x - self.basis @ (self.basis.T @ x)
        return np.linalg.norm(r, axis=0)

    def member(self, x, scale: float = 0.0) -> bool:
        """Membership of every column of ``x``; the zero vector is always a member."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[1] == 0:
            return True
        bound = self.tol * np.maximum(np.linalg.norm(x, axis=0), scale)
        return bool(np.all(self.residual(x) <= bound))

    def __add__(self, other: "Subspace") -> "Subspace":
        return subspace_sum(self, other)

    def __and__(self, other: "Subspace") -> "Subspace":
        return intersect(self, other)

    def __repr__(self) -> str:
        return f"Subspace(dim={self.dim}, ambient_dim={self.ambient_dim})"


def _as_matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    return M


def _rank(s: np.ndarray, tol: float, scale: float) -> int:
    if s.size == 0:
        return 0
    threshold = tol * max(s[0], scale)
    if threshold == 0.0:
        return 0
    return int(np.sum(s > threshold))


def image(M, tol: float = DEFAULT_TOL, scale: float = 0.0) -> Subspace:
    """Column space of ``M``.  A 1-D input is treated as a single column."""
    M = _as_matrix(M)
    n = M.shape[0]
    if n == 0:
        raise ValueError("empty ambient space")
    if M.shape[1] == 0:
        return zero_space(n, tol)
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    r = _rank(s, tol, scale)
    return Subspace(U[:, :r], tol)


def kernel(M, tol: float = DEFAULT_TOL, scale: float = 0.0) -> Subspace:
    """Null space of ``M``.  A 1-D input is treated as a single row."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[None, :]
    n = M.shape[1]
    if n == 0:
        raise ValueError("empty ambient space")
    if M.shape[0] == 0:
        return full_space(n, tol)
    _, s, Vh = np.linalg.svd(M, full_matrices=True)
    r = _rank(s, tol, scale)
    return Subspace(Vh[r:].T.copy(), tol)


def full_space(n: int, tol: float = DEFAULT_TOL) -> Subspace:
    return Subspace(np.eye(n), tol)


def zero_space(n: int, tol: float = DEFAULT_TOL) -> Subspace:
    return Subspace(np.zeros((n, 0)), tol)


def _check_ambient(*spaces: Subspace) -> int:
    n = spaces[0].ambient_dim
    for V in spaces[1:]:
        if V.ambient_dim != n:
            raise ValueError(
                f"dimension mismatch: ambient dims {n} and {V.ambient_dim}"
            )
    return n


def subspace_sum(V: Subspace, W: Subspace) -> Subspace:
    _check_ambient(V, W)
    tol = max(V.tol, W.tol)
    return image(np.hstack([V.basis, W.basis]), tol, scale=1.0)


def intersect(V: Subspace, W: Subspace) -> Subspace:
    n = _check_ambient(V, W)
    tol = max(V.tol, W.tol)
    if V.dim == 0 or W.dim == 0:
        return zero_space(n, tol)
    # coefficients c with V c in W: kernel of (I - P_W) V
    M = V.basis - W.basis @ (W.basis.T @ V.basis)
    coeffs = kernel(M, tol, scale=1.0)
    return image(V.basis @ coeffs.basis, tol, scale=1.0)


def preimage(A, V: Subspace) -> Subspace:
    """``A^{-1} V = {x : A x in V}``, computed as the kernel of ``(I - P_V) A``."""
    A = np.asarray(A, dtype=float)
    if A.shape[0] != V.ambient_dim:
        raise ValueError("dimension mismatch between map and subspace")
    M = A - V.basis @ (V.basis.T @ A)
    return kernel(M, V.tol, scale=np.linalg.norm(A, 2))


def map_subspace(A, V: Subspace) -> Subspace:
    """``A V``."""
    A = np.asarray(A, dtype=float)
    if A.shape[1] != V.ambient_dim:
        raise ValueError("dimension mismatch between map and subspace")
    if V.dim == 0:
        return zero_space(A.shape[0], V.tol)
    return image(A @ V.basis, V.tol, scale=np.linalg.norm(A, 2))


def orth_complement(V: Subspace) -> Subspace:
    n = V.ambient_dim
    if V.dim == 0:
        return full_space(n, V.tol)
    return kernel(V.basis.T, V.tol, scale=1.0)


def contains(V: Subspace, W: Subspace) -> bool:
    """True iff ``W`` is a subspace of ``V``."""
    _check_ambient(V, W)
    return V.member(W.basis)


def equal(V: Subspace, W: Subspace) -> bool:
    return V.dim == W.dim and contains(V, W) and contains(W, V)


def is_A_invariant(A, V: Subspace) -> bool:
    A = np.asarray(A, dtype=float)
    return V.member(A @ V.basis, scale=np.linalg.norm(A, 2))


def is_AB_invariant(A, B, V: Subspace) -> bool:
    """``A V ⊆ V + Im B``."""
    A = np.asarray(A, dtype=float)
    target = V + image(B, V.tol)
    return target.member(A @ V.basis, scale=np.linalg.norm(A, 2))


def is_CA_invariant(C, A, V: Subspace) -> bool:
    """``A (V ∩ Ker C) ⊆ V``."""
    A = np.asarray(A, dtype=float)
    W = V & kernel(C, V.tol)
    return V.member(A @ W.basis, scale=np.linalg.norm(A, 2))


def vstar(A, B_img: Subspace, H_ker: Subspace) -> Subspace:
    """Maximal (A, B)-invariant subspace contained in ``H_ker``.

    Iterates ``V_i = H ∩ A^{-1}(V_{i-1} + B)`` from ``V_0 = H`` until the
    dimension stops decreasing.  The number of iterations performed is
    stored on the result.
    """
    A = np.asarray(A, dtype=float)
    n = _check_ambient(B_img, H_ker)
    V = H_ker
    for i in range(1, n + 2):
        V_next = H_ker & preimage(A, V + B_img)
        if V_next.dim == V.dim:
            return Subspace(V_next.basis, V_next.tol, iterations=i)
        V = V_next
    raise AssertionError("V* iteration did not stabilise within n steps")


def vsub(A, C_ker: Subspace, E_img: Subspace) -> Subspace:
    """Minimal (C, A)-invariant subspace containing ``E_img``.

    Iterates ``V_i = E + A(V_{i-1} ∩ C)`` from ``V_0 = E``.
    """
    A = np.asarray(A, dtype=float)
    n = _check_ambient(C_ker, E_img)
    V = E_img
    for i in range(1, n + 2):
        V_next = E_img + map_subspace(A, V & C_ker)
        if V_next.dim == V.dim:
            return Subspace(V_next.basis, V_next.tol, iterations=i)
        V = V_next
    raise AssertionError("V_* iteration did not stabilise within n steps")


def find_friend_F(A, B, V: Subspace) -> np.ndarray:
    """Return ``F`` with ``(A + B F) V ⊆ V``.

    ``F`` is zero on the orthogonal complement of ``V``.  On each basis
    vector ``v`` the least-squares split ``A v = V a + B u`` gives
    ``F v = -u``.
    """
    A = np.asarray(A, dtype=float)
    B = _as_matrix(B)
    n, m = B.shape
    if not is_AB_invariant(A, B, V):
        raise ValueError("subspace is not (A, B)-invariant")
    F = np.zeros((m, n))
    if V.dim == 0 or m == 0:
        return F
    M = np.hstack([V.basis, B])
    AV = A @ V.basis
    sol, *_ = np.linalg.lstsq(M, AV, rcond=None)
    resid = np.linalg.norm(M @ sol - AV)
    if resid > 100 * V.tol * max(np.linalg.norm(A, 2), 1.0):
        raise ValueError("decomposition residual too large")
    U = sol[V.dim:]
    F = -U @ V.basis.T
    if not is_A_invariant(A + B @ F, V):
        raise ValueError("decomposition residual too large")
    return F


def find_friend_G(A, C, V: Subspace) -> np.ndarray:
    """Return ``G`` with ``(A + G C) V ⊆ V``, via the dual problem on ``V^⊥``."""
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    if C.ndim == 1:
        C = C[None, :]
    if not is_CA_invariant(C, A, V):
        raise ValueError("subspace is not (C, A)-invariant")
    G = find_friend_F(A.T, C.T, orth_complement(V)).T
    if not is_A_invariant(A + G @ C, V):
        raise ValueError("decomposition residual too large")
    return G


def controllable_subspace(A, E, tol: float = DEFAULT_TOL) -> Subspace:
    """Smallest A-invariant subspace containing ``Im E``."""
    A = np.asarray(A, dtype=float)
    V = image(E, tol)
    for _ in range(A.shape[0] + 1):
        V_next = V + map_subspace(A, V)
        if V_next.dim == V.dim:
            return V_next
        V = V_next
    raise AssertionError("reachable subspace did not stabilise")


def unobservable_subspace(A, H, tol: float = DEFAULT_TOL) -> Subspace:
    """Largest A-invariant subspace contained in ``Ker H``."""
    A = np.asarray(A, dtype=float)
    K = kernel(H, tol)
    W = K
    for _ in range(A.shape[0] + 1):
        W_next = K & preimage(A, W)
        if W_next.dim == W.dim:
            return W_next
        W = W_next
    raise AssertionError("unobservable subspace did not stabilise")
