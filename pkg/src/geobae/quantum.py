"""Linear quantum systems in quadrature form.

Conventions: hbar = 1, quadratures ordered ``[q1, p1, ..., qn, pn]`` with
CCR ``x x^T - (x x^T)^T = i Sigma_n``.  Each field channel carries the pair
``W_j = [Q_j, P_j]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "SIGMA",
    "sigma",
    "permutation",
    "QuadratureSystem",
    "AnnihilationSystem",
    "RealizabilityReport",
    "build_system",
    "check_physical_realizability",
    "to_annihilation",
    "from_annihilation",
    "is_passive",
    "is_passive_direct",
]

SIGMA = np.array([[0.0, 1.0], [-1.0, 0.0]])

_REL_TOL = 1e-9
_ABS_FLOOR = 1e-12


def sigma(n: int) -> np.ndarray:
    """Block-diagonal symplectic form ``Sigma_n`` of size 2n."""
    return np.kron(np.eye(n), SIGMA)


def permutation(n: int) -> np.ndarray:
    """``P_n`` with ``P_n z = [z1, z3, ..., z_{2n-1}, z2, z4, ..., z_{2n}]``."""
    order = np.r_[np.arange(0, 2 * n, 2), np.arange(1, 2 * n, 2)]
    return np.eye(2 * n)[order]


def _tolerance(A) -> float:
    return max(_REL_TOL * max(1.0, np.linalg.norm(A, 2)), _ABS_FLOOR)


@dataclass(frozen=True)
class QuadratureSystem:
    """``dx = A x + sum_j B_j W_j + b f``, ``W_j^out = C_j x + W_j``.

    ``E`` (disturbance column) and ``H`` (regulated row) are optional and
    only used by the disturbance-decoupling machinery.
    """

    A: np.ndarray
    B_list: tuple = ()
    C_list: tuple = ()
    b: Optional[np.ndarray] = None
    E: Optional[np.ndarray] = None
    H: Optional[np.ndarray] = None
    units: str = "rad/s"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[0] != A.shape[1] or A.shape[0] % 2:
            raise ValueError("A must be square with even dimension")
        Bs = tuple(np.asarray(B, dtype=float).reshape(A.shape[0], 2) for B in self.B_list)
        Cs = tuple(np.asarray(C, dtype=float).reshape(2, A.shape[0]) for C in self.C_list)
        if len(Bs) != len(Cs):
            raise ValueError("B_list and C_list must have the same length")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B_list", Bs)
        object.__setattr__(self, "C_list", Cs)
        for name in ("b", "E"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float).reshape(-1))
        if self.H is not None:
            object.__setattr__(self, "H", np.asarray(self.H, dtype=float).reshape(1, -1))

    @property
    def n_modes(self) -> int:
        return self.A.shape[0] // 2

    @property
    def n_channels(self) -> int:
        return len(self.B_list)

    @property
    def B(self) -> np.ndarray:
        """All channel input matrices side by side (2n x 2m)."""
        if not self.B_list:
            return np.zeros((self.A.shape[0], 0))
        return np.hstack(self.B_list)

    @property
    def C(self) -> np.ndarray:
        if not self.C_list:
            return np.zeros((0, self.A.shape[0]))
        return np.vstack(self.C_list)

    def to_dict(self) -> dict:
        d = {
            "units": self.units,
            "n_modes": self.n_modes,
            "A": self.A.tolist(),
            "B_list": [B.tolist() for B in self.B_list],
            "C_list": [C.tolist() for C in self.C_list],
        }
        for name in ("b", "E", "H"):
            v = getattr(self, name)
            d[name] = None if v is None else v.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QuadratureSystem":
        allowed = {"units", "n_modes", "A", "B_list", "C_list", "b", "E", "H"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown keys in system description: {sorted(unknown)}")
        if "units" not in d:
            raise ValueError("system description requires a 'units' key")
        if d["units"] != "rad/s":
            raise ValueError("system matrices must be given in rad/s")
        sys = cls(
            A=d["A"],
            B_list=tuple(d.get("B_list", ())),
            C_list=tuple(d.get("C_list", ())),
            b=d.get("b"),
            E=d.get("E"),
            H=d.get("H"),
        )
        if "n_modes" in d and d["n_modes"] != sys.n_modes:
            raise ValueError("n_modes does not match the size of A")
        return sys

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "QuadratureSystem":
        return cls.from_dict(json.loads(text))


def build_system(R, couplings: Sequence = (), b=None) -> QuadratureSystem:
    """System generated by Hamiltonian ``x^T R x / 2`` and couplings ``L_j = c_j^T x``.

    ``A = Sigma_n (R + sum_j C_j^T Sigma C_j / 2)``, ``B_j = Sigma_n C_j^T Sigma``,
    ``C_j = sqrt(2) [Re c_j, Im c_j]^T``.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape[0] != R.shape[1] or R.shape[0] % 2:
        raise ValueError("R must be square with even dimension")
    if not np.allclose(R, R.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(R).max())):
        raise ValueError("R must be symmetric")
    R = (R + R.T) / 2
    Sn = sigma(R.shape[0] // 2)
    Cs = []
    for c in couplings:
        c = np.asarray(c, dtype=complex).reshape(-1)
        if c.size != R.shape[0]:
            raise ValueError("coupling vector has wrong length")
        Cs.append(np.sqrt(2.0) * np.vstack([c.real, c.imag]))
    drift = R.copy()
    for C in Cs:
        drift = drift + C.T @ SIGMA @ C / 2
    A = Sn @ drift
    Bs = [Sn @ C.T @ SIGMA for C in Cs]
    return QuadratureSystem(A, tuple(Bs), tuple(Cs), b=b)


@dataclass(frozen=True)
class RealizabilityReport:
    residual_dyn: float
    residual_coupling: float
    tolerance: float
    passed: bool

    def __bool__(self):
        return self.passed


def check_physical_realizability(sys: QuadratureSystem) -> RealizabilityReport:
    """Residuals of ``A Sn + Sn A^T + sum_j B_j S B_j^T = 0`` and ``B_j = Sn C_j^T S``.

    The sum runs over the channel list as given, so repeated channels count
    with their multiplicity.
    """
    A = sys.A
    Sn = sigma(sys.n_modes)
    dyn = A @ Sn + Sn @ A.T
    coupling = 0.0
    for B, C in zip(sys.B_list, sys.C_list):
        dyn = dyn + B @ SIGMA @ B.T
        coupling = max(coupling, float(np.linalg.norm(B - Sn @ C.T @ SIGMA, 2)))
    residual_dyn = float(np.linalg.norm(dyn, 2))
    tol = _tolerance(A)
    return RealizabilityReport(
        residual_dyn, coupling, tol, residual_dyn < tol and coupling < tol
    )


@dataclass(frozen=True)
class AnnihilationSystem:
    """Blocks of the annihilation-operator form.

    Each full matrix is ``[[X_minus, X_plus], [conj(X_plus), conj(X_minus)]]``.
    """

    A_minus: np.ndarray
    A_plus: np.ndarray
    B_minus: np.ndarray
    B_plus: np.ndarray
    C_minus: np.ndarray
    C_plus: np.ndarray
    D_minus: np.ndarray
    D_plus: np.ndarray
    extras: dict = field(default_factory=dict, compare=False)

    @staticmethod
    def _full(minus, plus):
        return np.block([[minus, plus], [plus.conj(), minus.conj()]])

    @property
    def A(self):
        return self._full(self.A_minus, self.A_plus)

    @property
    def B(self):
        return self._full(self.B_minus, self.B_plus)

    @property
    def C(self):
        return self._full(self.C_minus, self.C_plus)

    @property
    def D(self):
        return self._full(self.D_minus, self.D_plus)


def _split(X_tilde: np.ndarray, rows: int, cols: int):
    """Recover (X_minus, X_plus) from the permuted real matrix."""
    X11 = X_tilde[:rows, :cols]
    X12 = X_tilde[:rows, cols:]
    X21 = X_tilde[rows:, :cols]
    X22 = X_tilde[rows:, cols:]
    minus = (X11 + X22) / 2 + 1j * (X21 - X12) / 2
    plus = (X11 - X22) / 2 + 1j * (X21 + X12) / 2
    return minus, plus


def _merge(minus: np.ndarray, plus: np.ndarray) -> np.ndarray:
    """Permuted real matrix built from (X_minus, X_plus)."""
    return np.block(
        [
            [minus.real + plus.real, plus.imag - minus.imag],
            [minus.imag + plus.imag, minus.real - plus.real],
        ]
    )


def to_annihilation(sys: QuadratureSystem, D=None) -> AnnihilationSystem:
    n, m = sys.n_modes, sys.n_channels
    Pn, Pm = permutation(n), permutation(m)
    D = np.eye(2 * m) if D is None else np.asarray(D, dtype=float)
    A_m, A_p = _split(Pn @ sys.A @ Pn.T, n, n)
    B_m, B_p = _split(Pn @ sys.B @ Pm.T, n, m)
    C_m, C_p = _split(Pm @ sys.C @ Pn.T, m, n)
    D_m, D_p = _split(Pm @ D @ Pm.T, m, m)
    extras = {"b": sys.b, "E": sys.E, "H": sys.H}
    return AnnihilationSystem(A_m, A_p, B_m, B_p, C_m, C_p, D_m, D_p, extras)


def from_annihilation(ann: AnnihilationSystem) -> QuadratureSystem:
    n = ann.A_minus.shape[0]
    m = ann.B_minus.shape[1]
    Pn, Pm = permutation(n), permutation(m)
    A = Pn.T @ _merge(ann.A_minus, ann.A_plus) @ Pn
    B = Pn.T @ _merge(ann.B_minus, ann.B_plus) @ Pm
    C = Pm.T @ _merge(ann.C_minus, ann.C_plus) @ Pn
    Bs = tuple(B[:, 2 * j:2 * j + 2] for j in range(m))
    Cs = tuple(C[2 * j:2 * j + 2, :] for j in range(m))
    ex = ann.extras
    return QuadratureSystem(A, Bs, Cs, b=ex.get("b"), E=ex.get("E"), H=ex.get("H"))


def is_passive(sys: QuadratureSystem) -> bool:
    """Quadrature passivity test ``Sn A Sn = -A`` and ``Sn B Sm = -B``."""
    if not check_physical_realizability(sys).passed:
        raise ValueError("system is not physically realizable")
    Sn, Sm = sigma(sys.n_modes), sigma(sys.n_channels)
    tol = _tolerance(sys.A)
    ok_A = np.linalg.norm(Sn @ sys.A @ Sn + sys.A, 2) < tol
    ok_B = np.linalg.norm(Sn @ sys.B @ Sm + sys.B, 2) < tol
    return bool(ok_A and ok_B)


def is_passive_direct(R_K, R1, R2) -> bool:
    """Passivity of a direct-interaction controller ``(R_K, R1, R2)``."""
    R_K = np.atleast_2d(np.asarray(R_K, dtype=float))
    R1 = np.atleast_2d(np.asarray(R1, dtype=float))
    R2 = np.atleast_2d(np.asarray(R2, dtype=float))
    tol = _tolerance(np.vstack([R_K, R2.T]) if R2.size else R_K)
    if np.linalg.norm(R_K - R_K.T) > tol or np.linalg.norm(R1.T - R2) > tol:
        raise ValueError("direct-interaction controller violates R_K = R_K^T, R1^T = R2")
    nk, n = R_K.shape[0] // 2, R2.shape[1] // 2
    Sk, Sn = sigma(nk), sigma(n)
    ok_K = np.linalg.norm(Sk @ R_K @ Sk + R_K) < tol
    ok_2 = np.linalg.norm(Sk @ R2 @ Sn + R2) < tol
    return bool(ok_K and ok_2)
