"""Back-action-evading controller synthesis for the opto-mechanical sensor.

Two layers live here.  ``ddp_controller`` is the generic dynamic-feedback
disturbance-decoupling construction for any ``(A, B, C, E, H)``.  The rest
of the module specialises it to the opto-mechanical plant, where the
controller must also be a physical quantum system: the coherent-feedback
scheme (3-port cavity, two-channel controller, pi/2 phase shifters) and the
direct-interaction scheme (Hamiltonian coupling to a 1-port plant).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from . import subspace as ss
from .quantum import SIGMA, QuadratureSystem, build_system, sigma

__all__ = [
    "PARAM_NAMES",
    "PHASE_SHIFTER",
    "PlantSpec",
    "SolvabilityReport",
    "ControllerFamily",
    "CoherentController",
    "DirectController",
    "ClosedLoop",
    "build_optomech_plant",
    "check_solvability",
    "ddp_controller",
    "synthesize_family",
    "passive_assignment",
    "active_direct_assignment",
    "apply_realizability_constraints",
    "controller_matrices",
    "cavity_controller",
    "phase_shifter",
    "assemble_coherent_loop",
    "assemble_direct_loop",
    "open_loop",
]

PARAM_NAMES = (
    "f11", "f12", "f14", "f24",
    "g12", "g22", "g31", "g32",
    "n11", "n12", "n14", "n21", "n22", "n24",
)

# pi/2 phase shifter in quadrature form
PHASE_SHIFTER = np.array([[0.0, -1.0], [1.0, 0.0]])

_CONSTRAINT_TOL = 1e-10
_INCONSISTENT_TOL = 1e-8


def phase_shifter(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class PlantSpec:
    """Opto-mechanical plant parameters, all in rad/s.

    ``gamma`` is the force-coupling rate; it also enters the mechanical
    damping when ``include_damping`` is set.
    """

    omega_m: float
    kappa: float
    gamma: float
    g: float
    ports: int = 1
    include_damping: bool = False

    def __post_init__(self):
        for name in ("omega_m", "kappa", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.g < 0:
            raise ValueError("g must be nonnegative")
        if self.ports not in (1, 3):
            raise ValueError("ports must be 1 or 3")


def build_optomech_plant(spec: PlantSpec) -> QuadratureSystem:
    """Oscillator ``(q1, p1)`` coupled to a cavity ``(q2, p2)`` with ``ports`` identical ports."""
    wm, k, g = spec.omega_m, spec.kappa, spec.g
    R = np.array(
        [
            [wm, 0, -g, 0],
            [0, wm, 0, 0],
            [-g, 0, 0, 0],
            [0, 0, 0, 0],
        ],
        dtype=float,
    )
    c = np.sqrt(k / 2) * np.array([0, 0, 1, 1j])
    base = build_system(R, [c] * spec.ports)
    A = base.A.copy()
    if spec.include_damping:
        A[1, 1] = -spec.gamma
    b = np.sqrt(spec.gamma) * np.array([0.0, 1.0, 0.0, 0.0])
    E = -np.sqrt(k) * np.array([0.0, 0.0, 1.0, 0.0])
    H = np.sqrt(k) * np.array([[0.0, 0.0, 0.0, 1.0]])
    return QuadratureSystem(A, base.B_list, base.C_list, b=b, E=E, H=H)


@dataclass(frozen=True)
class SolvabilityReport:
    V_star: ss.Subspace
    V_sub: ss.Subspace
    solvable: bool


def check_solvability(plant=None, *, A=None, B=None, C=None, E=None, H=None,
                      tol: float = ss.DEFAULT_TOL) -> SolvabilityReport:
    """Dynamic-feedback disturbance decoupling is solvable iff ``V_*(C, E) ⊆ V*(B, H)``.

    ``plant`` may be a :class:`QuadratureSystem`; its first channel supplies
    ``B`` and ``C``.  Explicit keyword matrices take precedence.
    """
    if plant is not None:
        A = plant.A if A is None else A
        B = plant.B_list[0] if B is None else B
        C = plant.C_list[0] if C is None else C
        E = plant.E if E is None else E
        H = plant.H if H is None else H
    if E is None or H is None:
        raise ValueError("solvability needs both a disturbance E and a regulated output H")
    if A is None or B is None or C is None:
        raise ValueError("solvability needs A, B and C")
    V_sub = ss.vsub(A, ss.kernel(C, tol), ss.image(E, tol))
    V_star = ss.vstar(A, ss.image(B, tol), ss.kernel(H, tol))
    return SolvabilityReport(V_star, V_sub, ss.contains(V_star, V_sub))


def ddp_controller(A, B, C, E, H, D_K=None, V1=None, V2=None,
                   tol: float = ss.DEFAULT_TOL) -> dict:
    """Generic dynamic controller solving disturbance decoupling.

    Uses the pair ``(V1, V2) = (V_*, V*)`` unless given.  Returns a dict
    with ``A_K, B_K, C_K, D_K`` and the intermediate ``F, G, N, V1, V2``.
    ``F`` (and ``D_K`` when not supplied) are minimum-norm solutions of the
    linear conditions ``F in F(V2)``, ``Ker(F - D_K C) ⊇ V1``; then ``G``
    solves ``G in G(V1)``, ``Im(G - B D_K) ⊆ V2``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    n, m = B.shape
    p = C.shape[0]
    if V1 is None or V2 is None:
        rep = check_solvability(A=A, B=B, C=C, E=E, H=H, tol=tol)
        if not rep.solvable:
            raise ValueError("disturbance decoupling is not solvable")
        V1 = rep.V_sub if V1 is None else V1
        V2 = rep.V_star if V2 is None else V2
    if not ss.contains(V2, V1):
        raise ValueError("V1 must be contained in V2")

    Q2 = np.eye(n) - V2.projector
    Q1 = np.eye(n) - V1.projector
    free_dk = D_K is None
    nd = m * p if free_dk else 0
    # vec(X) is row-major below: vec(B F v) = kron(B, v^T) vec(F)
    rows, rhs = [], []
    for v in V2.basis.T:
        rows.append(np.hstack([Q2 @ np.kron(B, v[None, :]), np.zeros((n, nd))]))
        rhs.append(-Q2 @ A @ v)
    for v in V1.basis.T:
        Fv = np.kron(np.eye(m), v[None, :])
        if free_dk:
            rows.append(np.hstack([Fv, -np.kron(np.eye(m), (C @ v)[None, :])]))
            rhs.append(np.zeros(m))
        else:
            rows.append(Fv)
            rhs.append(np.asarray(D_K, dtype=float) @ C @ v)
    sol = _solve_linear(rows, rhs, (m * n + nd,))
    F = sol[: m * n].reshape(m, n)
    D_K = sol[m * n:].reshape(m, p) if free_dk else np.asarray(D_K, dtype=float)

    rows, rhs = [], []
    for v in V1.basis.T:
        rows.append(Q1 @ np.kron(np.eye(n), (C @ v)[None, :]))
        rhs.append(-Q1 @ A @ v)
    for j in range(p):
        e = np.zeros(p)
        e[j] = 1.0
        rows.append(Q2 @ np.kron(np.eye(n), e[None, :]))
        rhs.append(Q2 @ B @ D_K @ e)
    G = _solve_linear(rows, rhs, (n, p))

    W = (V2 & ss.orth_complement(V1)).basis
    N = W.T
    N_plus = W
    F0 = F - D_K @ C
    G0 = G - B @ D_K
    A_K = N @ (A + B @ F0 + G @ C) @ N_plus
    B_K = -N @ G0
    C_K = F0 @ N_plus
    return dict(A_K=A_K, B_K=B_K, C_K=C_K, D_K=D_K, F=F, G=G, N=N, V1=V1, V2=V2)


def _solve_linear(rows, rhs, shape):
    if not rows:
        return np.zeros(shape)
    M = np.vstack(rows)
    r = np.concatenate(rhs)
    x, *_ = np.linalg.lstsq(M, r, rcond=None)
    scale = max(1.0, np.linalg.norm(M, 2) * np.linalg.norm(x), np.linalg.norm(r))
    if np.linalg.norm(M @ x - r) > 1e-8 * scale:
        raise ValueError("friend conditions are inconsistent")
    return x.reshape(shape)


# --- opto-mechanical controller families -----------------------------------


@dataclass(frozen=True)
class ControllerFamily:
    """Parametrised BAE controllers for one scheme.

    ``params`` is ``None`` until :func:`apply_realizability_constraints`
    resolves a point on the constraint manifold.
    """

    scheme: str
    spec: PlantSpec
    plant: QuadratureSystem
    V1: ss.Subspace
    V2: ss.Subspace
    D_K: np.ndarray
    params: Optional[Mapping[str, float]] = None
    constraint_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def dim_xk(self) -> int:
        return self.V2.dim - self.V1.dim

    @property
    def realizable(self) -> bool:
        r = self.constraint_residuals
        return self.params is not None and r.size > 0 and float(np.max(np.abs(r))) < _CONSTRAINT_TOL

    def _p(self, params):
        params = self.params if params is None else params
        if params is None:
            raise ValueError("family parameters are unresolved")
        return params

    def F(self, params=None) -> np.ndarray:
        p = self._p(params)
        rk = np.sqrt(self.spec.kappa)
        f13 = -rk if self.scheme == "coherent" else 0.0
        return np.array(
            [
                [p["f11"], p["f12"], f13, p["f14"]],
                [self.spec.g / rk, 0.0, 0.0, p["f24"]],
            ]
        )

    def G(self, params=None) -> np.ndarray:
        p = self._p(params)
        rk = np.sqrt(self.spec.kappa)
        g42 = rk if self.scheme == "coherent" else 0.0
        return np.array(
            [
                [0.0, p["g12"]],
                [-self.spec.g / rk, p["g22"]],
                [p["g31"], p["g32"]],
                [0.0, g42],
            ]
        )

    def N(self, params=None) -> np.ndarray:
        p = self._p(params)
        return np.array(
            [
                [p["n11"], p["n12"], 0.0, p["n14"]],
                [p["n21"], p["n22"], 0.0, p["n24"]],
            ]
        )

    def residuals(self, params=None) -> np.ndarray:
        """Scaled residuals of the seven realizability constraints."""
        p = self._p(params)
        return _constraint_residuals(self.scheme, self.spec, p)

    def manifold_dimension(self, params=None) -> int:
        """Local dimension of the constraint set at ``params`` (all 14 parameters)."""
        p = dict(self._p(params))
        J = _jacobian(self.scheme, self.spec, p, PARAM_NAMES)
        return len(PARAM_NAMES) - int(np.linalg.matrix_rank(J, tol=1e-8))


def _constraint_residuals(scheme: str, spec: PlantSpec, p) -> np.ndarray:
    wm, k, g = spec.omega_m, spec.kappa, spec.g
    rk = np.sqrt(k)
    if scheme == "coherent":
        decay, offset = 1.5 * k, rk
    else:
        decay, offset = 0.5 * k, 0.0
    n1 = p["n11"] * p["n24"] - p["n14"] * p["n21"]
    n2 = p["n12"] * p["n24"] - p["n14"] * p["n22"]
    a = decay + rk * p["f24"]
    # scaled so every entry is dimensionless
    return np.array(
        [
            (p["f12"] + p["g12"]) / rk,
            (p["f11"] - p["g22"]) / rk,
            p["n11"] * p["n22"] - p["n12"] * p["n21"] + 1.0,
            (p["f12"] * n1 - p["f11"] * n2 + p["f14"]) / rk,
            (p["f24"] + offset - g / rk * n2) / rk,
            (a * n1 + wm * n2 + rk * p["f11"]) / k,
            (wm * n1 - a * n2 - rk * p["f12"]) / k,
        ]
    )


def _jacobian(scheme, spec, p, names) -> np.ndarray:
    # constraints are polynomial, so the complex step is exact
    h = 1e-30
    cols = []
    for name in names:
        q = {key: complex(v) for key, v in p.items()}
        q[name] += 1j * h
        cols.append(_constraint_residuals(scheme, spec, q).imag / h)
    return np.array(cols).T if cols else np.zeros((7, 0))


def synthesize_family(spec: PlantSpec, scheme: str) -> ControllerFamily:
    """Geometric step: plant, ``(V1, V2) = (V_*, V*)`` and the parameter templates.

    The coherent scheme runs on the 3-port plant and the direct scheme on the
    1-port plant, whatever ``spec.ports`` says.
    """
    if scheme not in ("coherent", "direct"):
        raise ValueError("scheme must be 'coherent' or 'direct'")
    ports = 3 if scheme == "coherent" else 1
    spec = replace(spec, ports=ports)
    plant = build_optomech_plant(spec)
    rep = check_solvability(plant)
    if not rep.solvable:
        raise ValueError("BAE problem is not solvable for this plant")
    D_K = -np.eye(2) if scheme == "coherent" else np.zeros((2, 2))
    return ControllerFamily(scheme, spec, plant, rep.V_sub, rep.V_star, D_K)


def _passive_seed(family: ControllerFamily, theta: float = 0.0) -> dict:
    spec = family.spec
    wm, k, g = spec.omega_m, spec.kappa, spec.g
    rk = np.sqrt(k)
    c, s = np.cos(theta), np.sin(theta)
    # with n11 = 1, n12 = 0 the constraints reduce to a cubic in n14
    roots = np.roots([g * g, g * k, wm * wm + k * k / 4 + g * g, g * k / 2])
    real = roots[np.abs(roots.imag) <= 1e-9 * max(1.0, np.abs(roots).max())].real
    t = float(real[np.argmin(np.abs(real))]) if real.size else 0.0
    a = k / 2 + g * t
    n24 = -wm * t / a
    p = dict(
        f11=0.0, f12=g / rk, f14=-g / rk * n24,
        f24=g / rk * t - (rk if family.scheme == "coherent" else 0.0),
        g12=-g / rk, g22=0.0, g31=0.0, g32=0.0,
        n11=1.0, n12=0.0, n14=t, n21=0.0, n22=-1.0, n24=n24,
    )
    if theta:
        # rotate the N rows; the n14/n24 pair follows from the solver
        p.update(n11=c, n12=s, n21=s, n22=-c)
    return p


def passive_assignment(family: ControllerFamily, theta: float = 0.0) -> dict:
    """Passive choice ``f12 = g/sqrt(kappa)``, ``f11 = 0``, ``n11 = -n22``, ``n12 = n21``.

    ``theta`` fixes the remaining phase freedom: ``n11 = cos theta``,
    ``n12 = sin theta``.
    """
    g, rk = family.spec.g, np.sqrt(family.spec.kappa)
    c, s = np.cos(theta), np.sin(theta)
    return dict(f11=0.0, f12=g / rk, n11=c, n12=s, n21=s, n22=-c)


def active_direct_assignment() -> dict:
    """Direct-scheme active controller with ``g_B = g_D = g/2``."""
    return dict(f11=0.0, f12=0.0, f14=0.0, n11=1.0, n22=-1.0, n12=0.0, n21=0.0)


def apply_realizability_constraints(family: ControllerFamily,
                                    assignments: Mapping[str, float],
                                    seed: Optional[Mapping[str, float]] = None,
                                    max_iter: int = 100) -> ControllerFamily:
    """Solve the realizability constraints for the unassigned parameters.

    Damped Gauss-Newton with minimum-norm steps, started from the passive
    solution (or ``seed``).  Raises ``ValueError`` when the assignment admits
    no solution.
    """
    unknown = set(assignments) - set(PARAM_NAMES)
    if unknown:
        raise ValueError(f"unknown parameters: {sorted(unknown)}")
    theta = 0.0
    if {"n11", "n12"} <= set(assignments):
        theta = float(np.arctan2(assignments["n12"], assignments["n11"]))
    p = dict(_passive_seed(family, theta) if seed is None else seed)
    p.update({key: float(v) for key, v in assignments.items()})
    free = [name for name in PARAM_NAMES if name not in assignments]

    def resid(q):
        return _constraint_residuals(family.scheme, family.spec, q)

    r = resid(p)
    norm = np.linalg.norm(r)
    for _ in range(max_iter):
        if norm < 1e-14 or not free:
            break
        J = _jacobian(family.scheme, family.spec, p, free)
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        lam = 1.0
        while lam > 1e-8:
            trial = dict(p)
            for name, dx in zip(free, step):
                trial[name] += lam * dx
            r_trial = resid(trial)
            if np.linalg.norm(r_trial) < norm:
                break
            lam /= 2
        else:
            break
        p, r = trial, r_trial
        new_norm = np.linalg.norm(r)
        converged = norm - new_norm <= 1e-16 * max(1.0, norm)
        norm = new_norm
        if converged:
            break
    if np.max(np.abs(r)) > _INCONSISTENT_TOL:
        raise ValueError(
            f"inconsistent assignment: constraint residual {np.max(np.abs(r)):.3e}"
        )
    return replace(family, params={name: float(p[name]) for name in PARAM_NAMES},
                   constraint_residuals=r)


@dataclass(frozen=True)
class CoherentController:
    A_K: np.ndarray
    B_K: np.ndarray
    C_K: np.ndarray
    channels: int = 2

    def as_system(self) -> QuadratureSystem:
        return QuadratureSystem(self.A_K, (self.B_K,) * self.channels,
                                (self.C_K,) * self.channels)


@dataclass(frozen=True)
class DirectController:
    R_K: np.ndarray
    R1: np.ndarray
    R2: np.ndarray


def _right_inverse(family: ControllerFamily, N: np.ndarray) -> np.ndarray:
    V2 = family.V2.basis
    NV = N @ V2
    if np.linalg.matrix_rank(NV, tol=1e-10 * max(1.0, np.linalg.norm(NV, 2))) < N.shape[0]:
        raise ValueError("N is not of full row rank on V2")
    if not ss.equal(ss.intersect(ss.kernel(N), family.V2), family.V1):
        raise ValueError("Ker N restricted to V2 differs from V1")
    return V2 @ np.linalg.pinv(NV)


def controller_matrices(family: ControllerFamily):
    """Controller realised by a resolved family member.

    Coherent: ``A_K = N(A + B F0 + G C + G0 F0)N+``, ``B_K = -N G0 S``,
    ``C_K = S F0 N+`` with ``F0 = F - D_K C``, ``G0 = G - B D_K`` and
    ``S`` the 2x2 symplectic form.  Direct: ``R_K = -S N(A + BF + GC)N+``,
    ``R1 = -S_2 B F N+``, ``R2 = S N G C``.
    """
    if family.params is None:
        raise ValueError("family parameters are unresolved")
    plant = family.plant
    A, B, C = plant.A, plant.B_list[0], plant.C_list[0]
    F, G, N = family.F(), family.G(), family.N()
    N_plus = _right_inverse(family, N)
    if family.scheme == "coherent":
        F0 = F - family.D_K @ C
        G0 = G - B @ family.D_K
        A_K = N @ (A + B @ F0 + G @ C + G0 @ F0) @ N_plus
        B_K = -N @ G0 @ SIGMA
        C_K = SIGMA @ F0 @ N_plus
        return CoherentController(A_K, B_K, C_K)
    R_K = -SIGMA @ N @ (A + B @ F + G @ C) @ N_plus
    R1 = -sigma(2) @ B @ F @ N_plus
    R2 = SIGMA @ N @ G @ C
    return DirectController(R_K, R1, R2)


def cavity_controller(kappa_K: float, detuning: float) -> CoherentController:
    """Single-mode two-port cavity with per-port decay ``kappa_K`` and detuning ``Delta``."""
    if kappa_K < 0:
        raise ValueError("kappa_K must be nonnegative")
    c = np.sqrt(kappa_K / 2) * np.array([1.0, 1j])
    sysK = build_system(detuning * np.eye(2), [c, c])
    return CoherentController(sysK.A, sysK.B_list[0], sysK.C_list[0])


# --- closed loops -------------------------------------------------------------


@dataclass(frozen=True)
class ClosedLoop:
    """``dx = A_E x + B_E W_1 + b_E f``, ``W_out = C_E x + D_E W_1``.

    The back-action input is column 0 of ``B_E`` (Q) and the measured
    quadrature is row 1 of ``C_E`` (P).
    """

    A_E: np.ndarray
    B_E: np.ndarray
    C_E: np.ndarray
    D_E: np.ndarray
    b_E: np.ndarray
    n_plant: int
    scheme: str
    conforming: bool = True
    omega_ref: float = 1.0

    @property
    def n_controller(self) -> int:
        return self.A_E.shape[0] - self.n_plant

    @property
    def E(self) -> np.ndarray:
        return self.B_E[:, 0]

    @property
    def H(self) -> np.ndarray:
        return self.C_E[1:2, :]


def _is_orthogonal(S) -> bool:
    S = np.asarray(S, dtype=float)
    return S.shape == (2, 2) and np.allclose(S @ S.T, np.eye(2), atol=1e-12)


def _structure_ok(B_E, C_E, D_E, n_plant) -> bool:
    scale = max(1.0, np.abs(B_E).max(), np.abs(C_E).max())
    lower = np.abs(B_E[n_plant:]).max(initial=0.0) <= 1e-12 * scale
    right = np.abs(C_E[:, n_plant:]).max(initial=0.0) <= 1e-12 * scale
    d_ok = np.allclose(D_E, np.eye(2), atol=1e-12) or np.allclose(D_E, -np.eye(2), atol=1e-12)
    return bool(lower and right and d_ok)


def assemble_coherent_loop(plant: QuadratureSystem, controller: CoherentController,
                           S_list: Optional[Sequence] = None,
                           T_list: Optional[Sequence] = None,
                           omega_ref: float = 1.0) -> ClosedLoop:
    """Three-port plant in coherent feedback with a two-port controller.

    Fields are routed ``w1 = S1 W1out``, ``w2 = S2 W2out``,
    ``W2 = T1 w1out``, ``W3 = T2 w2out``; the loop output is ``W3out``.
    The default ``S_j = T_j`` are pi/2 phase shifters.  ``conforming`` is
    false when the result lacks the ``[E; O]``, ``[H, O]`` structure or
    ``D_E != ±I``.
    """
    S1, S2 = (PHASE_SHIFTER, PHASE_SHIFTER) if S_list is None else S_list
    T1, T2 = (PHASE_SHIFTER, PHASE_SHIFTER) if T_list is None else T_list
    for S in (S1, S2, T1, T2):
        if not _is_orthogonal(S):
            raise ValueError("scattering matrices must be 2x2 orthogonal")
    S1, S2, T1, T2 = (np.asarray(S, dtype=float) for S in (S1, S2, T1, T2))
    A, B, C, b = plant.A, plant.B_list[0], plant.C_list[0], plant.b
    A_K, B_K, C_K = controller.A_K, controller.B_K, controller.C_K
    I = np.eye(2)
    A11 = A + B @ (T1 @ S1 + T2 @ S2 @ (T1 @ S1 + I)) @ C
    A12 = B @ (T1 + T2 @ (I + S2 @ T1)) @ C_K
    A21 = B_K @ ((I + S2 @ T1) @ S1 + S2) @ C
    A22 = A_K + B_K @ S2 @ T1 @ C_K
    A_E = np.block([[A11, A12], [A21, A22]])
    B_E = np.vstack([B @ (I + T1 @ S1 + T2 @ S2 @ T1 @ S1), B_K @ (I + S2 @ T1) @ S1])
    C_E = np.hstack([(T2 @ S2 @ T1 @ S1 + T2 @ S2 + I) @ C, T2 @ (S2 @ T1 + I) @ C_K])
    D_E = T2 @ S2 @ T1 @ S1
    nk = A_K.shape[0]
    b = np.zeros(A.shape[0]) if b is None else b
    b_E = np.concatenate([b, np.zeros(nk)])
    n = A.shape[0]
    return ClosedLoop(A_E, B_E, C_E, D_E, b_E, n, "coherent",
                      _structure_ok(B_E, C_E, D_E, n), omega_ref)


def assemble_direct_loop(plant: QuadratureSystem, R_K, R1, R2,
                         omega_ref: float = 1.0) -> ClosedLoop:
    R_K, R1, R2 = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (R_K, R1, R2))
    tol = 1e-9 * max(1.0, np.abs(R_K).max(initial=0.0), np.abs(R1).max(initial=0.0))
    if np.abs(R_K - R_K.T).max() > tol or np.abs(R1.T - R2).max() > tol:
        raise ValueError("direct-interaction controller violates R_K = R_K^T, R1^T = R2")
    A, B, C, b = plant.A, plant.B_list[0], plant.C_list[0], plant.b
    n, nk = A.shape[0], R_K.shape[0]
    Sn, Sk = sigma(n // 2), sigma(nk // 2)
    A_E = np.block([[A, Sn @ R1], [Sk @ R2, Sk @ R_K]])
    B_E = np.vstack([B, np.zeros((nk, B.shape[1]))])
    C_E = np.hstack([C, np.zeros((C.shape[0], nk))])
    b = np.zeros(n) if b is None else b
    b_E = np.concatenate([b, np.zeros(nk)])
    return ClosedLoop(A_E, B_E, C_E, np.eye(2), b_E, n, "direct", True, omega_ref)


def open_loop(plant: QuadratureSystem, omega_ref: float = 1.0) -> ClosedLoop:
    """Uncontrolled plant seen through its first channel."""
    b = np.zeros(plant.A.shape[0]) if plant.b is None else plant.b
    return ClosedLoop(plant.A, plant.B_list[0], plant.C_list[0], np.eye(2), b,
                      plant.A.shape[0], "none", True, omega_ref)
