"""Transfer functions, noise spectra, the SQL and BAE verification."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from . import subspace as ss
from .quantum import QuadratureSystem
from .synthesis import (
    ClosedLoop,
    PlantSpec,
    assemble_coherent_loop,
    build_optomech_plant,
    cavity_controller,
    open_loop,
)

__all__ = [
    "StateSpaceTF",
    "NoiseSpec",
    "BAEReport",
    "eval_tf",
    "freq_response",
    "is_stable",
    "sensing_transfers",
    "sql",
    "noise_psd",
    "thermal_ratio_polynomials",
    "thermal_ratio",
    "thermal_loop",
    "verify_bae",
    "log_grid",
    "write_spectrum_csv",
]

BAE_THRESHOLD = 1e-8


@dataclass(frozen=True)
class StateSpaceTF:
    """``Xi(s) = C (sI - A)^{-1} B + D``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    inputs: tuple = ()
    outputs: tuple = ()

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        C = np.asarray(self.C, dtype=float).reshape(-1, n)
        D = np.asarray(self.D, dtype=float).reshape(C.shape[0], B.shape[1])
        for name, value in (("A", A), ("B", B), ("C", C), ("D", D)):
            object.__setattr__(self, name, value)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def shape(self) -> tuple:
        return self.D.shape

    @property
    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A)

    def __call__(self, s):
        return eval_tf(self, s)


@dataclass(frozen=True)
class NoiseSpec:
    """Probe squeezing ``r`` (``<|Q1|^2> = e^r/2``) and thermal floor ``nbar``."""

    squeeze_r: float = 0.0
    thermal_nbar: float = 0.0

    def __post_init__(self):
        if self.thermal_nbar < 0:
            raise ValueError("thermal_nbar must be nonnegative")

    @property
    def q_variance(self) -> float:
        return float(np.exp(self.squeeze_r) / 2)

    @property
    def p_variance(self) -> float:
        return float(np.exp(-self.squeeze_r) / 2)


def eval_tf(tf: StateSpaceTF, s: complex) -> np.ndarray:
    """Evaluate by a linear solve; raises near a pole."""
    n = tf.n_states
    if n == 0:
        return tf.D.astype(complex)
    poles = tf.poles
    scale = max(1.0, float(np.max(np.abs(poles))), np.linalg.norm(tf.A, 1))
    if np.min(np.abs(s - poles)) <= 1e-9 * scale:
        raise ValueError(f"s = {s} is on the spectrum of A (near-singular resolvent)")
    X = np.linalg.solve(s * np.eye(n) - tf.A, tf.B.astype(complex))
    return tf.C @ X + tf.D


def freq_response(tf: StateSpaceTF, omega) -> np.ndarray:
    """Scalar response ``Xi(i omega)`` on an array of frequencies (SISO only)."""
    if tf.shape != (1, 1):
        raise ValueError("freq_response needs a scalar transfer function")
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    return np.array([eval_tf(tf, 1j * w)[0, 0] for w in omega])


def is_stable(tf: Union[StateSpaceTF, np.ndarray], margin: float = 1e-12) -> bool:
    """All poles strictly in the left half plane, relative to the spectral radius."""
    A = tf.A if isinstance(tf, StateSpaceTF) else np.asarray(tf, dtype=float)
    if A.size == 0:
        return True
    ev = np.linalg.eigvals(A)
    radius = max(float(np.max(np.abs(ev))), 1e-300)
    return bool(np.max(ev.real) < -margin * radius)


def _as_loop(sys_or_loop) -> ClosedLoop:
    if isinstance(sys_or_loop, ClosedLoop):
        return sys_or_loop
    if isinstance(sys_or_loop, QuadratureSystem):
        return open_loop(sys_or_loop)
    raise TypeError("expected a ClosedLoop or QuadratureSystem")


def sensing_transfers(sys_or_loop) -> dict:
    """``Xi_f``, ``Xi_Q`` and ``Xi_P`` from the force, Q1 and P1 inputs to the P output."""
    loop = _as_loop(sys_or_loop)
    if loop.b_E is None or not np.any(loop.b_E):
        raise ValueError("system has no force input b")
    if loop.B_E.shape[1] < 2 or loop.C_E.shape[0] < 2:
        raise ValueError("system lacks the (Q, P) input and P output channels")
    A, C = loop.A_E, loop.C_E[1:2]
    D = loop.D_E
    return {
        "f": StateSpaceTF(A, loop.b_E[:, None], C, [[0.0]], ("f",), ("P_out",)),
        "Q": StateSpaceTF(A, loop.B_E[:, :1], C, [[D[1, 0]]], ("Q1",), ("P_out",)),
        "P": StateSpaceTF(A, loop.B_E[:, 1:2], C, [[D[1, 1]]], ("P1",), ("P_out",)),
    }


def sql(omega, spec: PlantSpec, damped: bool = False):
    """Standard quantum limit of the normalised PSD."""
    if not spec.gamma > 0:
        raise ValueError("SQL undefined for gamma = 0")
    w = np.asarray(omega, dtype=float)
    wm = spec.omega_m
    if damped:
        val = np.abs((w**2 - wm**2) - 1j * spec.gamma * w) / (spec.gamma * wm)
    else:
        val = np.abs(w**2 - wm**2) / (spec.gamma * wm)
    return float(val) if np.ndim(val) == 0 else val


def noise_psd(sys_or_loop, omega, noise: NoiseSpec = NoiseSpec(),
              subtract_floor: bool = False, transfers: Optional[dict] = None):
    """``S = nbar + |Xi_Q/Xi_f|^2 e^r/2 + |Xi_P/Xi_f|^2 e^{-r}/2``."""
    tfs = sensing_transfers(sys_or_loop) if transfers is None else transfers
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    xf = freq_response(tfs["f"], w)
    xq = freq_response(tfs["Q"], w)
    xp = freq_response(tfs["P"], w)
    if np.any(np.abs(xf) == 0.0):
        raise ValueError("Xi_f vanishes at a requested frequency")
    S = np.abs(xq / xf) ** 2 * noise.q_variance + np.abs(xp / xf) ** 2 * noise.p_variance
    if not subtract_floor:
        S = S + noise.thermal_nbar
    return float(S[0]) if np.ndim(omega) == 0 else S


def thermal_ratio_polynomials(kappa_K: float, detuning: float, spec: PlantSpec):
    """Numerator and denominator of ``Xi_Q/Xi_f`` as descending coefficients in ``s``."""
    k, wm, g, gm = spec.kappa, spec.omega_m, spec.g, spec.gamma
    a = k * kappa_K * detuning
    num = -np.sqrt(k) * np.array(
        [a + g * g * wm, a * gm, a * wm * wm + g * g * wm * detuning**2]
    )
    den = g * wm * np.sqrt(gm) * np.array(
        [1.0, k / 2, detuning**2 + k * kappa_K, k / 2 * detuning**2]
    )
    return num, den


def thermal_ratio(kappa_K: float, detuning: float, spec: PlantSpec) -> StateSpaceTF:
    """Controllable companion realisation of ``Xi_Q/Xi_f`` for the thermal loop.

    The polynomials are formed in ``nu = s/omega_m`` so that the
    coefficients stay O(1); the realisation is then rescaled to rad/s.
    """
    if not spec.gamma > 0:
        raise ValueError("thermal ratio needs gamma > 0")
    if spec.g == 0:
        raise ValueError("thermal ratio needs g > 0")
    lam = spec.omega_m
    num, den = thermal_ratio_polynomials(kappa_K, detuning, spec)
    powers = lam ** np.arange(3, -1, -1)  # s^j = lam^j nu^j
    den_nu = den * powers
    num_nu = num * powers[1:]
    num_nu, den_nu = num_nu / den_nu[0], den_nu / den_nu[0]
    A = np.zeros((3, 3))
    A[0] = -den_nu[1:]
    A[1:, :-1] = np.eye(2)
    B = np.array([[1.0], [0.0], [0.0]])
    C = num_nu[None, :]
    return StateSpaceTF(lam * A, lam * B, C, [[0.0]], ("Q1",), ("P_out/f",))


def thermal_loop(kappa_K: float, detuning: float, spec: PlantSpec) -> ClosedLoop:
    """Damped 3-port plant in coherent feedback with a detuned cavity controller."""
    plant = build_optomech_plant(replace(spec, ports=3, include_damping=True))
    return assemble_coherent_loop(plant, cavity_controller(kappa_K, detuning),
                                  omega_ref=spec.omega_m)


def log_grid(omega_ref: float, points: int = 200, lo: float = 1e-3, hi: float = 1e3) -> np.ndarray:
    return np.geomspace(lo * omega_ref, hi * omega_ref, points)


@dataclass(frozen=True)
class BAEReport:
    geometric_pass: bool
    numeric_pass: bool
    max_residual: float
    omega: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    @property
    def passed(self) -> bool:
        return self.geometric_pass and self.numeric_pass


def verify_bae(loop, points: int = 200, threshold: float = BAE_THRESHOLD) -> BAEReport:
    """Back-action evasion check by subspace containment and on a frequency grid.

    Geometric: the subspace reachable from the back-action input lies in
    the unobservable subspace of the measured quadrature.  Numeric: the
    largest ``|Xi_Q|/(1 + |Xi_f|)`` over the grid is below ``threshold``.
    """
    loop = _as_loop(loop)
    reach = ss.controllable_subspace(loop.A_E, loop.B_E[:, 0])
    unobs = ss.unobservable_subspace(loop.A_E, loop.C_E[1])
    geometric = ss.contains(unobs, reach)
    tfs = sensing_transfers(loop)
    w = log_grid(loop.omega_ref, points)
    xq = freq_response(tfs["Q"], w)
    xf = freq_response(tfs["f"], w)
    res = float(np.max(np.abs(xq) / (1.0 + np.abs(xf))))
    return BAEReport(bool(geometric), res < threshold, res, w)


def write_spectrum_csv(path, omega, S, sql_values, floor: float = 0.0) -> None:
    """Columns ``omega_Hz, S, SQL, S_minus_floor`` in 9-significant-digit notation."""
    omega = np.asarray(omega, dtype=float)
    S = np.asarray(S, dtype=float)
    sql_values = np.asarray(sql_values, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["omega_Hz", "S", "SQL", "S_minus_floor"])
        for w, s, q in zip(omega, S, sql_values):
            writer.writerow([f"{w / (2 * np.pi):.8e}", f"{s:.8e}", f"{q:.8e}", f"{s - floor:.8e}"])
