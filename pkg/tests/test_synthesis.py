from dataclasses import replace

import numpy as np
import pytest

from geobae import subspace as ss
from geobae.quantum import check_physical_realizability, is_passive
from geobae.spectra import verify_bae
from geobae.synthesis import (
    PHASE_SHIFTER,
    PlantSpec,
    active_direct_assignment,
    apply_realizability_constraints,
    assemble_coherent_loop,
    assemble_direct_loop,
    build_optomech_plant,
    cavity_controller,
    check_solvability,
    controller_matrices,
    ddp_controller,
    passive_assignment,
    phase_shifter,
    synthesize_family,
)


def _random_member(fam, rng):
    """Constraint-manifold point from a random partial assignment."""
    rk = np.sqrt(fam.spec.kappa)
    assign = dict(
        n11=1 + 0.3 * rng.normal(), n12=0.3 * rng.normal(), n21=0.3 * rng.normal(),
        f11=0.3 * rk * rng.normal(), g31=rk * rng.normal(), g32=rk * rng.normal(),
    )
    return apply_realizability_constraints(fam, assign)


def _loop(fam):
    ctrl = controller_matrices(fam)
    if fam.scheme == "coherent":
        return assemble_coherent_loop(fam.plant, ctrl, omega_ref=fam.spec.omega_m)
    return assemble_direct_loop(fam.plant, ctrl.R_K, ctrl.R1, ctrl.R2, omega_ref=fam.spec.omega_m)


# --- plant and solvability ----------------------------------------------------


def test_plant_matrices(ref_spec):
    s = ref_spec
    p3 = build_optomech_plant(replace(s, ports=3))
    k, w, g = s.kappa, s.omega_m, s.g
    expected = np.array([[0, w, 0, 0], [-w, 0, g, 0], [0, 0, -1.5 * k, 0], [g, 0, 0, -1.5 * k]])
    assert np.allclose(p3.A, expected)
    B = p3.B_list[0]
    assert np.allclose(B, -np.sqrt(k) * np.array([[0, 0], [0, 0], [1, 0], [0, 1]]))
    assert np.allclose(p3.C_list[0], -B.T)
    assert np.allclose(p3.E, B[:, 0]) and np.allclose(p3.H, p3.C_list[0][1])
    assert check_physical_realizability(p3).passed
    damped = build_optomech_plant(replace(s, include_damping=True))
    assert damped.A[1, 1] == -s.gamma
    assert np.allclose(damped.b, [0, np.sqrt(s.gamma), 0, 0])


def test_plant_spec_validation():
    with pytest.raises(ValueError):
        PlantSpec(omega_m=-1.0, kappa=1.0, gamma=1.0, g=1.0)
    with pytest.raises(ValueError):
        PlantSpec(omega_m=1.0, kappa=1.0, gamma=1.0, g=1.0, ports=2)
    assert PlantSpec(1.0, 1.0, 1.0, 0.0).g == 0.0


@pytest.mark.parametrize("ports", [1, 3])
def test_solvability_of_optomech_plant(ref_spec, ports):
    plant = build_optomech_plant(replace(ref_spec, ports=ports))
    rep = check_solvability(plant)
    assert rep.solvable
    assert ss.equal(rep.V_sub, ss.image(plant.E))
    assert ss.equal(rep.V_star, ss.kernel(plant.H))


def test_solvability_zero_disturbance(ref_spec):
    plant = build_optomech_plant(ref_spec)
    rep = check_solvability(plant, E=np.zeros(4))
    assert rep.solvable and rep.V_sub.dim == 0


def test_solvability_requires_H():
    with pytest.raises(ValueError, match="regulated output"):
        check_solvability(A=np.eye(2), B=np.eye(2), C=np.eye(2), E=np.ones(2), H=None)


def test_unsolvable_instance():
    # disturbance enters where the output sees it immediately
    A = np.zeros((2, 2))
    rep = check_solvability(A=A, B=np.zeros((2, 1)), C=np.zeros((1, 2)),
                            E=np.array([1.0, 0.0]), H=np.array([[1.0, 0.0]]))
    assert not rep.solvable
    with pytest.raises(ValueError, match="not solvable"):
        ddp_controller(A, np.zeros((2, 1)), np.zeros((1, 2)), np.array([1.0, 0.0]),
                       np.array([[1.0, 0.0]]))


def test_generic_ddp_controller_decouples(rng):
    for _ in range(30):
        n = int(rng.integers(4, 7))
        k = int(rng.integers(2, n - 1))
        A = rng.normal(size=(n, n))
        A[k:, :k] = 0.0
        B = rng.normal(size=(n, int(rng.integers(1, 3))))
        C = rng.normal(size=(int(rng.integers(1, 3)), n))
        E = np.concatenate([rng.normal(size=k), np.zeros(n - k)])
        H = np.hstack([np.zeros((1, k)), rng.normal(size=(1, n - k))])
        K = ddp_controller(A, B, C, E, H)
        D_K = K["D_K"]
        nk = K["A_K"].shape[0]
        assert nk == K["V2"].dim - K["V1"].dim
        A_E = np.block([[A + B @ D_K @ C, B @ K["C_K"]], [K["B_K"] @ C, K["A_K"]]])
        E_E = np.concatenate([E, np.zeros(nk)])
        H_E = np.hstack([H, np.zeros((1, nk))])
        reach = ss.controllable_subspace(A_E, E_E)
        assert ss.contains(ss.unobservable_subspace(A_E, H_E), reach)
        s = 1j * rng.uniform(0.1, 3.0)
        tf = H_E @ np.linalg.solve(s * np.eye(n + nk) - A_E, E_E)
        assert abs(tf[0]) < 1e-9


def test_generic_ddp_controller_on_optomech_plant(ref_spec):
    plant = build_optomech_plant(replace(ref_spec, ports=3))
    K = ddp_controller(plant.A, plant.B_list[0], plant.C_list[0], plant.E, plant.H,
                       D_K=-np.eye(2))
    assert K["A_K"].shape == (2, 2)
    A, B, C = plant.A, plant.B_list[0], plant.C_list[0]
    A_E = np.block([[A - B @ C, B @ K["C_K"]], [K["B_K"] @ C, K["A_K"]]])
    reach = ss.controllable_subspace(A_E, np.concatenate([plant.E, np.zeros(2)]))
    unobs = ss.unobservable_subspace(A_E, np.hstack([plant.H, np.zeros((1, 2))]))
    assert ss.contains(unobs, reach)


# --- controller families ------------------------------------------------------------


def test_family_geometry(ref_spec):
    fam = synthesize_family(ref_spec, "coherent")
    assert fam.V1.dim == 1 and fam.V2.dim == 3 and fam.dim_xk == 2
    assert fam.plant.n_channels == 3
    assert synthesize_family(ref_spec, "direct").plant.n_channels == 1
    with pytest.raises(ValueError, match="scheme"):
        synthesize_family(ref_spec, "measurement")
    with pytest.raises(ValueError, match="unresolved"):
        fam.F()


def test_coherent_passive_reproduction(ref_spec):
    s = ref_spec
    fam = synthesize_family(s, "coherent")
    fam = apply_realizability_constraints(fam, passive_assignment(fam))
    assert np.max(np.abs(fam.constraint_residuals)) < 1e-12
    assert fam.realizable
    c = controller_matrices(fam)
    AK = np.array([[-s.g**2 / s.kappa, -s.omega_m], [s.omega_m, -s.g**2 / s.kappa]])
    assert np.allclose(c.A_K, AK, rtol=0, atol=1e-10 * s.omega_m)
    gk = s.g / np.sqrt(s.kappa)
    assert np.allclose(c.C_K, gk * np.eye(2), rtol=0, atol=1e-10 * gk)
    assert np.allclose(c.C_K, -c.B_K.T, rtol=0, atol=1e-10 * gk)
    assert check_physical_realizability(c.as_system()).passed
    assert is_passive(c.as_system())
    # the same controller is a single cavity with kappa_K = g^2/kappa, Delta = -omega_m
    cav = cavity_controller(s.g**2 / s.kappa, -s.omega_m)
    assert np.allclose(cav.A_K, c.A_K) and np.allclose(cav.B_K, c.B_K)


def test_direct_passive_reproduction(ref_spec):
    s = ref_spec
    fam = synthesize_family(s, "direct")
    fam = apply_realizability_constraints(fam, passive_assignment(fam))
    c = controller_matrices(fam)
    assert np.allclose(c.R_K, -s.omega_m * np.eye(2), rtol=0, atol=1e-10 * s.omega_m)
    R2 = np.array([[0, 0, s.g, 0], [0, 0, 0, s.g]])
    assert np.allclose(c.R2, R2, rtol=0, atol=1e-10 * s.g)
    assert np.allclose(c.R1.T, c.R2)


def test_direct_active_assignment(ref_spec):
    s = ref_spec
    fam = synthesize_family(s, "direct")
    fam = apply_realizability_constraints(fam, active_direct_assignment())
    p = fam.params
    for name in ("n14", "n24", "f24", "g12", "g22"):
        assert abs(p[name]) < 1e-8 * max(1.0, np.sqrt(s.kappa))
    c = controller_matrices(fam)
    # g_B = g_D = g/2 in the quadrature form
    assert np.allclose(c.R2, [[0, 0, s.g, 0], [0, 0, 0, 0]], atol=1e-8 * s.g)
    assert verify_bae(_loop(fam)).passed


def test_inconsistent_and_unknown_assignments(ref_spec):
    fam = synthesize_family(ref_spec, "coherent")
    with pytest.raises(ValueError, match="inconsistent assignment"):
        apply_realizability_constraints(fam, dict(n11=0.0, n12=0.0, n21=0.0, n22=0.0))
    with pytest.raises(ValueError, match="unknown parameters"):
        apply_realizability_constraints(fam, dict(f13=1.0))


def test_manifold_dimension_reported(ref_spec):
    for scheme in ("coherent", "direct"):
        fam = synthesize_family(ref_spec, scheme)
        fam = apply_realizability_constraints(fam, passive_assignment(fam))
        dim = fam.manifold_dimension()
        assert 14 - 7 <= dim < 14


def test_passive_phase_family_is_rotation_conjugate(ref_spec):
    fam = synthesize_family(ref_spec, "coherent")
    base = controller_matrices(apply_realizability_constraints(fam, passive_assignment(fam)))
    for theta in (0.3, 1.1, -2.0):
        c = controller_matrices(apply_realizability_constraints(fam, passive_assignment(fam, theta)))
        Ut = np.linalg.solve(base.C_K, c.C_K)
        U = Ut.T
        assert np.allclose(U @ U.T, np.eye(2), atol=1e-9)
        assert np.allclose(c.A_K, U @ base.A_K @ U.T, atol=1e-9 * ref_spec.omega_m)
        assert np.allclose(c.B_K, U @ base.B_K, atol=1e-9 * np.abs(base.B_K).max())
    dfam = synthesize_family(ref_spec, "direct")
    dbase = controller_matrices(apply_realizability_constraints(dfam, passive_assignment(dfam)))
    d = controller_matrices(apply_realizability_constraints(dfam, passive_assignment(dfam, 0.8)))
    U = np.linalg.lstsq(dbase.R2[:, 2:].T, d.R2[:, 2:].T, rcond=None)[0].T
    assert np.allclose(U @ U.T, np.eye(2), atol=1e-9)
    assert np.allclose(d.R_K, U @ dbase.R_K @ U.T, atol=1e-9 * ref_spec.omega_m)


def test_g_to_zero_decouples():
    spec = PlantSpec(omega_m=1.0, kappa=2.0, gamma=0.01, g=0.0)
    fam = synthesize_family(spec, "coherent")
    c = controller_matrices(apply_realizability_constraints(fam, passive_assignment(fam)))
    assert np.allclose(c.C_K, 0) and np.allclose(c.B_K, 0)


def test_random_manifold_members(ref_spec, rng):
    for scheme in ("coherent", "direct"):
        fam = synthesize_family(ref_spec, scheme)
        for _ in range(15):
            member = _random_member(fam, rng)
            assert np.max(np.abs(member.constraint_residuals)) < 1e-10
            c = controller_matrices(member)
            if scheme == "coherent":
                assert check_physical_realizability(c.as_system()).passed
            else:
                scale = np.abs(c.R_K).max()
                assert np.allclose(c.R_K, c.R_K.T, atol=1e-10 * scale)
                assert np.allclose(c.R1.T, c.R2, atol=1e-10 * scale)
            loop = _loop(member)
            reach = ss.controllable_subspace(loop.A_E, loop.E)
            assert ss.contains(ss.unobservable_subspace(loop.A_E, loop.H), reach)
            # augmented subspace {[x; N x] : x in V2} is A_E-invariant
            V2 = member.V2.basis
            VE = ss.image(np.vstack([V2, member.N() @ V2]))
            assert ss.is_A_invariant(loop.A_E, VE)


def test_controller_matrix_errors(ref_spec):
    fam = synthesize_family(ref_spec, "coherent")
    fam = apply_realizability_constraints(fam, passive_assignment(fam))
    singular = dict(fam.params, n11=1.0, n12=0.0, n21=1.0, n22=0.0, n14=0.0, n24=0.0)
    with pytest.raises(ValueError, match="full row rank"):
        controller_matrices(replace(fam, params=singular))
    wrong_v1 = ss.image(np.array([1.0, 0.0, 0.0, 0.0]))
    with pytest.raises(ValueError, match="Ker N"):
        controller_matrices(replace(fam, V1=wrong_v1))


# --- loop assembly -----------------------------------------------------------------------


def _sequential_loop(plant, ctrl, S1, S2, T1, T2):
    """Interconnection evaluated field by field along the optical path."""
    A, B, C = plant.A, plant.B_list[0], plant.C_list[0]
    n, nk = A.shape[0], ctrl.A_K.shape[0]

    def step(x, xk, W1):
        W1o = C @ x + W1
        w1 = S1 @ W1o
        w1o = ctrl.C_K @ xk + w1
        W2 = T1 @ w1o
        W2o = C @ x + W2
        w2 = S2 @ W2o
        w2o = ctrl.C_K @ xk + w2
        W3 = T2 @ w2o
        W3o = C @ x + W3
        dx = A @ x + B @ (W1 + W2 + W3)
        dxk = ctrl.A_K @ xk + ctrl.B_K @ (w1 + w2)
        return np.concatenate([dx, dxk]), W3o

    cols_A, cols_C, cols_B, cols_D = [], [], [], []
    for e in np.eye(n + nk):
        d, y = step(e[:n], e[n:], np.zeros(2))
        cols_A.append(d)
        cols_C.append(y)
    for e in np.eye(2):
        d, y = step(np.zeros(n), np.zeros(nk), e)
        cols_B.append(d)
        cols_D.append(y)
    return (np.array(cols_A).T, np.array(cols_B).T, np.array(cols_C).T, np.array(cols_D).T)


def test_general_scattering_matches_sequential_oracle(ref_spec, rng):
    plant = build_optomech_plant(replace(ref_spec, ports=3))
    ctrl = cavity_controller(0.4 * ref_spec.kappa, -0.7 * ref_spec.omega_m)
    for _ in range(10):
        Ss = [phase_shifter(t) for t in rng.uniform(-np.pi, np.pi, 4)]
        loop = assemble_coherent_loop(plant, ctrl, Ss[:2], Ss[2:])
        A_E, B_E, C_E, D_E = _sequential_loop(plant, ctrl, *Ss)
        scale = np.abs(A_E).max()
        assert np.allclose(loop.A_E, A_E, atol=1e-12 * scale)
        assert np.allclose(loop.B_E, B_E, atol=1e-12 * np.abs(B_E).max())
        assert np.allclose(loop.C_E, C_E, atol=1e-12 * np.abs(C_E).max())
        assert np.allclose(loop.D_E, D_E, atol=1e-12)


def test_pi_half_shifters_give_conforming_loop(ref_spec):
    s = ref_spec
    plant = build_optomech_plant(replace(s, ports=3))
    ctrl = cavity_controller(s.g**2 / s.kappa, -s.omega_m)
    S = PHASE_SHIFTER
    assert np.allclose(S @ S, -np.eye(2))
    loop = assemble_coherent_loop(plant, ctrl)
    assert loop.conforming
    assert np.array_equal(loop.D_E, np.eye(2))
    A, B, C = plant.A, plant.B_list[0], plant.C_list[0]
    expected = np.block([[A - B @ C, B @ S @ ctrl.C_K], [ctrl.B_K @ S @ C, ctrl.A_K - ctrl.B_K @ ctrl.C_K]])
    assert np.allclose(loop.A_E, expected)
    assert np.allclose(loop.B_E, np.vstack([B, np.zeros((2, 2))]))
    assert np.allclose(loop.C_E, np.hstack([C, np.zeros((2, 2))]))


def test_identity_shifters_non_conforming(ref_spec):
    plant = build_optomech_plant(replace(ref_spec, ports=3))
    ctrl = cavity_controller(0.1 * ref_spec.kappa, -ref_spec.omega_m)
    I = np.eye(2)
    loop = assemble_coherent_loop(plant, ctrl, [I, I], [I, I])
    assert np.array_equal(loop.D_E, I)
    assert not loop.conforming
    with pytest.raises(ValueError, match="orthogonal"):
        assemble_coherent_loop(plant, ctrl, [2 * I, I], [I, I])


def test_direct_loop_blocks(ref_spec):
    plant = build_optomech_plant(ref_spec)
    Z = np.zeros((2, 4))
    loop = assemble_direct_loop(plant, -np.eye(2), Z.T, Z)
    assert np.allclose(loop.A_E[:4, 4:], 0) and np.allclose(loop.A_E[4:, :4], 0)
    assert loop.conforming
    with pytest.raises(ValueError, match="R_K = R_K\\^T"):
        assemble_direct_loop(plant, np.array([[0.0, 1.0], [0.0, 0.0]]), Z.T, Z)


def test_direct_active_quadrature_form_is_bae(ref_spec):
    s = ref_spec
    plant = build_optomech_plant(s)
    for gB in (0.5 * s.g, 0.2 * s.g, 0.9 * s.g):
        gD = s.g - gB
        R2 = np.array([[0, 0, gB + gD, 0], [0, 0, 0, gB - gD]])
        loop = assemble_direct_loop(plant, -s.omega_m * np.eye(2), R2.T, R2, omega_ref=s.omega_m)
        assert verify_bae(loop).passed
