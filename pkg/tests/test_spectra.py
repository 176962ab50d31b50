import csv
from dataclasses import replace

import numpy as np
import pytest

from geobae.spectra import (
    NoiseSpec,
    StateSpaceTF,
    eval_tf,
    freq_response,
    is_stable,
    log_grid,
    noise_psd,
    sensing_transfers,
    sql,
    thermal_loop,
    thermal_ratio,
    thermal_ratio_polynomials,
    verify_bae,
    write_spectrum_csv,
)
from geobae.synthesis import (
    PlantSpec,
    assemble_coherent_loop,
    build_optomech_plant,
    cavity_controller,
)


def _random_stable(rng, n):
    A = rng.normal(size=(n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + rng.uniform(0.1, 1.0)) * np.eye(n)
    return StateSpaceTF(A, rng.normal(size=(n, 1)), rng.normal(size=(1, n)), [[0.0]])


def _ideal_loop(spec, kappa_K=None, detuning=None):
    kappa_K = spec.g**2 / spec.kappa if kappa_K is None else kappa_K
    detuning = -spec.omega_m if detuning is None else detuning
    plant = build_optomech_plant(replace(spec, ports=3, include_damping=False))
    return assemble_coherent_loop(plant, cavity_controller(kappa_K, detuning),
                                  omega_ref=spec.omega_m)


def test_eval_tf_solve_vs_eigendecomposition(rng):
    for _ in range(50):
        tf = _random_stable(rng, int(rng.integers(1, 7)))
        lam, V = np.linalg.eig(tf.A)
        Vinv = np.linalg.inv(V)
        for w in rng.uniform(-5, 5, 3):
            s = 1j * w
            ref = (tf.C @ V) @ np.diag(1 / (s - lam)) @ (Vinv @ tf.B)
            val = eval_tf(tf, s)
            assert abs(val[0, 0] - ref[0, 0]) <= 1e-10 * max(1.0, abs(ref[0, 0]))


def test_eval_tf_rejects_pole(ref_spec):
    plant = build_optomech_plant(ref_spec)
    tfs = sensing_transfers(plant)
    with pytest.raises(ValueError, match="spectrum"):
        eval_tf(tfs["f"], 1j * ref_spec.omega_m)


def test_conjugate_symmetry(rng):
    tf = _random_stable(rng, 4)
    for w in (0.3, 2.0, 7.0):
        assert np.isclose(eval_tf(tf, -1j * w)[0, 0], np.conj(eval_tf(tf, 1j * w)[0, 0]))


def test_plant_transfers_match_closed_forms(ref_spec, rng):
    s = ref_spec
    w0, k, g, gm = s.omega_m, s.kappa, s.g, s.gamma
    tfs = sensing_transfers(build_optomech_plant(s))
    assert np.isclose(eval_tf(tfs["P"], 0.0)[0, 0], -1.0)
    for w in rng.uniform(0.01, 10.0, 100) * w0:
        z = 1j * w
        xf = g * w0 * np.sqrt(gm * k) / ((z**2 + w0**2) * (z + k / 2))
        xq = -g**2 * w0 * k / ((z**2 + w0**2) * (z + k / 2) ** 2)
        xp = (z - k / 2) / (z + k / 2)
        for key, ref in (("f", xf), ("Q", xq), ("P", xp)):
            val = eval_tf(tfs[key], z)[0, 0]
            assert abs(val - ref) <= 1e-10 * abs(ref)
    z = 1j * k
    ratio = abs(eval_tf(tfs["Q"], z)[0, 0] / eval_tf(tfs["f"], z)[0, 0])
    assert np.isclose(ratio, g * np.sqrt(k) / (np.sqrt(gm) * abs(z + k / 2)), rtol=1e-10)


def test_zero_coupling_kills_signal_and_backaction():
    spec = PlantSpec(omega_m=1.0, kappa=2.0, gamma=0.1, g=0.0)
    tfs = sensing_transfers(build_optomech_plant(spec))
    for w in (0.1, 0.5, 3.0):
        assert eval_tf(tfs["Q"], 1j * w)[0, 0] == 0
        assert eval_tf(tfs["f"], 1j * w)[0, 0] == 0
    with pytest.raises(ValueError, match="vanishes"):
        noise_psd(build_optomech_plant(spec), 0.5)


def test_sql_formulas(ref_spec):
    s = ref_spec
    assert sql(s.omega_m, s) == 0.0
    assert np.isclose(sql(s.omega_m, s, damped=True), 1.0)
    w = log_grid(s.omega_m, 300)
    assert np.all(sql(w, s, damped=True) >= sql(w, s))


def test_uncontrolled_plant_above_sql(ref_spec):
    s = ref_spec
    w = log_grid(s.omega_m, 1000)
    w = w[np.abs(w - s.omega_m) > 1e-6 * s.omega_m]
    plant = build_optomech_plant(s)
    tfs = sensing_transfers(plant)
    xf, xq, xp = (freq_response(tfs[k], w) for k in ("f", "Q", "P"))
    shot = np.abs(xp / xf) ** 2 / 2
    back = np.abs(xq / xf) ** 2 / 2
    S = noise_psd(plant, w)
    assert np.all(S >= 2 * np.sqrt(shot * back) * (1 - 1e-12))
    assert np.all(2 * np.sqrt(shot * back) >= sql(w, s) * (1 - 1e-9))
    damped = replace(s, include_damping=True)
    Sd = noise_psd(build_optomech_plant(damped), w)
    assert np.all(Sd >= sql(w, damped, damped=True) * (1 - 1e-9))


def test_noise_psd_floor_and_squeezing(ref_spec):
    s = replace(ref_spec, include_damping=True)
    loop = _ideal_loop(s)
    w = log_grid(s.omega_m, 50)
    S0 = noise_psd(loop, w, NoiseSpec(0.0, 5.0))
    assert np.allclose(noise_psd(loop, w, NoiseSpec(0.0, 5.0), subtract_floor=True), S0 - 5.0)
    assert np.all(S0 >= 0)
    with pytest.raises(ValueError):
        NoiseSpec(0.0, -1.0)
    n = NoiseSpec(2.0)
    assert np.isclose(n.q_variance * n.p_variance, 0.25)


def test_ideal_loop_shot_noise_only(ref_spec):
    loop = _ideal_loop(ref_spec)
    tfs = sensing_transfers(loop)
    w = log_grid(ref_spec.omega_m, 200)
    assert np.max(np.abs(freq_response(tfs["Q"], w))) < 1e-12
    xf, xp = freq_response(tfs["f"], w), freq_response(tfs["P"], w)
    S = noise_psd(loop, w, NoiseSpec(2.0))
    assert np.allclose(S, np.abs(xp / xf) ** 2 * np.exp(-2) / 2, rtol=1e-12)
    # the r = 2 shot term is exactly e^-2 of the r = 0 one
    assert np.allclose(S / noise_psd(loop, w), np.exp(-2), rtol=1e-12)


def test_thermal_ratio_dual_path(ref_spec, rng):
    s = replace(ref_spec, include_damping=True)
    for kK, D in ((0.093, -0.5), (0.2, -0.3), (0.05, -0.9)):
        kK, D = kK * 2e6 * np.pi, D * 2e6 * np.pi
        tf = thermal_ratio(kK, D, s)
        tfs = sensing_transfers(thermal_loop(kK, D, s))
        for w in 10 ** rng.uniform(-3, 3, 100) * s.omega_m:
            a = eval_tf(tf, 1j * w)[0, 0]
            b = eval_tf(tfs["Q"], 1j * w)[0, 0] / eval_tf(tfs["f"], 1j * w)[0, 0]
            assert abs(a - b) <= 1e-8 * abs(b)


def test_thermal_ratio_ideal_cancellation(ref_spec):
    s = ref_spec
    ideal = replace(s, gamma=1e-300)
    num, _ = thermal_ratio_polynomials(s.g**2 / s.kappa, -s.omega_m, ideal)
    scale = np.sqrt(s.kappa) * s.g**2 * s.omega_m * s.omega_m**2
    assert np.max(np.abs(num)) <= 1e-15 * scale
    num0, _ = thermal_ratio_polynomials(0.3 * s.kappa, 0.0, s)
    assert abs(num0[0]) > 0
    with pytest.raises(ValueError):
        thermal_ratio(1.0, 1.0, replace(s, g=0.0))


def test_stability_flags(ref_spec):
    s = ref_spec
    assert is_stable(thermal_ratio(0.1 * s.kappa, -s.omega_m, s))
    assert not is_stable(thermal_ratio(0.0, -s.omega_m, s))


def test_verify_bae_cases(ref_spec):
    s = ref_spec
    rep = verify_bae(_ideal_loop(s))
    assert rep.geometric_pass and rep.numeric_pass and rep.max_residual < 1e-8
    bad = verify_bae(_ideal_loop(s, kappa_K=1.1 * s.g**2 / s.kappa))
    assert not bad.geometric_pass and not bad.numeric_pass and bad.max_residual > 1e-3
    assert rep.omega.size == 200


def test_geometric_implies_numeric(ref_spec, rng):
    s = ref_spec
    for _ in range(10):
        kK = rng.uniform(0.02, 0.3) * s.kappa
        D = -rng.uniform(0.2, 2.0) * s.omega_m
        rep = verify_bae(_ideal_loop(s, kK, D))
        if rep.geometric_pass:
            assert rep.numeric_pass


def test_spectrum_csv(tmp_path):
    w = np.array([2 * np.pi * 1.0, 2 * np.pi * 10.0])
    path = tmp_path / "s.csv"
    write_spectrum_csv(path, w, [3.0, 4.0], [1.0, 2.0], floor=0.5)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["omega_Hz", "S", "SQL", "S_minus_floor"]
    assert rows[1] == ["1.00000000e+00", "3.00000000e+00", "1.00000000e+00", "2.50000000e+00"]
