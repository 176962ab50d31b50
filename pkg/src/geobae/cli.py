"""Command-line front end.

Subcommands ``solvability``, ``synthesize``, ``spectrum`` and ``optimize``
read a YAML scenario (``--config``), print a JSON report and optionally
write files to ``--out``.  Exit codes: 0 success, 1 failed check, 2 bad
input.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import h2 as h2mod
from . import spectra, synthesis
from . import subspace as ss
from .config import ConfigError, ScenarioConfig, UNIT_SCALE, load_config, parse_grid
from .quantum import check_physical_realizability, is_passive, is_passive_direct

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

MHZ = UNIT_SCALE["MHz"]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _require_plant(cfg: ScenarioConfig) -> synthesis.PlantSpec:
    if cfg.plant is None:
        raise ConfigError("this command needs a 'plant' section")
    return cfg.plant


# --- controller resolution ---------------------------------------------------


def _ideal(spec: synthesis.PlantSpec) -> synthesis.PlantSpec:
    return replace(spec, include_damping=False)


def resolve_controller(cfg: ScenarioConfig, grid: Optional[tuple] = None) -> dict:
    """Turn the scenario's controller entry into concrete matrices.

    Returns a dict with ``kind`` and either ``coherent`` or ``direct``; a
    synthesised family is attached under ``family``.
    """
    spec = _require_plant(cfg)
    ctrl = cfg.controller
    scheme = cfg.scheme
    out: dict = {"scheme": scheme}
    if scheme == "coherent":
        if ctrl == "synthesize-active" or (isinstance(ctrl, dict) and {"g_B", "g_D"} <= set(ctrl)):
            raise ConfigError("active controllers are defined for the direct scheme only")
        if isinstance(ctrl, dict) and "R_K" in ctrl:
            raise ConfigError("R_K/R1/R2 describe a direct controller; set scheme: direct")
        if ctrl == "h2-optimal":
            res = h2mod.optimize(spec, cfg.opt_bounds, grid or cfg.opt_grid)
            out.update(kind="h2-optimal", kappa_K=res.kappa_K_opt, detuning=res.delta_opt,
                       optimum=res.to_dict())
            out["coherent"] = synthesis.cavity_controller(res.kappa_K_opt, res.delta_opt)
        elif isinstance(ctrl, dict) and "kappa_K" in ctrl:
            out.update(kind="cavity", kappa_K=ctrl["kappa_K"], detuning=ctrl["detuning"])
            out["coherent"] = synthesis.cavity_controller(ctrl["kappa_K"], ctrl["detuning"])
        elif isinstance(ctrl, dict) and "A_K" in ctrl:
            out.update(kind="explicit")
            out["coherent"] = synthesis.CoherentController(ctrl["A_K"], ctrl["B_K"], ctrl["C_K"])
        else:
            fam = synthesis.synthesize_family(_ideal(spec), "coherent")
            assign = (synthesis.passive_assignment(fam) if ctrl == "synthesize-passive"
                      else ctrl["assignment"])
            fam = synthesis.apply_realizability_constraints(fam, assign)
            out.update(kind="family", family=fam)
            out["coherent"] = synthesis.controller_matrices(fam)
        return out

    if ctrl == "h2-optimal" or (isinstance(ctrl, dict) and ("kappa_K" in ctrl or "A_K" in ctrl)):
        raise ConfigError("this controller form needs scheme: coherent")
    if isinstance(ctrl, dict) and "R_K" in ctrl:
        out.update(kind="explicit")
        out["direct"] = synthesis.DirectController(ctrl["R_K"], ctrl["R1"], ctrl["R2"])
    elif isinstance(ctrl, dict) and "g_B" in ctrl:
        R2 = np.zeros((2, 4))
        R2[0, 2] = ctrl["g_B"] + ctrl["g_D"]
        R2[1, 3] = ctrl["g_B"] - ctrl["g_D"]
        out.update(kind="beam-splitter/squeezer", g_B=ctrl["g_B"], g_D=ctrl["g_D"])
        out["direct"] = synthesis.DirectController(-spec.omega_m * np.eye(2), R2.T, R2)
    else:
        fam = synthesis.synthesize_family(_ideal(spec), "direct")
        if ctrl == "synthesize-passive":
            assign = synthesis.passive_assignment(fam)
        elif ctrl == "synthesize-active":
            assign = synthesis.active_direct_assignment()
        else:
            assign = ctrl["assignment"]
        fam = synthesis.apply_realizability_constraints(fam, assign)
        out.update(kind="family", family=fam)
        out["direct"] = synthesis.controller_matrices(fam)
    return out


def build_loop(spec: synthesis.PlantSpec, resolved: dict) -> synthesis.ClosedLoop:
    if resolved["scheme"] == "coherent":
        plant = synthesis.build_optomech_plant(replace(spec, ports=3))
        return synthesis.assemble_coherent_loop(plant, resolved["coherent"], omega_ref=spec.omega_m)
    plant = synthesis.build_optomech_plant(replace(spec, ports=1))
    d = resolved["direct"]
    return synthesis.assemble_direct_loop(plant, d.R_K, d.R1, d.R2, omega_ref=spec.omega_m)


# --- commands ------------------------------------------------------------------


def _subspace_json(V: ss.Subspace) -> dict:
    return {"dim": V.dim, "basis": np.round(V.basis, 12) + 0.0}


def cmd_solvability(cfg: ScenarioConfig, args) -> tuple:
    if cfg.system is not None:
        s = cfg.system
        rep = synthesis.check_solvability(A=s["A"], B=s["B"], C=s["C"], E=s["E"], H=s["H"])
        source = "system"
    else:
        spec = _require_plant(cfg)
        ports = 3 if cfg.scheme == "coherent" else 1
        plant = synthesis.build_optomech_plant(replace(_ideal(spec), ports=ports))
        rep = synthesis.check_solvability(plant)
        source = f"optomechanical plant, {ports} port(s)"
    report = {
        "command": "solvability",
        "source": source,
        "solvable": rep.solvable,
        "V_sub": _subspace_json(rep.V_sub),
        "V_star": _subspace_json(rep.V_star),
    }
    summary = (f"solvable: {str(rep.solvable).lower()}, dim V_sub={rep.V_sub.dim}, "
               f"dim V*={rep.V_star.dim}")
    return report, summary, (EXIT_OK if rep.solvable else EXIT_FAIL), {}


def _bae_json(rep: spectra.BAEReport) -> dict:
    return {"geometric_pass": rep.geometric_pass, "numeric_pass": rep.numeric_pass,
            "max_residual": rep.max_residual}


def cmd_synthesize(cfg: ScenarioConfig, args) -> tuple:
    spec = _require_plant(cfg)
    resolved = resolve_controller(cfg, args.grid)
    report: dict = {"command": "synthesize", "scheme": cfg.scheme, "units": "rad/s",
                    "controller_kind": resolved["kind"]}
    for key in ("kappa_K", "detuning", "g_B", "g_D", "optimum"):
        if key in resolved:
            report[key] = resolved[key]
    fam = resolved.get("family")
    if fam is not None:
        report["parameters"] = dict(fam.params)
        report["constraint_residuals"] = fam.constraint_residuals
        report["manifold_dimension"] = fam.manifold_dimension()
    ok = True
    if cfg.scheme == "coherent":
        c = resolved["coherent"]
        report["matrices"] = {"A_K": c.A_K, "B_K": c.B_K, "C_K": c.C_K}
        real = check_physical_realizability(c.as_system())
        report["realizable"] = real.passed
        report["realizability_residual"] = max(real.residual_dyn, real.residual_coupling)
        report["passive"] = bool(is_passive(c.as_system())) if real.passed else False
        ok = real.passed
    else:
        d = resolved["direct"]
        report["matrices"] = {"R_K": d.R_K, "R1": d.R1, "R2": d.R2}
        try:
            report["passive"] = bool(is_passive_direct(d.R_K, d.R1, d.R2))
            report["realizable"] = True
        except ValueError:
            report["passive"] = False
            report["realizable"] = False
            ok = False
    if ok:
        # BAE is a property of the loop with the idealised (undamped) plant
        report["bae"] = _bae_json(spectra.verify_bae(build_loop(_ideal(spec), resolved)))
    summary = (f"{cfg.scheme} controller ({resolved['kind']}): realizable={str(ok).lower()}"
               + (f", BAE={str(report['bae']['geometric_pass']).lower()}" if ok else ""))
    return report, summary, (EXIT_OK if ok else EXIT_FAIL), {}


def spectrum_curves(cfg: ScenarioConfig, args=None) -> dict:
    """No-feedback, feedback (r = 0) and feedback (configured r, default 2) spectra."""
    spec = _require_plant(cfg)
    points = getattr(args, "freq_points", None) or cfg.freq_points
    lo, hi = cfg.freq_range
    w = spectra.log_grid(spec.omega_m, points, lo, hi)
    resolved = resolve_controller(cfg, getattr(args, "grid", None))
    loop = build_loop(spec, resolved)
    open_plant = synthesis.build_optomech_plant(replace(spec, ports=1))
    r = cfg.noise.squeeze_r if cfg.noise.squeeze_r != 0 else 2.0
    nbar = cfg.noise.thermal_nbar
    tf_open = spectra.sensing_transfers(open_plant)
    tf_loop = spectra.sensing_transfers(loop)
    curves = {
        "no_feedback": spectra.noise_psd(open_plant, w, spectra.NoiseSpec(0.0, nbar), transfers=tf_open),
        "feedback_r0": spectra.noise_psd(loop, w, spectra.NoiseSpec(0.0, nbar), transfers=tf_loop),
        f"feedback_r{r:g}": spectra.noise_psd(loop, w, spectra.NoiseSpec(r, nbar), transfers=tf_loop),
    }
    return {"omega": w, "curves": curves, "sql": spectra.sql(w, spec, damped=spec.include_damping),
            "floor": nbar, "resolved": resolved, "squeeze_r": r}


def cmd_spectrum(cfg: ScenarioConfig, args) -> tuple:
    data = spectrum_curves(cfg, args)
    w, q, floor = data["omega"], data["sql"], data["floor"]
    report: dict = {"command": "spectrum", "scheme": cfg.scheme, "points": int(w.size),
                    "controller_kind": data["resolved"]["kind"], "squeeze_r": data["squeeze_r"],
                    "thermal_nbar": floor, "curves": {}}
    for key in ("kappa_K", "detuning"):
        if key in data["resolved"]:
            report[f"{key}_MHz"] = data["resolved"][key] / MHZ
    files = {}
    for name, S in data["curves"].items():
        below = (S - floor) < q
        entry = {"points_below_sql": int(below.sum())}
        if below.any():
            entry["below_sql_band_MHz"] = [w[below].min() / MHZ, w[below].max() / MHZ]
        report["curves"][name] = entry
        if args.format == "csv":
            files[f"spectrum_{name}.csv"] = ("csv", (w, S, q, floor))
        else:
            report["curves"][name]["S_minus_floor"] = S - floor
    if args.format == "json":
        report["omega_Hz"] = w / (2 * np.pi)
        report["SQL"] = q
    lines = [f"{k}: {v['points_below_sql']} of {w.size} points below the SQL"
             for k, v in report["curves"].items()]
    return report, "\n".join(lines), EXIT_OK, files


def cmd_optimize(cfg: ScenarioConfig, args) -> tuple:
    spec = _require_plant(cfg)
    res = h2mod.optimize(spec, cfg.opt_bounds, args.grid or cfg.opt_grid)
    report = {"command": "optimize", **res.to_dict()}
    files = {}
    if args.format == "csv":
        files["surface.csv"] = ("surface", res)
    else:
        report["surface"] = {"kappa_K_MHz": res.surface[:, 0] / MHZ,
                             "Delta_MHz": res.surface[:, 1] / MHZ,
                             "h2_norm": res.surface[:, 2]}
    summary = (f"kappa_K/2pi = {res.kappa_K_opt / MHZ:.6f} MHz, "
               f"Delta/2pi = {res.delta_opt / MHZ:.6f} MHz, "
               f"||Xi_Q/Xi_f||_2 = {res.norm_opt:.6g}"
               + (" (on boundary)" if res.on_boundary else ""))
    return report, summary, EXIT_OK, files


COMMANDS = {
    "solvability": cmd_solvability,
    "synthesize": cmd_synthesize,
    "spectrum": cmd_spectrum,
    "optimize": cmd_optimize,
}


def _write_outputs(out_dir: Path, command: str, report: dict, files: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{command}.json").write_text(dumps(report))
    for name, (kind, payload) in files.items():
        if kind == "csv":
            w, S, q, floor = payload
            spectra.write_spectrum_csv(out_dir / name, w, S, q, floor)
        elif kind == "surface":
            h2mod.write_surface_csv(out_dir / name, payload)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geobae",
        description="Back-action-evading controller synthesis for opto-mechanical sensors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario YAML file")
        p.add_argument("--out", help="directory for report and data files")
        p.add_argument("--format", choices=("csv", "json"), help="data file format")
        p.add_argument("--grid", help="optimisation grid, e.g. 60x60")
        p.add_argument("--freq-points", type=int, help="number of spectrum frequencies")
        p.add_argument("--quiet", action="store_true", help="print the summary line only")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        args.grid = parse_grid(args.grid) if args.grid else None
        if args.freq_points is not None and args.freq_points < 2:
            raise ConfigError("--freq-points must be at least 2")
        args.format = args.format or cfg.out_format
        report, summary, code, files = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = args.out or cfg.out_dir
    if out:
        base = Path(out)
        if not base.is_absolute() and args.out is None:
            base = Path(args.config).parent / base
        _write_outputs(base, args.command, report, files)
    if not args.quiet:
        sys.stdout.write(dumps(report))
    print(summary, file=sys.stderr if not args.quiet else sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
