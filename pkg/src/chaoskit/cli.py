"""Command-line front end.

Every subcommand writes its artifacts (CSV and JSON) into ``--out`` along
with ``manifest.json`` holding the resolved configuration, library versions
and timings.  Exit status: 0 on success (including ``holds = false``), 1 for
configuration errors and 2 for numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import _backend
from .config import ConfigError, ExperimentConfig, load_config
from .errors import ChaosError, NumericalFailure

__all__ = ["main", "run", "build_parser"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chaoskit", description="Wiener chaos tools for Gaussian-field driven equations.")
    p.add_argument("--version", action="version", version=f"chaoskit {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, heat=False):
        sp.add_argument("--config", help="JSON configuration or run manifest")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--kernel", choices=["wiener", "fbm", "ou_stable", "ou_unstable"])
        sp.add_argument("--H", type=float, help="Hurst index for --kernel fbm")
        sp.add_argument("--b", type=float, help="rate for the OU kernels")
        sp.add_argument("--T", type=float, help="time horizon")
        sp.add_argument("--grid", type=int, help="number of time steps")
        sp.add_argument("--order", type=int, help="maximal chaos order N")
        sp.add_argument("--dim", type=int, help="number of basis functions K")
        sp.add_argument("--support", type=int, help="maximal number of nonzero entries of alpha")
        sp.add_argument("--seed", type=int)
        if heat:
            sp.add_argument("--a", type=float, help="diffusivity")
            sp.add_argument("--sigma", type=float, help="noise intensity")
            sp.add_argument("--xgrid", type=int, help="number of spatial points")
            sp.add_argument("--L", type=float, help="period of the spatial domain")
        return sp

    common(sub.add_parser("inspect-field", help="kernel, variance and operator-norm bounds"))
    sp = common(sub.add_parser("integrate", help="Skorokhod or Stratonovich integral"))
    sp.add_argument("--integrand", help="'associated-process', 'constant' or an expression in t")
    sp.add_argument("--integral", choices=["skorokhod", "stratonovich"])
    sp.add_argument("--full", action="store_true", help="also write the running ChaosVector")
    sp = common(sub.add_parser("solve-sode", help="linear Wick SODE by the propagator"))
    sp.add_argument("--drift", type=float, help="constant drift a")
    sp.add_argument("--full", action="store_true", help="also write the final ChaosVector")
    common(sub.add_parser("solve-heat", help="closed-form stochastic heat equation"), heat=True)
    sp = common(sub.add_parser("solve-evolution", help="chaos solver for evolution equations"), heat=True)
    sp.add_argument("--advection", type=float)
    sp.add_argument("--reaction", type=float)
    sp.add_argument("--multiplicative", type=float)
    common(sub.add_parser("check-parabolicity", help="parabolicity margin of the heat equation"), heat=True)
    sp = common(sub.add_parser("mc-validate", help="Monte Carlo cross-validation"), heat=True)
    sp.add_argument("--target", choices=["wick-exp", "heat", "covariance"])
    sp.add_argument("--n-paths", dest="n_paths", type=int)
    return p


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    g = vars(args)
    kernel = None
    if g.get("kernel"):
        kernel = {"type": g["kernel"]}
        if g["kernel"] == "fbm":
            kernel["H"] = g["H"] if g.get("H") is not None else 0.75
        elif g["kernel"].startswith("ou"):
            kernel["b"] = g["b"] if g.get("b") is not None else 1.0
    elif g.get("H") is not None or g.get("b") is not None:
        kernel = dict(cfg.data["kernel"])
        if g.get("H") is not None:
            kernel["H"] = g["H"]
        if g.get("b") is not None:
            kernel["b"] = g["b"]
    flat = {
        "kernel": kernel,
        "out": g.get("out"),
        "seed": g.get("seed"),
        "grid.T": g.get("T"),
        "grid.n": g.get("grid"),
        "xgrid.nx": g.get("xgrid"),
        "xgrid.L": g.get("L"),
        "truncation.order": g.get("order"),
        "truncation.dim": g.get("dim"),
        "truncation.support": g.get("support"),
        "problem.a": g.get("a") if g.get("a") is not None else g.get("drift"),
        "problem.sigma": g.get("sigma"),
        "problem.advection": g.get("advection"),
        "problem.reaction": g.get("reaction"),
        "problem.multiplicative": g.get("multiplicative"),
        "integrand": g.get("integrand"),
        "integral": g.get("integral"),
        "target": g.get("target"),
        "n_paths": g.get("n_paths"),
    }
    cfg = cfg.override(**flat)
    cfg.data["command"] = args.command
    if args.command == "solve-sode" and g.get("drift") is None and not _has(args.config, "problem", "a"):
        cfg.data["problem"]["a"] = 0.0
    return cfg


def _has(path, sec, key) -> bool:
    if path is None:
        return False
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    d = d.get("config", d)
    return key in d.get(sec, {})


# ---------------------------------------------------------------------------
# artifact writers


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if np.isfinite(f) else None
    return o


def write_json(path: Path, obj) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, ensure_ascii=False)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# subcommands


def _heat_problem(cfg: ExperimentConfig):
    from .evolution_spde import HeatProblem

    pr = cfg.problem
    sg = cfg.xgrid()
    u0 = pr.get("u0", "gaussian")
    if isinstance(u0, str):
        if u0 != "gaussian":
            raise ConfigError(f"unknown u0 descriptor {u0!r}")
        u0 = None
    return HeatProblem(
        float(pr["a"]), float(pr["sigma"]), cfg.kernel(), cfg.grid(), sg, u0,
        basis_dim=cfg.truncation().max_dim,
    )


def cmd_inspect_field(cfg: ExperimentConfig, out: Path) -> dict:
    from .gaussian_field import FieldModel, kappa_lower_bound, norm_bound, operator_norm

    k, g = cfg.kernel(), cfg.grid()
    lat = g.nodes[:: max(1, g.n // 16)]
    rows = []
    for t in lat[1:]:
        for s in lat[lat < t]:
            try:
                dk = float(k.dt(t, s))
            except ChaosError:
                dk = None
            rows.append((t, s, float(k.eval(t, s)), dk))
    write_csv(out / "kernel.csv", ["t", "s", "K", "dK_dt"], rows)
    model = FieldModel(k, g, cfg.truncation().max_dim)
    R = np.asarray(model.variance(), float)
    write_csv(out / "variance.csv", ["t", "R_tt"], zip(g.nodes, R))
    summary = {"kernel": k.to_dict(), "grid": g.to_dict()}
    try:
        nb = norm_bound(k, g.T)
        summary.update({"K0": nb.K0, "K1": nb.K1, "norm_bound": nb.kappa})
    except ChaosError as exc:
        summary.update({"K0": None, "K1": None, "norm_bound": None, "norm_bound_message": str(exc)})
    summary["operator_norm"] = operator_norm(model.kstar_matrix)
    summary["kappa_lower_bound"] = kappa_lower_bound(k, g)
    write_json(out / "summary.json", summary)
    return summary


def _integrand(cfg: ExperimentConfig, model):
    from .skorokhod import associated_process, deterministic_integrand

    spec = cfg.data["integrand"]
    g = model.grid
    if isinstance(spec, list):
        return deterministic_integrand(spec, g, model.basis_dim)
    if spec == "associated-process":
        return associated_process(model)
    if spec == "constant":
        return deterministic_integrand(np.ones(g.n + 1), g, model.basis_dim)
    import sympy

    try:
        t = sympy.Symbol("t")
        f = sympy.lambdify(t, sympy.sympify(spec), "numpy")
        vals = np.broadcast_to(np.asarray(f(g.nodes), float), (g.n + 1,))
    except (sympy.SympifyError, TypeError, NameError) as exc:
        raise ConfigError(f"cannot parse integrand {spec!r}: {exc}") from None
    return deterministic_integrand(vals, g, model.basis_dim)


def cmd_integrate(cfg: ExperimentConfig, out: Path, full: bool = False) -> dict:
    from .gaussian_field import FieldModel
    from .skorokhod import check_integrability, skorokhod_integral, stratonovich_integral

    model = FieldModel(cfg.kernel(), cfg.grid(), cfg.truncation().max_dim)
    eta = _integrand(cfg, model)
    run = skorokhod_integral(eta, model, running=True)
    write_csv(
        out / "moments.csv", ["t", "mean", "second_moment"],
        zip(model.grid.nodes, run.mean(), run.second_moment()),
    )
    if cfg.data["integral"] == "stratonovich":
        res = stratonovich_integral(eta, model)
    else:
        res = skorokhod_integral(eta, model)
    write_json(out / "integral.json", res.to_json_obj())
    if full:
        write_json(out / "integral_process.json", run.to_json_obj())
    summary = {
        "integral": cfg.data["integral"],
        "mean": res.mean(),
        "second_moment": res.second_moment(),
        "dropped_mass": res.dropped_mass,
        "integrability": check_integrability(eta, model.grid),
    }
    write_json(out / "summary.json", summary)
    return summary


def cmd_solve_sode(cfg: ExperimentConfig, out: Path, full: bool = False) -> dict:
    from .evolution_sode import SodeProblem, propagate
    from .gaussian_field import FieldModel

    tr = cfg.truncation()
    g = cfg.grid()
    p = SodeProblem(FieldModel(cfg.kernel(), g, tr.max_dim), float(cfg.problem["a"]), 1.0)
    res = propagate(p, tr, store="final")
    write_csv(
        out / "moments.csv", ["t", "mean", "second_moment"],
        zip(g.nodes, res.mean, res.second_moment),
    )
    if full:
        write_json(out / "solution.json", res.vector.to_json_obj())
    summary = {
        "backend": res.backend,
        "n_indices": len(res.vector.indices),
        "mean_T": res.mean[-1],
        "second_moment_T": res.second_moment[-1],
        "grade_energy_T": res.energy[-1],
    }
    write_json(out / "summary.json", summary)
    return summary


def _parabolicity_rows(p, chk):
    from .evolution_spde import heat_moments

    ok = chk["margin"] >= -p.margin_tolerance()
    enorm = np.full(p.grid.n + 1, np.nan)
    if ok.any():
        sel = np.nonzero(ok)[0] if chk["holds"] else np.nonzero(np.cumprod(ok))[0]
        enorm[sel] = heat_moments(p, sel)["norm_H2"]
    return [(t, r, None if np.isnan(e) else e) for t, r, e in zip(chk["t"], chk["margin"], enorm)]


def cmd_check_parabolicity(cfg: ExperimentConfig, out: Path) -> dict:
    from .evolution_spde import check_parabolicity, check_parabolicity_general

    p = _heat_problem(cfg)
    chk = check_parabolicity(p)
    write_csv(out / "margin.csv", ["t", "margin", "E_norm_H2"], _parabolicity_rows(p, chk))
    gen = check_parabolicity_general(p.to_evolution())
    summary = {
        "holds": chk["holds"],
        "first_violation_t": chk["first_violation_t"],
        "delta0": gen["delta0"],
        "message": chk["message"],
        "general": {k: v for k, v in gen.items() if k != "delta0"},
    }
    write_json(out / "summary.json", summary)
    return summary


def cmd_solve_heat(cfg: ExperimentConfig, out: Path) -> dict:
    from .evolution_spde import check_parabolicity, heat_moments, solve_heat_closed
    from .gaussian_field import FieldModel
    from .montecarlo import sample_paths

    p = _heat_problem(cfg)
    mom = heat_moments(p)  # raises NegativeVariance before anything is written
    chk = check_parabolicity(p)
    write_csv(out / "margin.csv", ["t", "margin", "E_norm_H2"], zip(mom["t"], chk["margin"], mom["norm_H2"]))
    model = p.field_model() if not p.sigma_is_constant else FieldModel(p.kernel, p.grid, p.basis_dim)
    X = sample_paths(model, 1, cfg.seed).paths[0]
    sample = solve_heat_closed(p, X, nodes=[p.grid.n])[0]
    write_csv(out / "solution.csv", ["x", "mean_T", "sample_T"], zip(p.space.x, mom["mean"][-1], sample))
    summary = {"holds": chk["holds"], "first_violation_t": chk["first_violation_t"],
               "E_norm_H2_T": mom["norm_H2"][-1], "seed": cfg.seed}
    write_json(out / "summary.json", summary)
    return summary


def _evolution_problem(cfg: ExperimentConfig):
    from .evolution_spde import EvolutionProblem, spectral_derivative

    hp = _heat_problem(cfg)
    pr = cfg.problem
    sg = hp.space
    D1, D2, I = spectral_derivative(sg, 1), spectral_derivative(sg, 2), np.eye(sg.nx)
    A = float(pr["a"]) * D2 + float(pr.get("advection", 0.0)) * D1 + float(pr.get("reaction", 0.0)) * I
    M = float(pr["sigma"]) * D1 + float(pr.get("multiplicative", 0.0)) * I
    from .gaussian_field import FieldModel

    model = FieldModel(hp.kernel, hp.grid, hp.basis_dim)
    return EvolutionProblem(A, [M], [model], hp.u0, sg)


def cmd_solve_evolution(cfg: ExperimentConfig, out: Path) -> dict:
    from .evolution_spde import check_parabolicity_general, energy_report, solve_evolution_chaos

    p = _evolution_problem(cfg)
    tr = cfg.truncation()
    sol = solve_evolution_chaos(p, tr, store="final")
    write_csv(out / "solution.csv", ["x", "mean_T", "second_moment_T"],
              zip(p.space.x, sol.mean(), sol.second_moment()))
    write_csv(out / "energy.csv", ["t", "E_norm_H2"], zip(p.grid.nodes, sol.norm_H2))
    gen = check_parabolicity_general(p)
    rep = energy_report(sol, p, gen["delta0"])
    summary = {"holds": gen["holds"], "delta0": gen["delta0"], "parabolicity": gen,
               "energy": rep, "backend": sol.backend}
    write_json(out / "summary.json", summary)
    return summary


def cmd_mc_validate(cfg: ExperimentConfig, out: Path) -> dict:
    from .gaussian_field import FieldModel
    from .montecarlo import validate_covariance, validate_heat_solution, validate_wick_exponential

    target = cfg.data["target"]
    n_paths, seed = int(cfg.data["n_paths"]), cfg.seed
    if target == "heat":
        res = validate_heat_solution(_heat_problem(cfg), n_paths, seed)
        rows = [("mean", res["t"], x, e, r, s, abs(e - r) <= 3 * res["max_se"])
                for x, e, r, s in zip(res["x"], res["estimate"], res["reference"], res["se"])]
        write_csv(out / "mc.csv", ["quantity", "t", "x", "estimate", "reference", "se", "pass"], rows)
    else:
        model = FieldModel(cfg.kernel(), cfg.grid(), cfg.truncation().max_dim)
        if target == "wick-exp":
            res = validate_wick_exponential(model, None, n_paths, seed, cfg.truncation().max_order)
        elif target == "covariance":
            res = validate_covariance(model, n_paths, seed)
        else:
            raise ConfigError(f"unknown target {target!r}")
        rows = [(r["quantity"], r.get("t"), r.get("s"), r["estimate"], r["reference"], r["se"], r["pass"])
                for r in res["rows"]]
        write_csv(out / "mc.csv", ["quantity", "t", "s", "estimate", "reference", "se", "pass"], rows)
    summary = {k: v for k, v in res.items() if k in ("target", "n_paths", "seed", "pass", "max_discrepancy",
                                                     "max_se", "lognormal_second_moment")}
    write_json(out / "summary.json", summary)
    return summary


_COMMANDS = {
    "inspect-field": cmd_inspect_field,
    "integrate": cmd_integrate,
    "solve-sode": cmd_solve_sode,
    "solve-heat": cmd_solve_heat,
    "solve-evolution": cmd_solve_evolution,
    "check-parabolicity": cmd_check_parabolicity,
    "mc-validate": cmd_mc_validate,
}


def _versions() -> dict:
    import scipy
    import sympy

    return {"chaoskit": __version__, "backend": _backend.BACKEND, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "sympy": sympy.__version__}


def run(command: str, cfg: ExperimentConfig, **opts) -> dict:
    """Run ``command`` with a resolved configuration; returns the JSON summary."""
    if command not in _COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary = _COMMANDS[command](cfg, out, **opts)
    elapsed = time.perf_counter() - t0
    d = cfg.to_dict()
    d["command"] = command
    write_json(out / "manifest.json", {
        "command": command,
        "config": d,
        "versions": _versions(),
        "timings": {"total_s": elapsed},
        "artifacts": sorted(f.name for f in out.iterdir() if f.name != "manifest.json"),
    })
    return summary


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _resolve(args)
        opts = {"full": True} if getattr(args, "full", False) else {}
        summary = run(args.command, cfg, **opts)
    except NumericalFailure as exc:
        print(f"chaoskit: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ChaosError, ValueError) as exc:
        print(f"chaoskit: configuration error: {exc}", file=sys.stderr)
        return 1
    json.dump(_jsonable(summary), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
