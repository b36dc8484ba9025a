"""Stage functions behind the command-line subcommands.

Every ``run_*`` takes a resolved config and an output directory, writes its
artifacts there and returns a JSON-serializable report.  Failures surface as
:class:`~malab.exceptions.MalabError` subclasses, which the CLI maps onto
exit codes.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from . import io
from .asymptotics import (AnnulusSpec, fit_decomposition, fractional_annuli, geometric_annuli, green_decay,
                          hessian_eigen_range, level_sets, period_lattice, quotient_scan)
from .calculus import laplacian_array
from .config import density_from_config
from .corrector import CellCorrector, normalize_periodic, separable_corrector_oracle
from .density import DensitySpec, RadialDensitySpec, cell_average, verify_assumptions
from .dirichlet import QuadraticProfile, boundary_from_function, boundary_from_profile, newton_solve
from .exceptions import AssumptionError, GridError, SolverError
from .grid import BoxGrid, PeriodicGrid, ScalarField
from .radial import RadialSolution, log_growth_table, parabola_deviation, radial_det_check, radial_sigma, theorem_sigma

TIMING_KEYS = ("wall_time", "runtime")


def _tag(x: float) -> str:
    return f"{x:g}".replace(".", "p").replace("+", "")


def _solver_opts(cfg: dict) -> dict:
    s = cfg["solver"]
    return {k: s[k] for k in ("tol", "max_newton", "max_linear", "damping_levels", "linear_solver",
                              "linear_tol", "cvx_factor")}


# ---------------------------------------------------------------------------
# radial
# ---------------------------------------------------------------------------


def run_radial(cfg: dict, out: Path) -> dict:
    r = cfg["radial"]
    if not r["cases"]:
        raise AssumptionError("config has no radial cases")
    t0 = time.perf_counter()
    radii = np.geomspace(r["r_min"], r["r_max"], int(r["count"]))
    cases = []
    for case in r["cases"]:
        n, beta, d = int(case["n"]), float(case["beta"]), float(case.get("amp_d", 0.0))
        spec = RadialDensitySpec(d, beta)
        tag = f"n{n}_beta{_tag(beta)}"
        pd = parabola_deviation(spec, n, radii)
        io.write_csv(list(pd.rows()), out / f"deviation_{tag}.csv", ["r", "deviation", "local_slope"])
        sol = RadialSolution(spec, n)
        rep = {"n": n, "beta": beta, "amp_d": d, "c_star": pd.c_star, "extrapolated": pd.extrapolated,
               "det_check": radial_det_check(spec, n, np.geomspace(3.0, 100.0, 25))}
        checks = {"det_identity": rep["det_check"] <= 1e-8}
        if spec.is_flat:
            dev = max(abs(sol.u(x) - 0.5 * x * x) for x in radii)
            rep["max_abs_deviation"] = dev
            checks["flat_exact"] = dev < 1e-10
        elif beta > 2:
            lo, hi = r["slope_window"]
            sf = pd.slope(lo, hi)
            rep.update({"slope": sf.slope, "slope_stderr": sf.stderr, "slope_window": [lo, hi]})
            if n >= 3:
                rep["radial_sigma"] = radial_sigma(n, beta)
                rep["theorem_sigma"] = theorem_sigma(n, beta)
                checks["slope_matches_radial_sigma"] = abs(sf.slope + rep["radial_sigma"]) <= r["slope_tolerance"]
        else:
            table = log_growth_table(spec, n, radii)
            for row in table:
                row["shifted"] = row["deviation"] - pd.c_star
                row["shifted_ratio"] = row["shifted"] / np.log(row["r"])
            io.write_csv(table, out / f"log_ratio_{tag}.csv", ["r", "deviation", "ratio", "shifted", "shifted_ratio"])
            ra, rb = r["log_ratio_radii"]
            qa = (sol.deviation(ra) - pd.c_star) / np.log(ra)
            qb = (sol.deviation(rb) - pd.c_star) / np.log(rb)
            drift = abs(qb / qa - 1.0)
            rep.update({"log_ratio": [qa, qb], "log_ratio_radii": [ra, rb], "log_ratio_drift": drift})
            checks["log_growth"] = drift < r["log_ratio_tolerance"]
        rep["checks"] = checks
        rep["passed"] = all(checks.values())
        cases.append(rep)
    report = {"command": "radial", "cases": cases, "passed": all(c["passed"] for c in cases),
              "runtime": time.perf_counter() - t0}
    io.write_json(report, out / "radial_report.json")
    return report


# ---------------------------------------------------------------------------
# cell
# ---------------------------------------------------------------------------


def _periodic_base(cfg: dict):
    if "density" not in cfg:
        raise AssumptionError("config has no density table")
    spec = density_from_config(cfg["density"])
    base = spec.base
    if cfg["cell"]["normalize"]:
        nb, avg = normalize_periodic(base)
    else:
        nb, avg = base, cell_average(base)
    return spec, nb, avg


def _is_separable(base) -> bool:
    return all(not any(k[1:]) for k, _, _ in base.terms)


def solve_cell(nb, nodes: int, cell_cfg: dict):
    pg = PeriodicGrid(nb.dim, nb.periods, (int(nodes),) * nb.dim)
    fp = pg.sample(nb)
    est = CellCorrector(tol=cell_cfg["tol"], max_newton=cell_cfg["max_newton"])
    return est.fit(fp).corrector_, fp


def run_cell(cfg: dict, out: Path, name: str = "xi") -> dict:
    t0 = time.perf_counter()
    _, nb, avg = _periodic_base(cfg)
    cc = cfg["cell"]
    corr, fp = solve_cell(nb, cc["nodes"], cc)
    io.write_field(corr.xi, out / name, extra={"gauge": "mean-zero", "kappa": corr.kappa})
    rep = {"command": "cell", "scale": avg, "detA_expected": avg, **corr.to_dict()}
    checks = {"residual": corr.residual <= cc["tol"], "mean_zero": abs(corr.mean) <= 1e-12,
              "elliptic": corr.min_eigenvalue > 0}
    if cc.get("oracle") and _is_separable(nb):
        x = corr.xi.grid.axes()[0]
        g1 = lambda t: float(nb(np.array([[t] + [0.0] * (nb.dim - 1)]))[0])  # noqa: E731
        ref = separable_corrector_oracle(g1, x, nb.periods[0])
        delta = float(np.abs(corr.xi.values - ref.reshape((-1,) + (1,) * (nb.dim - 1))).max())
        rep["oracle_delta"] = delta
        checks["oracle"] = delta < 1e-6
    rep["checks"] = checks
    rep["passed"] = all(checks.values())
    rep["runtime"] = time.perf_counter() - t0
    io.write_json(rep, out / "corrector_report.json")
    rep["_field"] = corr
    return rep


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def manufactured_pair(eps: float):
    """``u* = |x|^2/2 + eps sin(2 pi x1) sin(2 pi x2)`` and ``det(D^2 u*)``."""
    k = 2 * np.pi

    def ustar(p):
        return 0.5 * (p**2).sum(-1) + eps * np.sin(k * p[..., 0]) * np.sin(k * p[..., 1])

    def fstar(p):
        s = np.sin(k * p[..., 0]) * np.sin(k * p[..., 1])
        c = np.cos(k * p[..., 0]) * np.cos(k * p[..., 1])
        return (1 - eps * k * k * s) ** 2 - (eps * k * k * c) ** 2

    return ustar, fstar


def amgm_margin(u: ScalarField, f: ScalarField) -> float:
    """``min (Lap u - n f^{1/n})`` over interior nodes."""
    g = u.grid
    lap = laplacian_array(u.values, g.spacings, False)
    fi = f.values[g.interior_slices()]
    return float(np.min(lap - g.dim * fi ** (1.0 / g.dim)))


def _solve_record(u, f, rep, L, m):
    return {"L": L, "m": m, "h": u.grid.spacing, **rep.to_dict(), "amgm_margin": amgm_margin(u, f)}


def run_manufactured(cfg: dict, out: Path) -> dict:
    mc = cfg["manufactured"]
    ustar, fstar = manufactured_pair(float(mc["amplitude"]))
    rows, solves = [], []
    t0 = time.perf_counter()
    for m in mc["m"]:
        g = BoxGrid(2, float(mc["L"]), int(m))
        f = g.sample(fstar)
        u, rep = newton_solve(g, f, boundary_from_function(g, ustar, "custom"), _solver_opts(cfg))
        err = float(np.abs(u.values - g.sample(ustar).values).max())
        rows.append({"m": int(m), "h": g.spacing, "error": err, "newton_iterations": rep.newton_iterations})
        solves.append(_solve_record(u, f, rep, float(mc["L"]), int(m)))
        io.write_field(u, out / f"u_manufactured_m{m}")
    for a, b in zip(rows[:-1], rows[1:]):
        b["ratio"] = a["error"] / b["error"]
    io.write_csv(rows, out / "convergence.csv", ["m", "h", "error", "ratio", "newton_iterations"])
    ratios = [r["ratio"] for r in rows[1:]]
    checks = {"converged": all(s["converged"] and s["convexity_violations"] == 0 for s in solves),
              "order2": all(3.2 <= q <= 4.8 for q in ratios),
              "newton_le_6": all(r["newton_iterations"] <= 6 for r in rows)}
    rep = {"command": "solve", "kind": "manufactured", "table": rows, "solves": solves, "checks": checks,
           "passed": all(checks.values()), "runtime": time.perf_counter() - t0}
    io.write_json(rep, out / "solve_report.json")
    return rep


def solve_boxes(cfg: dict, out: Path, corr=None, grids=None) -> list:
    """Solve on every box of the config; returns ``[(grid, u, f, record)]``."""
    spec, nb, avg = _periodic_base(cfg)
    nspec = DensitySpec(nb, spec.amp_d, spec.beta, spec.d1)
    if corr is None and nb.terms:
        corr, _ = solve_cell(nb, cfg["cell"]["nodes"], cfg["cell"])
    if grids is None:
        gc = cfg["grid"]
        grids = [BoxGrid(int(gc["dim"]), float(L), int(m)) for L in gc["L"] for m in gc["m"]]
    results = []
    for g in grids:
        f = g.sample(nspec)
        xi = corr.xi if nb.terms else None
        bd = boundary_from_profile(g, QuadraticProfile.identity(g.dim), xi)
        u, rep = newton_solve(g, f, bd, _solver_opts(cfg))
        rec = _solve_record(u, f, rep, g.half_width, g.nodes_per_axis)
        tag = f"L{_tag(g.half_width)}_m{g.nodes_per_axis}"
        if out is not None:
            io.write_field(u, out / f"u_{tag}", extra={"density": cfg["density"], "profile": "identity"})
            io.write_json(rec, out / f"solve_{tag}.json")
        results.append((g, u, f, rec))
    return results


def run_solve(cfg: dict, out: Path) -> dict:
    if "manufactured" in cfg:
        return run_manufactured(cfg, out)
    if "grid" not in cfg:
        raise AssumptionError("config has neither a grid nor a manufactured table")
    t0 = time.perf_counter()
    results = solve_boxes(cfg, out)
    recs = [r[3] for r in results]
    ok = all(r["converged"] and r["convexity_violations"] == 0 for r in recs)
    rep = {"command": "solve", "kind": "density", "solves": recs, "passed": ok, "runtime": time.perf_counter() - t0}
    io.write_json(rep, out / "solve_report.json")
    if not ok:
        raise SolverError("a solve did not converge cleanly")
    return rep


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _annuli(cfg: dict, grid: BoxGrid) -> list:
    a = cfg["analysis"]
    geo = a.get("annuli_geometric")
    if geo:
        return geometric_annuli(grid, int(geo["count"]), float(geo["r_min_fraction"]) * grid.half_width,
                                boundary_cells=int(a["boundary_cells"]))
    fr = list(a["annuli"])
    # keep the fitting annulus clear of the boundary layer
    fr[-1] = min(fr[-1], 1.0 - a["boundary_cells"] * grid.spacing / grid.half_width)
    return fractional_annuli(grid, fr)


def analyze_field(cfg: dict, u: ScalarField, out: Path, name: str, fp=None, f: ScalarField = None) -> dict:
    a = cfg["analysis"]
    g = u.grid
    if not isinstance(g, BoxGrid):
        raise GridError("analysis needs a box-grid field")
    annuli = _annuli(cfg, g)
    fit = fit_decomposition(u, annuli, fp, K=int(a["K"]))
    io.write_json(fit.to_dict(), out / f"decomposition_{name}.json")
    io.write_csv(list(fit.rows()), out / f"annuli_{name}.csv")
    rep = {"name": name, "L": g.half_width, "m": g.nodes_per_axis, "detA": fit.detA, "sigma": fit.sigma,
           "sigma_stderr": fit.sigma_stderr, "flags": fit.flags, "spd": fit.profile is not None}
    lo, hi = a["inner_annulus"]
    inner = AnnulusSpec(g, lo * g.half_width, hi * g.half_width)
    rep["inner_residual"] = fit.annulus_residual(u, inner)
    if fp is not None:
        rep["detA_gap"] = fit.detA - cell_average(fp)
    if a["quotients"] and fp is not None:
        lattice = period_lattice(fp.periods, int(a["lattice_order"]))
        qa = fractional_annuli_from_zero(g, a["quotient_annuli"])
        stats = quotient_scan(u, lattice, qa)
        rows = [vars(s) for s in stats]
        io.write_csv(rows, out / f"quotients_{name}.csv")
        rep["quotients"] = rows
        emin, emax = hessian_eigen_range(u, g.half_width / 2)
        rep["hessian_eigen_range"] = [emin, emax]
    if a["level_sets"]:
        Ms = [fr * g.half_width**2 / 2 for fr in a["M_fractions"]]
        ls = level_sets(u, Ms, profile=fit.profile)
        io.write_csv(list(ls.table()), out / f"level_sets_{name}.csv")
        rep["level_set_exponent"] = ls.exponent
        rep["level_set_stderr"] = ls.exponent_stderr
        rep["level_sets"] = ls.to_dict()["rows"]
    if a["green"] and g.dim == 3:
        gd = green_decay(u, window=a["green_window"])
        io.write_json(gd.to_dict(), out / f"green_{name}.json")
        rep["green_slope"] = gd.slope
    if f is not None:
        rep["amgm_margin"] = amgm_margin(u, f)
    io.write_json(rep, out / f"analysis_{name}.json")
    return rep


def fractional_annuli_from_zero(grid: BoxGrid, fractions) -> list:
    """Like :func:`fractional_annuli` but a leading 0 means "from the centre"."""
    fr = [max(x, 1e-9) for x in fractions]
    return fractional_annuli(grid, fr)


def radial_box_sample(cfg: dict) -> list:
    """Sample the radial solutions of ``cfg['radial']`` on the configured boxes."""
    gc = cfg["grid"]
    fields = []
    for case in cfg["radial"]["cases"]:
        n = int(case["n"])
        if n != int(gc["dim"]):
            continue
        sol = RadialSolution(RadialDensitySpec(float(case.get("amp_d", 0.0)), float(case["beta"])), n)
        for L in gc["L"]:
            for m in gc["m"]:
                g = BoxGrid(n, float(L), int(m))
                fields.append((f"radial_n{n}_beta{_tag(case['beta'])}_L{_tag(L)}_m{m}",
                               ScalarField(g, sol.sample(g.points()))))
    if not fields:
        raise AssumptionError("no radial case matches grid.dim")
    return fields


def run_analyze(cfg: dict, out: Path, inputs=()) -> dict:
    t0 = time.perf_counter()
    fp = None
    if "density" in cfg:
        _, fp, _ = _periodic_base(cfg)
    if inputs:
        fields = [(Path(p).with_suffix("").name, io.read_field(p)) for p in inputs]
    elif cfg["radial"]["cases"] and "grid" in cfg:
        fields = radial_box_sample(cfg)
    else:
        raise AssumptionError("analyze needs solution files or a radial config with a grid")
    reps = [analyze_field(cfg, u, out, name, fp) for name, u in fields]
    report = {"command": "analyze", "fields": reps, "runtime": time.perf_counter() - t0}
    io.write_json(report, out / "analysis_report.json")
    return report


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------


class Stage:
    """Writes ``stage.json`` so partial runs record how far they got."""

    def __init__(self, out: Path):
        self.out = out
        self.done = []

    def enter(self, name: str):
        self.current = name
        io.write_json({"stage": name, "status": "running", "completed": self.done}, self.out / "stage.json")

    def leave(self):
        self.done.append(self.current)
        io.write_json({"stage": self.current, "status": "done", "completed": self.done}, self.out / "stage.json")

    def fail(self, exc: Exception):
        io.write_json({"stage": self.current, "status": "failed", "error": f"{type(exc).__name__}: {exc}",
                       "completed": self.done}, self.out / "stage.json")


def _monotone(values, slack: float, floor: float = 1e-10) -> bool:
    """Non-increasing up to relative ``slack``; deviations below ``floor`` count as zero."""
    v = [x for x in values if np.isfinite(x)]
    return all(b <= (1 + slack) * a + floor for a, b in zip(v[:-1], v[1:]))


def run_experiment(cfg: dict, out: Path, config_hash: str = "") -> dict:
    t0 = time.perf_counter()
    stage = Stage(out)
    a = cfg["analysis"]
    report = {"command": "experiment", "name": cfg["name"], "config_hash": config_hash, "stages": {}}
    try:
        stage.enter("verify_assumptions")
        spec = density_from_config(cfg["density"])
        ar = verify_assumptions(spec, int(cfg["verify"]["sample_count"]), int(cfg["seed"]))
        io.write_json(ar.to_dict(), out / "assumptions.json")
        report["stages"]["verify_assumptions"] = ar.to_dict()
        if not ar.passed:
            raise AssumptionError("density violates the structural assumptions (see assumptions.json)")
        stage.leave()

        stage.enter("normalize")
        _, nb, avg = _periodic_base(cfg)
        report["stages"]["normalize"] = {"scale": avg}
        stage.leave()

        stage.enter("corrector")
        corr = None
        if nb.terms:
            crep = run_cell(cfg, out)
            corr = crep.pop("_field")
            report["stages"]["corrector"] = crep
            if not crep["passed"]:
                raise SolverError("corrector did not meet its tolerance")
        stage.leave()

        stage.enter("solve")
        results = solve_boxes(cfg, out, corr)
        recs = [r[3] for r in results]
        report["stages"]["solve"] = recs
        stage.leave()

        stage.enter("analysis")
        analyses = [analyze_field(cfg, u, out, f"L{_tag(g.half_width)}_m{g.nodes_per_axis}", nb, f)
                    for g, u, f, _ in results]
        report["stages"]["analysis"] = analyses
        green = None
        if a["green"] and nb.dim == 3:
            gg = a["green_grid"]
            gcorr = None
            if nb.terms:
                gcorr, _ = solve_cell(nb, gg["corrector_nodes"], cfg["cell"])
            grid = BoxGrid(3, float(gg["L"]), int(gg["m"]))
            (_, ug, _, grec), = solve_boxes(cfg, None, gcorr, [grid])
            identity = green_decay(grid.sample(lambda x: 0.5 * (x**2).sum(-1)), window=a["green_window"])
            solver = green_decay(ug, window=a["green_window"])
            green = {"grid": gg, "identity": identity.to_dict(), "solver": solver.to_dict(),
                     "solve_converged": grec["converged"]}
            io.write_json(green, out / "green.json")
            report["stages"]["green"] = green
        stage.leave()
    except Exception as exc:
        stage.fail(exc)
        report["failed_stage"] = stage.current
        report["error"] = f"{type(exc).__name__}: {exc}"
        report["runtime"] = time.perf_counter() - t0
        io.write_json(report, out / "run_report.json")
        raise

    stage.enter("criteria")
    tol = cfg["solver"]["tol"]
    n = nb.dim
    checks = {
        "assumptions": ar.passed,
        "solves_converged": all(r["converged"] and r["convexity_violations"] == 0 for r in recs),
        "detA": all(abs(x["detA_gap"]) <= a["detA_tolerance"] for x in analyses),
        "amgm": all(x["amgm_margin"] >= -10 * tol for x in analyses),
    }
    if corr is not None:
        checks["corrector_residual"] = report["stages"]["corrector"]["residual"] <= cfg["cell"]["tol"]
    if len(analyses) >= 2:
        small, large = analyses[0]["inner_residual"], analyses[-1]["inner_residual"]
        ratio = small / large if large > 0 else (np.inf if small > 0 else np.nan)
        report["inner_residual_ratio"] = ratio
        trivial = max(small, large) <= 1e-10
        checks["inner_residual_ratio"] = bool(trivial or ratio >= a["inner_ratio_min"])
    if a["quotients"]:
        devs = [[q["deviation"] for q in x["quotients"]] for x in analyses]
        checks["quotient_deviation"] = all(max(d) <= a["quotient_max_deviation"] for d in devs)
        checks["quotient_monotone"] = all(_monotone(d, a["monotone_slack"]) for d in devs)
        c1, c2 = a["eig_interval"]
        checks["hessian_interval"] = all(c1 <= x["hessian_eigen_range"][0] and x["hessian_eigen_range"][1] <= c2
                                         for x in analyses)
    if a["level_sets"]:
        checks["level_set_growth"] = all(abs(x["level_set_exponent"] - n / 2) <= a["level_set_tolerance"] * n / 2
                                         for x in analyses)
    if green is not None:
        lo, hi = a["green_slope_range"]
        checks["green_identity"] = -1.15 <= green["identity"]["slope"] <= -0.85
        checks["green_solver"] = lo <= green["solver"]["slope"] <= hi
    report["checks"] = {k: bool(v) for k, v in checks.items()}
    report["passed"] = all(report["checks"].values())
    report["runtime"] = time.perf_counter() - t0
    io.write_json(report, out / "run_report.json")
    stage.leave()
    return report
