"""Command-line entry point.

Exit codes: 0 success/converged, 1 input error, 2 non-convergence,
3 convexity certificate failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import artifacts
from .asymptotic import ExhaustionError, ExhaustionSchedule, solve_asymptotic
from .barriers import phi_mean_convexity
from .functional import ColumnSet, area_functional, dual_area, miranda_rearrange, subgraph, subgraph_perimeter
from .geometry import GeometryError
from .models import PRESETS, get_preset, h2_geodesic, psi_from_spec, resolve_model
from .solver import SolveConfig, solve_dirichlet

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_CONVEXITY = 0, 1, 2, 3


class InputError(Exception):
    pass


def _thread_limit():
    value = os.environ.get("CONFORMAL_PLATEAU_THREADS")
    if not value:
        return nullcontext()
    try:
        limit = int(value)
    except ValueError:
        raise InputError(f"CONFORMAL_PLATEAU_THREADS must be an integer, got {value!r}") from None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return nullcontext()
    return threadpool_limits(limits=limit)


def _load_model(args):
    try:
        preset = resolve_model(args.model)
        return preset.instantiate(h=args.h)
    except (ValueError, GeometryError, OSError) as exc:
        raise InputError(f"model: {exc}") from exc


def _psi(args, model):
    try:
        if args.psi_csv:
            vals = artifacts.read_boundary_csv(Path(args.psi_csv), model.grid, model.dom.boundary)
            psi = np.zeros(model.grid.size)
            psi[model.dom.boundary] = vals
            return psi.reshape(model.grid.shape)
        return psi_from_spec(args.psi, model)
    except (ValueError, OSError) as exc:
        raise InputError(f"boundary data: {exc}") from exc


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _solve_cfg(args) -> SolveConfig:
    try:
        return SolveConfig(tol_residual=args.tol, max_newton=args.max_iter)
    except ValueError as exc:
        raise InputError(f"solver config: {exc}") from exc


def cmd_models(args) -> int:
    if args.action == "list":
        for name in sorted(PRESETS):
            print(f"{name:22s} {PRESETS[name].description}")
        return EXIT_OK
    if not args.name:
        raise InputError("models show needs a preset name")
    try:
        preset = get_preset(args.name)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    text = artifacts.dumps(preset.to_json())
    if args.out:
        out = _out(args)
        (out / f"{preset.name}.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_solve(args) -> int:
    model = _load_model(args)
    psi = _psi(args, model)
    u, rep = solve_dirichlet(model.dom, psi, model.phi, model.g, _solve_cfg(args))
    out = _out(args)
    artifacts.write_field_csv(out / "solution.csv", model.grid, u, model.dom.inside)
    (out / "history.csv").write_text(rep.history_csv())
    report = {"config": _config(args), "model": model.preset.to_json(), "report": rep.to_json()}
    if args.psi.startswith("geodesic:") and model.grid.dim_n == 1:
        R, c = (float(v) for v in args.psi.split(":", 1)[1].split(","))
        exact = h2_geodesic(R, c).u(model.grid.coords()[0])
        report["oracle_linf_error"] = float(np.nanmax(np.abs(u - exact)))
    artifacts.write_json(out / "report.json", report)
    print(f"{'converged' if rep.converged else 'NOT converged'}: iterations={rep.iterations} "
          f"residual={rep.final_residual:.3e} max_principle_ok={rep.max_principle_ok}")
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def cmd_exhaust(args) -> int:
    model = _load_model(args)
    if not model.preset.collar:
        raise InputError(f"model {model.name!r} has no collar profile")
    psi = _psi(args, model)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            schedule = ExhaustionSchedule.default(model, ratio=args.schedule_ratio, r_min=args.r_min,
                                                  cauchy_tol=args.cauchy_tol)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except ValueError as exc:
        raise InputError(f"schedule: {exc}") from exc
    out = _out(args)
    try:
        res = solve_asymptotic(model, psi, schedule, _solve_cfg(args))
    except ExhaustionError as exc:
        artifacts.write_json(out / "report.json", {"config": _config(args), "error": str(exc), "r": exc.r})
        print(f"convexity failure: {exc}", file=sys.stderr)
        return EXIT_CONVEXITY
    (out / "history.csv").write_text(res.history_csv())
    artifacts.write_field_csv(out / "field.csv", model.grid, res.u, np.isfinite(res.u))
    report = {"config": _config(args), "model": model.preset.to_json(), "exhaustion": res.to_json()}
    if model.grid.dim_n == 1 and args.psi.startswith("trace:"):
        lo, hi = (float(v) for v in args.psi.split(":", 1)[1].split(","))
        a, b = np.exp(lo), np.exp(hi)
        # endpoints ln(R-c), ln(R+c) of the geodesic with these ideal points
        geo = h2_geodesic((a + b) / 2, (b - a) / 2)
        K = schedule.core
        report["oracle_linf_error_K"] = float(np.max(np.abs(res.u[K] - geo.u(model.grid.coords()[0])[K])))
    artifacts.write_json(out / "report.json", report)
    print(f"{res.message}; steps={len(res.rows)}")
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_check(args) -> int:
    model = _load_model(args)
    rep = phi_mean_convexity(model.dom, model.phi, model.g)
    out = _out(args)
    artifacts.write_json(out / "convexity.json", {"config": _config(args), "convexity": rep.to_json()})
    print(f"min convexity value {rep.minimum:.6g} (tol {rep.tol_geom:.3g}): "
          f"{'certified' if rep.certified else 'NOT certified'}")
    return EXIT_OK if rep.certified else EXIT_CONVEXITY


def cmd_perimeter(args) -> int:
    model = _load_model(args)
    u = _psi(args, model)
    area = area_functional(u, model.phi, model.g, model.dom)
    dual = dual_area(u, model.phi, model.g, model.dom)
    per = subgraph_perimeter(subgraph(u, model.dom), model.phi, model.g, model.dom)
    out = _out(args)
    artifacts.write_json(out / "area.json", {"config": _config(args), "area": dual.to_json(),
                                              "subgraph_perimeter": per,
                                              "perimeter_minus_area": per - area})
    print(f"area {area:.17g} dual {dual.dual_lower_bound:.17g} perimeter {per:.17g}")
    return EXIT_OK


def cmd_rearrange(args) -> int:
    model = _load_model(args)
    try:
        S = ColumnSet.from_json(json.loads(Path(args.columns).read_text()))
        w = miranda_rearrange(S)
        before = subgraph_perimeter(S, model.phi, model.g, model.dom)
    except (ValueError, OSError) as exc:
        raise InputError(f"column set: {exc}") from exc
    after = subgraph_perimeter(subgraph(np.where(np.isfinite(w), w, 0.0), model.dom, S.window),
                               model.phi, model.g, model.dom)
    out = _out(args)
    artifacts.write_field_csv(out / "w.csv", model.grid, w, np.isfinite(w), name="w")
    artifacts.write_json(out / "rearrange.json", {"config": _config(args), "perimeter_before": before,
                                                   "perimeter_after": after})
    print(f"perimeter {before:.12g} -> {after:.12g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conformal-plateau", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("models", help="list presets or print one as JSON")
    m.add_argument("action", choices=("list", "show"))
    m.add_argument("name", nargs="?")
    m.add_argument("--out", default=None)
    m.set_defaults(func=cmd_models)

    def common(sp, psi_default="const:0"):
        sp.add_argument("--model", required=True, help="preset name or model JSON path")
        sp.add_argument("--h", type=float, default=None, help="grid spacing (preset default if omitted)")
        sp.add_argument("--psi", default=psi_default, help="boundary data expression id")
        sp.add_argument("--psi-csv", default=None, help="CSV of boundary node values")
        sp.add_argument("--tol", type=float, default=1e-10)
        sp.add_argument("--max-iter", type=int, default=50)
        sp.add_argument("--out", default="out")

    s = sub.add_parser("solve", help="Dirichlet problem for the minimal graph equation")
    common(s)
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("exhaust", help="asymptotic Plateau problem by exhaustion")
    common(e)
    e.add_argument("--schedule-ratio", type=float, default=0.5)
    e.add_argument("--r-min", type=float, default=None)
    e.add_argument("--cauchy-tol", type=float, default=1e-6)
    e.set_defaults(func=cmd_exhaust)

    c = sub.add_parser("check", help="phi-mean convexity certificate")
    common(c)
    c.set_defaults(func=cmd_check)

    q = sub.add_parser("perimeter", help="primal/dual area and subgraph perimeter of a field")
    common(q)
    q.set_defaults(func=cmd_perimeter)

    r = sub.add_parser("rearrange", help="vertical rearrangement of a column set")
    common(r)
    r.add_argument("--columns", required=True, help="ColumnSet JSON")
    r.set_defaults(func=cmd_rearrange)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        with _thread_limit():
            return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
