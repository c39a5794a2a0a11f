"""Exhaustion by shrinking collars: Dirichlet solves on ``N_r = {d ≥ r}`` as ``r ↓ 0``."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .barriers import (BarrierConstants, BarrierError, barrier_constants, barrier_functions,
                       collar_data, phi_mean_convexity)
from .geometry import Domain, make_domain
from .models import Model
from .solver import SolveConfig, solve_dirichlet


class ExhaustionError(RuntimeError):
    """A schedule domain failed its convexity certificate."""

    def __init__(self, r: float, minimum: float):
        super().__init__(f"domain N_r with r = {r:.6g} is not phi-mean convex (min value {minimum:.3e})")
        self.r = r
        self.minimum = minimum


@dataclass(frozen=True, eq=False)
class ExhaustionSchedule:
    r_values: tuple[float, ...]
    core: np.ndarray                 # node mask K = {d ≥ r₀}
    r0: float
    cauchy_tol: float = 1e-6

    def __post_init__(self):
        r = np.asarray(self.r_values, dtype=float)
        if r.size == 0:
            raise ValueError("empty schedule")
        if np.any(r <= 0) or np.any(r >= self.r0):
            raise ValueError("schedule radii must lie in (0, r0)")
        if np.any(np.diff(r) >= 0):
            raise ValueError("schedule radii must be strictly decreasing")
        if not np.any(self.core):
            raise ValueError("compact core K is empty")

    @classmethod
    def default(cls, model: Model, ratio: float = 0.5, r0: float | None = None,
                r_min: float | None = None, cauchy_tol: float = 1e-6) -> "ExhaustionSchedule":
        """Geometric radii ``r₀/2, r₀/2·q, …`` down to ``r_min = 4h`` (appended exactly).

        Radii below ``2h`` are dropped with a warning.
        """
        if not 0 < ratio < 1:
            raise ValueError("schedule ratio must lie in (0, 1)")
        h = max(model.grid.spacing)
        r0 = float(model.preset.collar["r0"]) if r0 is None else float(r0)
        r_min = 4.0 * h if r_min is None else float(r_min)
        if r_min < 2.0 * h:
            warnings.warn(f"schedule floor {r_min:g} is below 2h = {2 * h:g}; truncated", stacklevel=2)
            r_min = 2.0 * h
        rs = []
        r = r0 / 2.0
        while r > r_min * (1 + 1e-12):
            rs.append(r)
            r *= ratio
        rs.append(r_min)
        dist = model.dist_to_dN()
        return cls(r_values=tuple(rs), core=model.dom.inside & (dist >= r0), r0=r0,
                   cauchy_tol=cauchy_tol)


def extend_boundary_data(psi: np.ndarray, dom: Domain, dist: np.ndarray):
    """Transport boundary values inward along the characteristics of ``dist``.

    Nodes are visited in increasing ``dist``; each takes the upwind average
    ``Σ w_i ψ(q_i) / Σ w_i`` over its axis neighbours ``q_i`` with smaller
    distance, ``w_i = (d_p - d_{q_i})/ℓ_i²``.  This is the discrete form of
    ``⟨Dψ, Dd⟩ = 0`` and copies values exactly along straight axis-aligned
    descent paths.  A node whose two neighbours on one axis are equally
    upwind (within ``h/2``) with different values is averaged and flagged.

    Returns ``(psi_ext, flagged)``; values are NaN off the domain.
    """
    grid = dom.grid
    n = grid.dim_n
    d = np.asarray(dist, dtype=float).reshape(-1)
    inside = dom.inside.reshape(-1)
    psi = np.asarray(psi, dtype=float).reshape(-1)
    out = np.full(grid.size, np.nan)
    out[dom.boundary] = psi[dom.boundary]
    known = np.zeros(grid.size, dtype=bool)
    known[dom.boundary] = True
    flagged = np.zeros(grid.size, dtype=bool)
    idx = np.indices(grid.shape).reshape(n, -1)
    h = grid.spacing
    order = [int(p) for p in np.argsort(d, kind="stable") if inside[p] and not known[p]]
    for p in order:
        num = den = 0.0
        ref = None
        for i in range(n):
            cands = []
            for off in (-1, 1):
                j = idx[:, p].copy()
                j[i] += off
                if grid.periodic[i]:
                    j[i] %= grid.shape[i]
                elif not 0 <= j[i] < grid.shape[i]:
                    continue
                q = int(np.ravel_multi_index(tuple(j), grid.shape))
                if known[q] and d[q] < d[p]:
                    cands.append(q)
            if not cands:
                continue
            if len(cands) == 2 and abs(d[cands[0]] - d[cands[1]]) < 0.5 * h[i] \
                    and out[cands[0]] != out[cands[1]]:
                flagged[p] = True
                val = 0.5 * (out[cands[0]] + out[cands[1]])
                q = cands[0]
            else:
                q = min(cands, key=lambda c: d[c])
                val = out[q]
            w = (d[p] - d[q]) / h[i] ** 2
            ref = val if ref is None else ref
            # offsets from the first value keep constant data exact
            num += w * (val - ref)
            den += w
        if den > 0:
            out[p] = ref + num / den
            known[p] = True
    return out.reshape(grid.shape), flagged.reshape(grid.shape)


HISTORY_COLUMNS = ("r", "iterations", "residual", "linf_diff_K", "min_u", "max_u",
                   "convexity_min", "barrier_lower_margin", "barrier_upper_margin")


@dataclass
class ExhaustionResult:
    u: np.ndarray
    rows: list = field(default_factory=list)
    converged: bool = False
    message: str = ""
    barrier: BarrierConstants | None = None
    certificates: list = field(default_factory=list)
    core_solutions: list = field(default_factory=list)
    bound_ok: bool = True
    contraction_ok: bool = True

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in self.rows:
            w.writerow([f"{row[0]:.17g}", row[1]] + [f"{v:.17g}" for v in row[2:]])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "converged": self.converged,
            "message": self.message,
            "uniform_bound_ok": self.bound_ok,
            "cauchy_contraction_ok": self.contraction_ok,
            "barrier": None if self.barrier is None else self.barrier.to_json(),
            "certificates": self.certificates,
            "history": [dict(zip(HISTORY_COLUMNS, r)) for r in self.rows],
            "note": "convexity is certified on the sampled schedule radii only",
        }


def solve_asymptotic(model: Model, psi_on_dN: np.ndarray, schedule: ExhaustionSchedule,
                     cfg: SolveConfig | None = None, stop_on_convergence: bool = True) -> ExhaustionResult:
    """Exhaust ``N`` by ``N_r`` and stop once the core solutions are Cauchy.

    ``psi_on_dN`` is read on the outermost boundary nodes of the model chart
    and extended inward with ``extend_boundary_data``.  Each solve starts
    from the previous solution, with the extended data on the new collar.
    Step ``k`` is compared on ``K`` with its predecessor (the first step
    with its initial guess).
    """
    cfg = cfg or SolveConfig()
    dist = model.dist_to_dN()
    psi_ext, _ = extend_boundary_data(psi_on_dN, model.dom, dist)
    b_vals = np.asarray(psi_on_dN, dtype=float).reshape(-1)[model.dom.boundary]
    lo, hi = float(b_vals.min()), float(b_vals.max())
    mu = max(abs(lo), abs(hi))
    h = max(model.grid.spacing)

    bc = None
    try:
        cd = collar_data(psi_ext, model.dom, model.g, dist, schedule.r0, model.phi)
        bc = barrier_constants((lo, hi), cd, r1_min=2 * h)
    except BarrierError as exc:
        warnings.warn(f"barrier constants unavailable: {exc}", stacklevel=2)
    u_plus = u_minus = None
    if bc is not None:
        u_plus, u_minus = barrier_functions(psi_ext, bc, dist)

    result = ExhaustionResult(u=np.full(model.grid.shape, np.nan), barrier=bc)
    K = schedule.core
    prev = None
    guess = np.where(model.dom.inside, psi_ext, np.nan)
    diffs = []
    for r in schedule.r_values:
        inside = model.dom.inside & (dist >= r - 1e-12)
        dom_r = make_domain(model.grid, model.g, inside)
        cert = phi_mean_convexity(dom_r, model.phi, model.g)
        result.certificates.append({"r": r, **cert.to_json()})
        if not cert.certified:
            raise ExhaustionError(r, cert.minimum)
        u0 = np.where(np.isfinite(guess), guess, psi_ext)
        u, rep = solve_dirichlet(dom_r, psi_ext, model.phi, model.g, cfg, u0=u0)
        ref = u0 if prev is None else prev
        diff = float(np.max(np.abs(u[K] - ref[K])))
        diffs.append(diff)
        vals = u[inside]
        result.bound_ok &= bool(np.all(np.abs(vals) <= mu + 1e-8))
        lower = upper = math.nan
        if bc is not None:
            band = inside & (dist >= h) & (dist <= bc.r1)
            if band.any():
                lower = float(np.min(u[band] - u_minus[band]))
                upper = float(np.min(u_plus[band] - u[band]))
        result.rows.append((r, rep.iterations, rep.final_residual, diff, rep.min_u, rep.max_u,
                            cert.minimum, lower, upper))
        result.core_solutions.append(u[K].copy())
        result.u = u
        if not rep.converged:
            result.message = f"solve at r = {r:.6g} did not converge: {rep.message}"
            break
        prev = u
        guess = u
        if diff <= schedule.cauchy_tol:
            result.converged = True
            if stop_on_convergence:
                break
    result.contraction_ok = bool(all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(diffs[1:], diffs[2:])))
    if not result.message:
        result.message = ("converged on the core" if result.converged
                          else f"Cauchy criterion unmet at schedule end (last diff {diffs[-1]:.3e})")
    return result
