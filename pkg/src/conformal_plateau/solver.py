"""Euler-Lagrange operator and a globalised Newton solver for the Dirichlet problem."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .functional import AreaDiscretization, _flat
from .geometry import ConformalFactor, Domain, MetricField, gradient_norm_sq
from .geometry.operators import _check_finite


@dataclass(frozen=True)
class SolveConfig:
    tol_residual: float = 1e-10
    max_newton: int = 50
    backtrack: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 20
    picard_fallback: bool = True
    damping: float = 1.0
    initial: str = "harmonic"       # or "zero": 0 inside, ψ on the boundary
    linear_rtol: float = 1e-13

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if self.max_newton < 1:
            raise ValueError("max_newton must be at least 1")
        if self.initial not in ("harmonic", "zero"):
            raise ValueError(f"unknown initial guess {self.initial!r}")


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    functional_value: float
    max_principle_ok: bool
    min_u: float
    max_u: float
    interior_grad_max: float
    converged: bool
    history: list = field(default_factory=list)
    message: str = ""

    def to_json(self) -> dict:
        d = asdict(self)
        d["history"] = [dict(zip(HISTORY_COLUMNS, row)) for row in self.history]
        return d

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in self.history:
            w.writerow([row[0]] + [f"{v:.17g}" for v in row[1:]])
        return buf.getvalue()


HISTORY_COLUMNS = ("iteration", "residual", "functional_value", "damping")
MAX_PRINCIPLE_SLACK = 1e-8


def el_operator(u: np.ndarray, phi: ConformalFactor, g: MetricField, dom: Domain) -> np.ndarray:
    """``L(u) = -div(Du/ω) - n⟨D log φ, Du/ω⟩`` at interior nodes (0 elsewhere).

    Assembled as the exact first variation of the discrete area divided by
    the nodal weight ``φⁿ√detσ·h̄``.
    """
    return _el(AreaDiscretization(dom, phi, g), _flat(u, dom), dom)


def _el(disc: AreaDiscretization, uf: np.ndarray, dom: Domain) -> np.ndarray:
    d = disc.gradient(uf)
    wt = disc.residual_weight()
    interior = dom.interior.reshape(-1)
    out = np.zeros_like(d)
    out[interior] = d[interior] / wt[interior]
    return out.reshape(dom.grid.shape)


def _boundary_values(psi: np.ndarray, dom: Domain) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    if psi.shape == dom.grid.shape:
        vals = psi.reshape(-1)[dom.boundary]
    elif psi.shape == (dom.boundary.size,):
        vals = psi
    else:
        raise ValueError("boundary data must be a grid field or one value per boundary node")
    if not np.all(np.isfinite(vals)):
        k = int(np.argmin(np.isfinite(vals)))
        node = tuple(int(i) for i in np.unravel_index(int(dom.boundary[k]), dom.grid.shape))
        raise ValueError(f"non-finite boundary value at node {node}")
    return vals


def _linear_solve(A: sp.csr_matrix, b: np.ndarray, rtol: float) -> np.ndarray:
    """Jacobi-preconditioned CG on the SPD system, direct solve if CG stalls."""
    if not np.any(b):
        return np.zeros_like(b)
    d = A.diagonal()
    M = sp.diags(1.0 / d)
    x, info = spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=max(10 * b.size, 100), M=M)
    if info != 0 or not np.all(np.isfinite(x)):
        x = spla.spsolve(A.tocsc(), b)
    return x


class _Problem:
    """Interior unknowns with strongly imposed boundary values."""

    def __init__(self, dom: Domain, phi: ConformalFactor, g: MetricField, psi_b: np.ndarray):
        self.dom = dom
        self.disc = AreaDiscretization(dom, phi, g)
        self.I = np.flatnonzero(dom.interior.reshape(-1))
        self.size = dom.grid.size
        self.base = np.zeros(self.size)
        self.base[dom.boundary] = psi_b
        self.wt = self.disc.residual_weight()[self.I]

    def full(self, uI: np.ndarray) -> np.ndarray:
        u = self.base.copy()
        u[self.I] = uI
        return u

    def F(self, u: np.ndarray) -> float:
        return self.disc.value(u)

    def dF(self, u: np.ndarray) -> np.ndarray:
        return self.disc.gradient(u)[self.I]

    def residual(self, u: np.ndarray) -> float:
        if self.I.size == 0:
            return 0.0
        r = self.dF(u) / self.wt
        return float(np.max(np.abs(r)))

    def sub(self, A: sp.csr_matrix) -> sp.csr_matrix:
        return A[self.I][:, self.I].tocsr()


def harmonic_extension(dom: Domain, psi_b: np.ndarray, phi: ConformalFactor, g: MetricField) -> np.ndarray:
    """Solve the linearisation at ``Du = 0`` with boundary data ``psi_b``.

    Works with ``v = u - ψ(first boundary node)`` so constant data is
    reproduced exactly.
    """
    shift = float(psi_b[0])
    prob = _Problem(dom, phi, g, psi_b - shift)
    if prob.I.size == 0:
        return prob.full(np.zeros(0)) + shift
    A = prob.disc.hessian(np.zeros(prob.size))
    rhs = -(A @ prob.base)[prob.I]
    vI = _linear_solve(prob.sub(A), rhs, 1e-14)
    return prob.full(vI) + shift


def solve_dirichlet(dom: Domain, psi: np.ndarray, phi: ConformalFactor, g: MetricField,
                    cfg: SolveConfig | None = None, u0: np.ndarray | None = None):
    """Minimal graph over ``dom`` with ``u = ψ`` on the boundary nodes.

    Newton on the interior unknowns with the analytic second variation,
    backtracking on the area (Armijo) that also refuses residual growth, and
    a frozen-``ω`` Picard step when backtracking is exhausted.  Returns the
    grid field (NaN outside the domain) and a ``SolveReport``.
    """
    cfg = cfg or SolveConfig()
    psi_b = _boundary_values(psi, dom)
    prob = _Problem(dom, phi, g, psi_b)
    if u0 is not None:
        u0 = np.asarray(u0, dtype=float)
        _check_finite(u0, dom.interior)
        u = prob.full(u0.reshape(-1)[prob.I])
    elif cfg.initial == "harmonic":
        u = harmonic_extension(dom, psi_b, phi, g)
    else:
        u = prob.full(np.zeros(prob.I.size))

    F = prob.F(u)
    res = prob.residual(u)
    history = [(0, res, F, cfg.damping)]
    damping = cfg.damping
    converged = res <= cfg.tol_residual
    it = 0
    message = "converged" if converged else ""
    while not converged and it < cfg.max_newton:
        it += 1
        grad = prob.dF(u)
        H = prob.sub(prob.disc.hessian(u))
        step = _linear_solve(H, -grad, cfg.linear_rtol)
        accepted, u_new, F_new, res_new, t = _line_search(prob, u, F, res, grad, step, damping, cfg)
        if not accepted and cfg.picard_fallback:
            A = prob.disc.frozen_operator(u)
            rhs = -(A @ prob.base)[prob.I]
            target = _linear_solve(prob.sub(A), rhs, cfg.linear_rtol)
            step = target - u[prob.I]
            accepted, u_new, F_new, res_new, t = _line_search(prob, u, F, res, grad, step, 1.0, cfg)
        if not accepted:
            message = f"line search failed at iteration {it}"
            break
        u, F, res = u_new, F_new, res_new
        history.append((it, res, F, t))
        converged = res <= cfg.tol_residual
    if converged:
        # the pass that detects convergence counts as an iteration
        it = max(it, 1)
        message = "converged"
    elif not message:
        message = f"no convergence within {cfg.max_newton} iterations"

    report = _report(u, prob, dom, g, psi_b, it, res, F, converged, history, message)
    out = np.full(dom.grid.size, np.nan)
    in_flat = dom.inside.reshape(-1)
    out[in_flat] = u[in_flat]
    return out.reshape(dom.grid.shape), report


def _line_search(prob, u, F, res, grad, step, t0, cfg):
    slope = float(grad @ step)
    slack = 1e-14 * max(abs(F), 1.0)
    t = t0
    for _ in range(cfg.max_backtracks + 1):
        uI = u[prob.I] + t * step
        if np.all(np.isfinite(uI)):
            cand = prob.full(uI)
            F_c = prob.F(cand)
            if math.isfinite(F_c):
                res_c = prob.residual(cand)
                if F_c <= F + cfg.armijo * t * min(slope, 0.0) + slack and res_c <= res:
                    return True, cand, F_c, res_c, t
        t *= cfg.backtrack
    return False, u, F, res, 0.0


def _report(u, prob, dom, g, psi_b, it, res, F, converged, history, message) -> SolveReport:
    in_flat = dom.inside.reshape(-1)
    vals = u[in_flat]
    lo, hi = float(psi_b.min()), float(psi_b.max())
    ok = bool(np.all(vals >= lo - MAX_PRINCIPLE_SLACK) and np.all(vals <= hi + MAX_PRINCIPLE_SLACK))
    if prob.I.size:
        field_ = np.where(dom.inside.reshape(-1), u, 0.0).reshape(dom.grid.shape)
        gn = np.sqrt(gradient_norm_sq(field_, dom.grid, g))
        gmax = float(np.max(gn[dom.interior]))
    else:
        gmax = 0.0
    return SolveReport(iterations=it, final_residual=float(res), functional_value=float(F),
                       max_principle_ok=ok, min_u=float(vals.min()), max_u=float(vals.max()),
                       interior_grad_max=gmax, converged=bool(converged), history=history,
                       message=message)


def check_comparison(u1: np.ndarray, u2: np.ndarray, psi1: np.ndarray, psi2: np.ndarray,
                     tol: float = MAX_PRINCIPLE_SLACK) -> bool:
    """Whether ``ψ₁ ≤ ψ₂`` on the boundary implies ``u₁ ≤ u₂ + tol`` everywhere.

    True vacuously when the boundary data is not ordered.
    """
    if np.any(np.asarray(psi1) > np.asarray(psi2)):
        return True
    diff = np.asarray(u1, dtype=float) - np.asarray(u2, dtype=float)
    diff = diff[np.isfinite(diff)]
    return bool(diff.size == 0 or diff.max() <= tol)


def interior_gradient_diagnostic(u: np.ndarray, dom: Domain, rho: float, center,
                                 g: MetricField) -> float:
    """``max |Du|_σ`` over the ball of radius ``ρ/2`` around ``center``.

    Balls are measured with the metric frozen at the node nearest to the
    centre; the full ball ``B_ρ`` must consist of interior nodes.
    """
    grid = dom.grid
    coords = grid.coords().reshape(grid.dim_n, -1)
    c = np.asarray(center, dtype=float).reshape(-1, 1)
    diff = coords - c
    for i, (p, (a, b)) in enumerate(zip(grid.periodic, grid.extents)):
        if p:
            L = grid.spacing[i] * grid.shape[i]
            diff[i] = (diff[i] + L / 2) % L - L / 2
    k = int(np.argmin(np.sum(diff**2, axis=0)))
    sig = g.sigma.reshape(-1, grid.dim_n, grid.dim_n)[k]
    r = np.sqrt(np.einsum("iq,ij,jq->q", diff, sig, diff))
    ball = r <= rho
    for i, (p, (a, b)) in enumerate(zip(grid.periodic, grid.extents)):
        if not p:
            reach = rho / math.sqrt(sig[i, i])
            if c[i, 0] - reach < a - 1e-12 or c[i, 0] + reach > b + 1e-12:
                raise ValueError("ball is not contained in the domain")
    if not np.all(dom.interior.reshape(-1)[ball]):
        raise ValueError("ball is not contained in the domain")
    field_ = np.where(dom.inside, u, 0.0)
    gn = np.sqrt(gradient_norm_sq(field_, grid, g)).reshape(-1)
    half = r <= rho / 2
    return float(gn[half].max())


def omega(u: np.ndarray, grid, g: MetricField, mask: np.ndarray | None = None) -> np.ndarray:
    """``ω = √(1 + |Du|²_σ)`` at nodes."""
    field_ = u if mask is None else np.where(mask, u, 0.0)
    return np.sqrt(1.0 + gradient_norm_sq(field_, grid, g))


def angle_function(u: np.ndarray, grid, g: MetricField, mask: np.ndarray | None = None) -> np.ndarray:
    """Angle function ``Θ = ⟨ν, ∂_r⟩ = 1/ω`` of the graph, in ``(0, 1]``."""
    return 1.0 / omega(u, grid, g, mask)
