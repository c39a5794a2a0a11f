"""φ-mean convexity certificates and logarithmic boundary barriers."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import ConformalFactor, Domain, MetricField, axis_derivative, boundary_mean_curvature
from .solver import el_operator, omega


class BarrierError(ValueError):
    """Raised when no admissible barrier constants exist."""


@dataclass(frozen=True, eq=False)
class ConvexityReport:
    values: np.ndarray          # H + n⟨D log φ, γ⟩ per boundary node, NaN where flagged
    conformal: np.ndarray       # values / φ, the mean curvature of ∂Ω×ℝ in M_φ
    minimum: float
    tol_geom: float
    certified: bool
    flagged: int

    def to_json(self) -> dict:
        finite = np.isfinite(self.values)
        return {"minimum": self.minimum, "tol_geom": self.tol_geom, "certified": self.certified,
                "flagged": self.flagged, "boundary_nodes": int(self.values.size),
                "maximum": float(np.max(self.values[finite])) if finite.any() else None,
                "conformal_minimum": float(np.min(self.conformal[finite])) if finite.any() else None}


def phi_mean_convexity(dom: Domain, phi: ConformalFactor, g: MetricField,
                       tol_geom: float | None = None) -> ConvexityReport:
    """``H_∂Ω + n⟨D log φ, γ⟩`` at every boundary node.

    Flagged (corner) nodes are excluded from the minimum.  The default
    tolerance is ``5·h`` with ``h`` the largest chart spacing.
    """
    n = dom.grid.dim_n
    H = boundary_mean_curvature(dom, g)
    drift = phi.log_phi_grad.reshape(n, -1)[:, dom.boundary]
    values = H + n * np.einsum("ik,ik->k", drift, dom.normals)
    values = np.where(dom.flagged, np.nan, values)
    conformal = values / phi.phi.reshape(-1)[dom.boundary]
    tol = 5.0 * max(dom.grid.spacing) if tol_geom is None else float(tol_geom)
    finite = np.isfinite(values)
    minimum = float(np.min(values[finite])) if finite.any() else math.nan
    return ConvexityReport(values=values, conformal=conformal, minimum=minimum, tol_geom=tol,
                           certified=bool(finite.any() and minimum >= -tol),
                           flagged=int(np.count_nonzero(dom.flagged)))


@dataclass(frozen=True)
class CollarData:
    """Sup-norm data of the extended boundary values on the collar ``d < r₀``."""

    r0: float
    sup_dpsi: float
    sup_d2psi: float
    sup_lap_psi: float
    c_g: float
    sup_drift: float = 0.0

    @property
    def Lambda(self) -> float:
        return max(self.sup_dpsi, self.sup_d2psi, self.sup_lap_psi, self.sup_drift)


def collar_data(psi_ext: np.ndarray, dom: Domain, g: MetricField, dist: np.ndarray, r0: float,
                phi: ConformalFactor | None = None) -> CollarData:
    """Measure ``|Dψ|``, ``|D²ψ|``, ``|Δψ|`` and the metric constant on ``{d < r₀}``.

    ``c_g = 1 + sup|D log √detσ|_σ``; ``|D²ψ|`` is the Frobenius norm of the
    chart Hessian with indices raised by σ.
    """
    grid = dom.grid
    n = grid.dim_n
    f = np.where(dom.inside & np.isfinite(psi_ext), psi_ext, 0.0)
    d1 = [axis_derivative(f, i, h, p) for i, (h, p) in enumerate(zip(grid.spacing, grid.periodic))]
    D = np.stack(d1)
    d2 = np.empty((n, n) + grid.shape)
    for i in range(n):
        for j in range(n):
            d2[i, j] = axis_derivative(d1[i], j, grid.spacing[j], grid.periodic[j])
    S = g.sigma_inv
    hess_sq = np.einsum("ij...,...ik,...jl,kl...->...", d2, S, S, d2)
    # Laplace-Beltrami in flux form
    flux = g.raise_index(D) * g.sqrt_det[None]
    lap = sum(axis_derivative(flux[i], i, grid.spacing[i], grid.periodic[i]) for i in range(n)) / g.sqrt_det
    logdet = np.log(g.sqrt_det)
    Dl = np.stack([axis_derivative(logdet, i, h, p) for i, (h, p) in enumerate(zip(grid.spacing, grid.periodic))])
    collar = dom.interior & (dist < r0)
    if not collar.any():
        raise BarrierError("collar {d < r0} contains no interior nodes")
    # one-sided second differences at chart edges are unreliable; sample the
    # collar away from the outermost two node layers
    core = collar & (dist >= np.nanmin(np.where(dom.inside, dist, np.nan)) + 2 * max(grid.spacing))
    sel = core if core.any() else collar
    sup_drift = 0.0
    if phi is not None:
        sup_drift = float(np.max(np.sqrt(g.norm_sq_covector(phi.log_phi_grad))[sel]))
    return CollarData(
        r0=float(r0),
        sup_dpsi=float(np.max(np.sqrt(np.maximum(g.norm_sq_covector(D), 0.0))[sel])),
        sup_d2psi=float(np.max(np.sqrt(np.maximum(hess_sq, 0.0))[sel])),
        sup_lap_psi=float(np.max(np.abs(lap)[sel])),
        c_g=1.0 + float(np.max(np.sqrt(np.maximum(g.norm_sq_covector(Dl), 0.0))[sel])),
        sup_drift=sup_drift,
    )


@dataclass(frozen=True)
class BarrierConstants:
    nu: float
    kappa: float
    r1: float
    mu: float
    mu1: float
    Lambda: float
    r0: float

    def inequalities(self) -> dict[str, bool]:
        """Both barrier inequalities, evaluated exactly as stated."""
        rn = self.r1 * self.nu
        first = rn < 1 and self.kappa >= self.nu / (1.0 - rn)
        second = self.kappa >= math.exp(self.mu1 * self.nu) / self.r1
        return {"r1*nu<1": rn < 1, "kappa>=nu/(1-r1*nu)": first,
                "kappa>=exp(mu1*nu)/r1": second, "0<r1<r0": 0 < self.r1 < self.r0}

    def satisfied(self) -> bool:
        return all(self.inequalities().values())

    def profile(self, d) -> np.ndarray:
        """``(1/ν) log(1 + κ d)``."""
        return np.log1p(self.kappa * np.asarray(d, dtype=float)) / self.nu

    def profile_slope(self, d) -> np.ndarray:
        return self.kappa / (self.nu * (1.0 + self.kappa * np.asarray(d, dtype=float)))

    def to_json(self) -> dict:
        d = asdict(self)
        d["inequalities"] = self.inequalities()
        return d


def _next_pow2(x: float) -> float:
    return float(2.0 ** math.ceil(math.log2(x))) if x > 0 else 1.0


def barrier_constants(psi_bounds: tuple[float, float], collar: CollarData,
                      nu: float | None = None, r1: float | None = None,
                      r1_min: float = 0.0) -> BarrierConstants:
    """Constants ``(ν, κ, r₁)`` for the barriers ``ψ ± (1/ν)log(1+κd)``.

    ``ν = 1 + |Δψ| + c_g|Dψ|² + |D²ψ|`` (sups over the collar) unless given.
    ``r₁`` is the largest ``r₀/2^k`` with ``r₁ν < 1`` unless given, and ``κ``
    the smallest power of two with ``κ ≥ max(ν/(1-r₁ν), e^{μ₁ν}/r₁)`` where
    ``μ = max|ψ|`` and ``μ₁ = 2μ + max|ψ|``.
    """
    lo, hi = float(psi_bounds[0]), float(psi_bounds[1])
    mu = max(abs(lo), abs(hi))
    mu1 = 2.0 * mu + max(abs(lo), abs(hi))
    if nu is None:
        nu = 1.0 + collar.sup_lap_psi + collar.c_g * collar.sup_dpsi**2 + collar.sup_d2psi
    if not nu > 0:
        raise BarrierError("nu must be positive")
    if r1 is None:
        r1 = collar.r0 / 2.0
        while r1 * nu >= 1.0:
            r1 /= 2.0
            if r1 < max(r1_min, 1e-300):
                raise BarrierError(f"no r1 >= {r1_min:g} satisfies r1*nu < 1 (nu = {nu:g}); collar too thin")
    if r1 < r1_min:
        raise BarrierError(f"r1 = {r1:g} below the admissible minimum {r1_min:g}")
    if not r1 * nu < 1:
        raise BarrierError(f"r1*nu < 1 violated (r1 = {r1:g}, nu = {nu:g})")
    bound = max(nu / (1.0 - r1 * nu), math.exp(mu1 * nu) / r1)
    kappa = _next_pow2(bound)
    while kappa < bound:  # guard against log2 rounding
        kappa *= 2.0
    bc = BarrierConstants(nu=float(nu), kappa=kappa, r1=float(r1), mu=mu, mu1=mu1,
                          Lambda=collar.Lambda, r0=collar.r0)
    bad = [k for k, ok in bc.inequalities().items() if not ok]
    if bad:
        raise BarrierError(f"constructed constants violate {', '.join(bad)}")
    return bc


def barrier_functions(psi: np.ndarray, bc: BarrierConstants, dist: np.ndarray):
    """``(u₊, u₋) = ψ ± (1/ν)log(1+κd)``."""
    b = bc.profile(dist)
    psi = np.asarray(psi, dtype=float)
    return psi + b, psi - b


@dataclass(frozen=True)
class BarrierReport:
    frac_plus: float
    frac_minus: float
    nodes: int
    d_range: tuple[float, float]

    def ok(self, target: float = 0.99) -> bool:
        return self.frac_plus >= target and self.frac_minus >= target

    def to_json(self) -> dict:
        return asdict(self)


def verify_barrier(u_plus: np.ndarray, u_minus: np.ndarray, phi: ConformalFactor, g: MetricField,
                   dom: Domain, dist: np.ndarray, r1: float, band_cells: int = 2) -> BarrierReport:
    """Fraction of collar nodes where ``L u₊ ≥ 0`` and ``L u₋ ≤ 0``.

    The collar is ``{h ≤ d ≤ r₁}`` intersected with the interior of ``dom``,
    minus ``band_cells`` node layers at either end.
    """
    h = max(dom.grid.spacing)
    Lp = el_operator(u_plus, phi, g, dom)
    Lm = el_operator(u_minus, phi, g, dom)
    collar = dom.interior & (dist >= h) & (dist <= r1)
    if not collar.any():
        raise BarrierError("empty collar")
    d_lo = float(dist[collar].min())
    d_hi = float(dist[collar].max())
    sel = collar & (dist >= d_lo + band_cells * h) & (dist <= d_hi - band_cells * h)
    if not sel.any():
        sel = collar
    k = int(np.count_nonzero(sel))
    return BarrierReport(frac_plus=float(np.count_nonzero(Lp[sel] >= 0)) / k,
                         frac_minus=float(np.count_nonzero(Lm[sel] <= 0)) / k,
                         nodes=k, d_range=(float(dist[sel].min()), float(dist[sel].max())))


def weighted_operator(u: np.ndarray, phi: ConformalFactor, g: MetricField, dom: Domain) -> np.ndarray:
    """``E u = ω³ L u``, the form in which the barrier signs are derived."""
    return omega(u, dom.grid, g, dom.inside) ** 3 * el_operator(u, phi, g, dom)
