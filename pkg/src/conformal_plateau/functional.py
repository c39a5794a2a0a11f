"""The weighted area functional, its dual form, subgraph perimeters and the
vertical rearrangement of column sets.

All quantities share one quadrature (see ``geometry.operators.Stencil``):
a point ``q`` carries the weight ``W_q = avg_cell(φⁿ)·√detσ·h̄_q`` and the
edge-difference gradient ``g_q``, and the area is ``Σ_q W_q √(1+|g_q|²_σ)``.
Graph facets of a column set reuse exactly the same formula, so the
subgraph identity holds to rounding error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .geometry import ConformalFactor, Domain, MetricField, build_stencil
from .geometry.operators import Stencil, _check_finite

ADMISSIBLE_SLACK = 1e-12


class AreaDiscretization:
    """Value, gradient and Hessian of the discrete area over a fixed domain.

    Cheap to build; the solver keeps one per solve.  ``u`` is always a flat
    vector over all grid nodes.  Nodes outside the domain never enter.
    """

    def __init__(self, dom: Domain, phi: ConformalFactor, g: MetricField):
        self.dom = dom
        self.phi = phi
        self.g = g
        self.grid = dom.grid
        self.st: Stencil = build_stencil(dom.grid, g, dom.inside)
        n = dom.grid.dim_n
        self.phi_n = phi.phi.reshape(-1) ** n
        self.W = self.st.to_cells(self.phi_n) * self.st.wgeom

    # quadrature-level pieces
    def grad_q(self, u: np.ndarray) -> np.ndarray:
        return self.st.grad(u)

    def contract(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """``σ^ij a_i b_j`` at quadrature points."""
        return np.einsum("iq,qij,jq->q", a, self.st.sigma_inv, b)

    def raise_q(self, a: np.ndarray) -> np.ndarray:
        return np.einsum("qij,jq->iq", self.st.sigma_inv, a)

    def omega_q(self, gq: np.ndarray) -> np.ndarray:
        return np.sqrt(1.0 + np.maximum(self.contract(gq, gq), 0.0))

    def integrand(self, u: np.ndarray) -> np.ndarray:
        """Per-point contributions ``W_q ω_q``."""
        return self.W * self.omega_q(self.grad_q(u))

    def value(self, u: np.ndarray) -> float:
        return float(np.sum(self.integrand(u)))

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """``∂F/∂u_k`` for every node (boundary entries included)."""
        gq = self.grad_q(u)
        w = self.omega_q(gq)
        flux = self.raise_q(gq) * (self.W / w)[None, :]
        return self.st.grad_T(flux)

    def hessian(self, u: np.ndarray) -> sp.csr_matrix:
        """Second variation ``Σ_ij G_iᵀ diag(W(S_ij/ω - (Sg)_i(Sg)_j/ω³)) G_j``."""
        gq = self.grad_q(u)
        w = self.omega_q(gq)
        Sg = self.raise_q(gq)
        S = self.st.sigma_inv
        n = self.grid.dim_n
        H = None
        for i in range(n):
            for j in range(n):
                coef = self.W * (S[:, i, j] / w - Sg[i] * Sg[j] / w**3)
                if not np.any(coef):
                    continue
                term = self.st.G[i].T @ sp.diags(coef) @ self.st.G[j]
                H = term if H is None else H + term
        return sp.csr_matrix(H)

    def frozen_operator(self, u: np.ndarray) -> sp.csr_matrix:
        """Picard matrix ``Σ_ij G_iᵀ diag(W S_ij/ω) G_j`` with ``ω`` frozen at ``u``."""
        w = self.omega_q(self.grad_q(u))
        S = self.st.sigma_inv
        n = self.grid.dim_n
        A = None
        for i in range(n):
            for j in range(n):
                coef = self.W * S[:, i, j] / w
                if not np.any(coef):
                    continue
                term = self.st.G[i].T @ sp.diags(coef) @ self.st.G[j]
                A = term if A is None else A + term
        return sp.csr_matrix(A)

    def residual_weight(self) -> np.ndarray:
        """Positive nodal weight ``φⁿ·√detσ·h̄`` that turns ``∂F/∂u`` into ``L(u)``."""
        return self.phi_n * self.st.node_volume


def _flat(u: np.ndarray, dom: Domain) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != dom.grid.shape:
        raise ValueError(f"field shape {u.shape} does not match grid {dom.grid.shape}")
    _check_finite(u, dom.inside)
    return np.where(dom.inside, u, 0.0).reshape(-1)


def area_functional(u: np.ndarray, phi: ConformalFactor, g: MetricField, dom: Domain) -> float:
    """Discrete weighted area ``Σ_q W_q √(1+|Du|²_σ)`` of the graph of ``u``."""
    return AreaDiscretization(dom, phi, g).value(_flat(u, dom))


def area_gradient(u: np.ndarray, phi: ConformalFactor, g: MetricField, dom: Domain) -> np.ndarray:
    """Exact derivative of ``area_functional`` with respect to interior node values.

    Returned on the grid, zero away from interior nodes.
    """
    d = AreaDiscretization(dom, phi, g).gradient(_flat(u, dom))
    return np.where(dom.interior, d.reshape(dom.grid.shape), 0.0)


def area_bounds(u: np.ndarray, phi: ConformalFactor, g: MetricField, dom: Domain) -> tuple[float, float]:
    """Two-sided bounds ``(max(‖Du‖, vol)/μ₀, μ₀(‖Du‖ + vol))`` for the area.

    ``μ₀ = max(φⁿ, φ⁻ⁿ)`` over the domain and ``‖Du‖`` is the unweighted
    total variation on the same quadrature.
    """
    disc = AreaDiscretization(dom, phi, g)
    gq = disc.grad_q(_flat(u, dom))
    tv = float(np.sum(disc.st.wgeom * np.sqrt(np.maximum(disc.contract(gq, gq), 0.0))))
    vol = float(np.sum(disc.st.wgeom))
    pn = disc.phi_n[dom.inside.reshape(-1)]
    mu0 = float(max(pn.max(), (1.0 / pn).max()))
    return max(tv, vol) / mu0, mu0 * (tv + vol)


@dataclass(frozen=True)
class AreaReport:
    primal: float
    dual_lower_bound: float
    gap: float
    mode: str = "optimal"
    samples: int = 0

    def to_json(self) -> dict:
        return {"primal": self.primal, "dual_lower_bound": self.dual_lower_bound,
                "gap": self.gap, "mode": self.mode, "samples": self.samples}


def optimal_test_pair(disc: AreaDiscretization, u_flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gq = disc.grad_q(u_flat)
    w = disc.omega_q(gq)
    return 1.0 / w, -disc.raise_q(gq) / w


def dual_value(disc: AreaDiscretization, u_flat: np.ndarray, h: np.ndarray, X: np.ndarray) -> float:
    """``Σ_q W_q (h_q - ⟨X_q, Du⟩)`` after rejecting inadmissible pairs.

    Summation by parts turns this into ``Σ W h + Σ u·div_φ(X)``, the
    discrete counterpart of the dual definition.
    """
    h = np.asarray(h, dtype=float)
    X = np.asarray(X, dtype=float)
    nq = disc.st.nq
    if h.shape != (nq,) or X.shape != (disc.grid.dim_n, nq):
        raise ValueError("test pair does not match the quadrature layout")
    lower = np.einsum("iq,qij,jq->q", X, disc.st.sigma, X)
    excess = h**2 + lower - 1.0
    if np.any(excess > ADMISSIBLE_SLACK):
        q = int(np.argmax(excess))
        raise ValueError(f"inadmissible test pair: h²+|X|² exceeds 1 by {excess[q]:.3e} at point {q}")
    gq = disc.grad_q(u_flat)
    return float(np.sum(disc.W * (h - np.einsum("iq,iq->q", X, gq))))


def sample_test_pairs(disc: AreaDiscretization, u_flat: np.ndarray, count: int,
                      rng: np.random.Generator, noise: float = 0.3) -> list[tuple[np.ndarray, np.ndarray]]:
    """Admissible pairs made by perturbing the optimum and renormalising."""
    h0, X0 = optimal_test_pair(disc, u_flat)
    out = []
    for _ in range(count):
        h = h0 + noise * rng.standard_normal(h0.shape)
        X = X0 + noise * rng.standard_normal(X0.shape)
        norm = np.sqrt(h**2 + np.einsum("iq,qij,jq->q", X, disc.st.sigma, X))
        scale = 1.0 / np.maximum(norm, 1.0)
        out.append((h * scale, X * scale[None, :]))
    return out


def dual_area(u: np.ndarray, phi: ConformalFactor, g: MetricField, dom: Domain,
              mode: str = "optimal",
              family: Iterable[tuple[np.ndarray, np.ndarray]] | None = None) -> AreaReport:
    """Primal area next to a dual lower bound.

    ``mode="optimal"`` uses the pointwise maximiser ``h = 1/ω, X = -Du/ω``;
    ``mode="sampled"`` takes the best of the supplied admissible ``family``
    (at least one pair).
    """
    disc = AreaDiscretization(dom, phi, g)
    uf = _flat(u, dom)
    primal = disc.value(uf)
    if mode == "optimal":
        h, X = optimal_test_pair(disc, uf)
        dual = dual_value(disc, uf, h, X)
        count = 1
    elif mode == "sampled":
        if family is None:
            raise ValueError("sampled mode needs a family of test pairs")
        vals = [dual_value(disc, uf, h, X) for h, X in family]
        if not vals:
            raise ValueError("empty test family")
        dual, count = max(vals), len(vals)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return AreaReport(primal=primal, dual_lower_bound=dual, gap=max(primal - dual, 0.0),
                      mode=mode, samples=count)


# ---------------------------------------------------------------- column sets

@dataclass(frozen=True, eq=False)
class ColumnSet:
    """A set in ``Ω̄×ℝ`` given column by column as sorted disjoint intervals.

    ``nodes`` are the flat grid indices of the columns (lexicographic);
    ``columns[k]`` is a ``(m, 2)`` array of ``[a, b]`` rows for ``nodes[k]``.
    With ``filled_below`` the set also contains ``(-∞, A)``.
    """

    shape: tuple[int, ...]
    nodes: np.ndarray
    columns: tuple[np.ndarray, ...]
    window: tuple[float, float]
    filled_below: bool = True

    def __post_init__(self):
        A, B = self.window
        if not A < B:
            raise ValueError("empty vertical window")
        if len(self.columns) != len(self.nodes):
            raise ValueError("one interval stack per column is required")
        for node, col in zip(self.nodes, self.columns):
            col = np.asarray(col, dtype=float)
            if col.size == 0:
                continue
            if col.ndim != 2 or col.shape[1] != 2:
                raise ValueError(f"column {int(node)}: intervals must be [a, b] pairs")
            if not np.all(np.isfinite(col)):
                raise ValueError(f"column {int(node)}: non-finite endpoint")
            if np.any(col[:, 0] > col[:, 1]):
                raise ValueError(f"column {int(node)}: interval with a > b")
            if np.any(col[1:, 0] <= col[:-1, 1]):
                raise ValueError(f"column {int(node)}: overlapping or unsorted intervals")
            if col.min() < A or col.max() > B:
                raise ValueError(f"column {int(node)}: endpoint outside window [{A}, {B}]")

    def transitions(self, k: int) -> np.ndarray:
        """Heights where column ``k`` switches between inside and outside."""
        col = np.asarray(self.columns[k], dtype=float).reshape(-1, 2)
        A = self.window[0]
        if not self.filled_below:
            return col.ravel()
        if col.shape[0] == 0:
            return np.array([A])
        if col[0, 0] == A:
            return col.ravel()[1:]
        return np.concatenate([[A], col.ravel()])

    def max_intervals(self) -> int:
        return max((np.asarray(c).reshape(-1, 2).shape[0] for c in self.columns), default=0)

    def to_json(self) -> dict:
        return {
            "shape": list(self.shape),
            "window": list(self.window),
            "filled_below": self.filled_below,
            "columns": [
                {"node": [int(i) for i in np.unravel_index(int(p), self.shape)],
                 "intervals": np.asarray(c, dtype=float).reshape(-1, 2).tolist()}
                for p, c in zip(self.nodes, self.columns)
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ColumnSet":
        try:
            shape = tuple(int(s) for s in data["shape"])
            cols = sorted(data["columns"], key=lambda c: np.ravel_multi_index(tuple(c["node"]), shape))
            nodes = np.array([np.ravel_multi_index(tuple(c["node"]), shape) for c in cols], dtype=np.int64)
            if len(set(nodes.tolist())) != nodes.size:
                raise ValueError("duplicate column")
            stacks = tuple(np.asarray(c["intervals"], dtype=float).reshape(-1, 2) for c in cols)
            return cls(shape=shape, nodes=nodes, columns=stacks,
                       window=(float(data["window"][0]), float(data["window"][1])),
                       filled_below=bool(data.get("filled_below", True)))
        except (KeyError, TypeError, IndexError) as exc:
            raise ValueError(f"malformed column set: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def subgraph(u: np.ndarray, dom: Domain, window: tuple[float, float] | None = None) -> ColumnSet:
    """``{t < u(x)}`` over ``Ω̄`` as a filled-below column set."""
    u = np.asarray(u, dtype=float)
    _check_finite(u, dom.inside)
    nodes = np.flatnonzero(dom.inside.ravel())
    vals = u.reshape(-1)[nodes]
    if window is None:
        window = (float(np.floor(vals.min())) - 1.0, float(np.ceil(vals.max())) + 1.0)
    A = window[0]
    cols = tuple(np.array([[A, v]]) for v in vals)
    return ColumnSet(shape=dom.grid.shape, nodes=nodes, columns=cols, window=window)


def _transition_table(S: ColumnSet, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Padded ``(size, K)`` transition heights and per-node counts (-1 = no column)."""
    trans = [S.transitions(k) for k in range(len(S.nodes))]
    K = max((t.size for t in trans), default=1)
    P = np.zeros((size, max(K, 1)))
    count = np.full(size, -1, dtype=np.int64)
    for node, t in zip(S.nodes, trans):
        P[node, : t.size] = t
        count[node] = t.size
    return P, count


def _tail_heights(P: np.ndarray, count: np.ndarray, m: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Total height of the unmatched interval pairs above layer ``m``."""
    out = np.zeros(nodes.size)
    K = P.shape[1]
    for l in range(K):
        active = (l >= m) & (l < count[nodes])
        sign = np.where((l - m) % 2 == 0, -1.0, 1.0)
        out += np.where(active, sign * P[nodes, l], 0.0)
    return out


def subgraph_perimeter(S: ColumnSet, phi: ConformalFactor, g: MetricField, dom: Domain) -> float:
    """Perimeter in ``Ω×ℝ`` of the piecewise-linear set induced by ``S``.

    On each quadrature stencil the ``m`` lowest transitions shared by all of
    its nodes are joined by sloped facets (the area integrand of the layer);
    the unmatched interval pairs of a node become vertical walls towards each
    axis neighbour, costing ``W_q·(tail_base + tail_nbr)·√σ^ii/|h_i|``, i.e.
    ``φⁿ`` times jump height times the σ-length of the opposite edge share.
    """
    if tuple(S.shape) != dom.grid.shape:
        raise ValueError("column set does not match the grid")
    disc = AreaDiscretization(dom, phi, g)
    st = disc.st
    P, count = _transition_table(S, dom.grid.size)
    stencil_nodes = np.concatenate([st.base[None, :], st.nbr])
    if np.any(count[stencil_nodes] < 0):
        raise ValueError("column set misses nodes of the domain")
    m = count[stencil_nodes].min(axis=0)
    total = np.zeros(st.nq)
    for l in range(P.shape[1]):
        # same expression as the area integrand, so subgraph(u) reproduces it
        cost = disc.integrand(P[:, l].copy())
        total = total + np.where(l < m, cost, 0.0)
    if np.any(count[stencil_nodes] > m[None, :]):
        tail_base = _tail_heights(P, count, m, st.base)
        for i in range(dom.grid.dim_n):
            tail_nbr = _tail_heights(P, count, m, st.nbr[i])
            total = total + disc.W * (tail_base + tail_nbr) * np.sqrt(st.sigma_inv[:, i, i]) / np.abs(st.step[i])
    return float(np.sum(total))


def miranda_rearrange(S: ColumnSet) -> np.ndarray:
    """Column-measure function ``w = A + Σ(b_i - a_i)`` on the grid (NaN off the columns).

    Evaluated as the alternating sum of transition heights, which is the
    same number and is exact for single-interval columns.
    """
    if not S.filled_below:
        raise ValueError("rearrangement needs a filled-below column set")
    w = np.full(int(np.prod(S.shape)), np.nan)
    for k, node in enumerate(S.nodes):
        t = S.transitions(k)
        signs = np.where(np.arange(t.size) % 2 == 0, 1.0, -1.0)
        w[node] = t[0] if t.size == 1 else float(np.sum(signs * t))
    return w.reshape(S.shape)


def random_column_set(dom: Domain, rng: np.random.Generator, max_intervals: int = 4,
                      window: tuple[float, float] = (-3.0, 3.0)) -> ColumnSet:
    """Random filled-below column set with up to ``max_intervals`` per column."""
    A, B = window
    nodes = np.flatnonzero(dom.inside.ravel())
    cols = []
    for _ in nodes:
        k = int(rng.integers(1, max_intervals + 1))
        pts = np.sort(rng.uniform(A, B, size=2 * k))
        if rng.random() < 0.5:
            pts[0] = A
        if np.any(np.diff(pts) <= 0):
            pts = A + (B - A) * (np.arange(2 * k) + 0.5) / (2 * k)
        cols.append(pts.reshape(-1, 2))
    return ColumnSet(shape=dom.grid.shape, nodes=nodes, columns=tuple(cols), window=window)
