"""Discrete differential operators on a chart grid.

Two families live here.  ``gradient`` is a nodal, diagnostic derivative
(central differences in the interior, second-order one-sided at chart edges).
``Stencil`` carries the staggered quadrature used by the area functional:
one point per cell in 1-D, four corner triangles per cell in 2-D, each with
an exact edge-difference gradient.  ``divergence`` is defined as the exact
negative adjoint of the stencil gradient, so summation by parts holds to
rounding error and the discrete Euler-Lagrange operator is the exact
gradient of the discrete functional.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import ChartGrid, GeometryError, MetricField, axis_derivative


def _check_finite(u: np.ndarray, mask: np.ndarray | None = None) -> None:
    bad = ~np.isfinite(u)
    if mask is not None:
        bad &= mask
    if bad.any():
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"non-finite field value at node {node}")


def gradient(u: np.ndarray, grid: ChartGrid, mask: np.ndarray | None = None) -> np.ndarray:
    """Covariant components ``∂_i u`` at every node, shape ``(n, *shape)``.

    Raise with ``g.raise_index`` when the contravariant field is needed.
    ``mask`` restricts the finiteness check to the field's support.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != grid.shape:
        raise ValueError(f"field shape {u.shape} does not match grid {grid.shape}")
    _check_finite(u, mask)
    if mask is not None:
        u = np.where(mask, u, 0.0)
    return np.stack([
        axis_derivative(u, i, h, p)
        for i, (h, p) in enumerate(zip(grid.spacing, grid.periodic))
    ])


def gradient_norm_sq(u: np.ndarray, grid: ChartGrid, g: MetricField,
                     mask: np.ndarray | None = None) -> np.ndarray:
    """``|Du|²_σ = σ^ij ∂_i u ∂_j u`` at nodes."""
    return np.maximum(g.norm_sq_covector(gradient(u, grid, mask)), 0.0)


@dataclass(frozen=True, eq=False)
class Stencil:
    grid: ChartGrid
    inside: np.ndarray          # node mask of the closed domain
    base: np.ndarray            # (nq,) flat node index of each quadrature point
    nbr: np.ndarray             # (n, nq) neighbour along each axis
    step: np.ndarray            # (n, nq) signed chart step base -> nbr
    corners: np.ndarray         # (nq, 2**n) flat nodes of the owning cell
    sigma_inv: np.ndarray       # (nq, n, n) cell-averaged inverse metric
    sigma: np.ndarray           # (nq, n, n)
    sqrt_det: np.ndarray        # (nq,)
    wgeom: np.ndarray           # (nq,) √detσ·h̄ share of each quadrature point
    G: tuple                    # n sparse (nq, size) difference matrices
    node_volume: np.ndarray     # (size,) √detσ·h̄ times active-cell fraction

    @property
    def n(self) -> int:
        return self.grid.dim_n

    @property
    def nq(self) -> int:
        return self.base.size

    def grad(self, u_flat: np.ndarray) -> np.ndarray:
        """Edge-difference gradient (covariant) at quadrature points, ``(n, nq)``."""
        return np.stack([Gi @ u_flat for Gi in self.G])

    def grad_T(self, flux: np.ndarray) -> np.ndarray:
        """Transpose of ``grad``: ``Σ_i G_iᵀ flux_i`` at nodes."""
        out = self.G[0].T @ flux[0]
        for Gi, fi in zip(self.G[1:], flux[1:]):
            out = out + Gi.T @ fi
        return out

    def to_cells(self, node_field: np.ndarray) -> np.ndarray:
        """Average a nodal scalar over the corners of each quadrature point's cell."""
        return np.asarray(node_field).reshape(-1)[self.corners].mean(axis=1)

    def edge_midpoints(self) -> np.ndarray:
        """Chart location of the axis-``i`` edge midpoint, ``(n, n, nq)``.

        Component ``X^i`` of a staggered vector field is sampled at
        ``edge_midpoints()[i]``.
        """
        coords = self.grid.coords().reshape(self.n, -1)
        base = coords[:, self.base]
        out = np.empty((self.n, self.n, self.nq))
        for i in range(self.n):
            out[i] = base
            out[i, i] = base[i] + 0.5 * self.step[i]
        return out


def _wrap(idx: np.ndarray, size: int, periodic: bool) -> np.ndarray:
    return idx % size if periodic else idx


def build_stencil(grid: ChartGrid, g: MetricField, inside: np.ndarray) -> Stencil:
    """Quadrature on the cells whose corners all lie in ``inside``."""
    inside = np.asarray(inside, dtype=bool)
    if inside.shape != grid.shape:
        raise GeometryError("mask shape does not match grid")
    n = grid.dim_n
    h = grid.spacing
    ranges = [np.arange(s if p else s - 1) for s, p in zip(grid.shape, grid.periodic)]
    lo = np.meshgrid(*ranges, indexing="ij")
    lo = [a.ravel() for a in lo]

    def node(offsets):
        idx = [_wrap(lo[i] + offsets[i], grid.shape[i], grid.periodic[i]) for i in range(n)]
        return grid.ravel(idx)

    flat_inside = inside.ravel()
    if n == 1:
        c0, c1 = node((0,)), node((1,))
        active = flat_inside[c0] & flat_inside[c1]
        c0, c1 = c0[active], c1[active]
        corners = np.stack([c0, c1], axis=1)
        base = c0
        nbr = c1[None, :]
        step = np.full((1, base.size), h[0])
        frac = 1.0
    else:
        c00, c10, c01, c11 = node((0, 0)), node((1, 0)), node((0, 1)), node((1, 1))
        active = flat_inside[c00] & flat_inside[c10] & flat_inside[c01] & flat_inside[c11]
        c00, c10, c01, c11 = (c[active] for c in (c00, c10, c01, c11))
        cell_corners = np.stack([c00, c10, c01, c11], axis=1)
        base = np.concatenate([c00, c10, c01, c11])
        nx = np.concatenate([c10, c00, c11, c01])
        ny = np.concatenate([c01, c11, c00, c10])
        m = c00.size
        sx = np.concatenate([np.full(m, h[0]), np.full(m, -h[0]), np.full(m, h[0]), np.full(m, -h[0])])
        sy = np.concatenate([np.full(m, h[1]), np.full(m, h[1]), np.full(m, -h[1]), np.full(m, -h[1])])
        nbr = np.stack([nx, ny])
        step = np.stack([sx, sy])
        corners = np.tile(cell_corners, (4, 1))
        frac = 0.25

    nq = base.size
    sig_nodes = g.sigma.reshape(-1, n, n)
    sigma_c = sig_nodes[corners].mean(axis=1)
    if g.diagonal:
        sinv_c = np.zeros_like(sigma_c)
        for i in range(n):
            sinv_c[:, i, i] = 1.0 / sigma_c[:, i, i]
        sqrt_det_c = np.sqrt(np.prod([sigma_c[:, i, i] for i in range(n)], axis=0))
    else:
        sinv_c = np.linalg.inv(sigma_c)
        sqrt_det_c = np.sqrt(np.linalg.det(sigma_c))
    wgeom = sqrt_det_c * grid.cell_volume * frac

    rows = np.arange(nq)
    G = []
    for i in range(n):
        data = np.concatenate([1.0 / step[i], -1.0 / step[i]])
        Gi = sp.csr_matrix((data, (np.concatenate([rows, rows]), np.concatenate([nbr[i], base]))),
                           shape=(nq, grid.size))
        G.append(Gi)

    # fraction of each node's dual cell covered by active cells
    cells = corners[: nq // 4] if n == 2 else corners
    frac_node = np.bincount(cells.ravel(), minlength=grid.size) / float(2 ** n)
    node_volume = g.sqrt_det.reshape(-1) * grid.cell_volume * frac_node

    return Stencil(grid=grid, inside=inside, base=base, nbr=nbr, step=step, corners=corners,
                   sigma_inv=sinv_c, sigma=sigma_c, sqrt_det=sqrt_det_c, wgeom=wgeom,
                   G=tuple(G), node_volume=node_volume)


def divergence(X: np.ndarray, st: Stencil) -> np.ndarray:
    """Divergence of a staggered contravariant field ``X`` of shape ``(n, nq)``.

    Conservative form ``(1/√detσ) ∂_i(√detσ X^i)``, realised as the negative
    adjoint of ``Stencil.grad`` under the ``√detσ·h̄`` node inner product:
    ``Σ div(X)·u·vol = -Σ_q wgeom_q X^i_q (Du)_{q,i}``.  Nodes outside every
    active cell get NaN.
    """
    X = np.asarray(X, dtype=float)
    if X.shape != (st.n, st.nq):
        raise ValueError(f"vector field shape {X.shape} does not match stencil {(st.n, st.nq)}")
    acc = st.grad_T(st.wgeom[None, :] * X)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(st.node_volume > 0, -acc / st.node_volume, np.nan)
    return out.reshape(st.grid.shape)
