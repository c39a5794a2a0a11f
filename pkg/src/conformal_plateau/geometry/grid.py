"""Chart grids and the node-sampled metric and conformal factor."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class GeometryError(ValueError):
    """Raised when a grid, metric or domain violates its invariants."""


@dataclass(frozen=True)
class ChartGrid:
    """A single rectangular chart of the base manifold, sampled at nodes.

    Non-periodic axes include both endpoints, so ``spacing = L / (N - 1)``.
    A periodic axis covers one full period without repeating the endpoint,
    so ``spacing = L / N``.  ``natural_lo`` marks low chart edges that carry
    no Dirichlet data (the polar-cap edge of a pole chart): nodes there are
    unknowns with one-sided stencils.
    """

    extents: tuple[tuple[float, float], ...]
    shape: tuple[int, ...]
    periodic: tuple[bool, ...] = ()
    natural_lo: tuple[bool, ...] = ()

    def __post_init__(self):
        n = len(self.extents)
        if n not in (1, 2):
            raise GeometryError(f"dim_n must be 1 or 2, got {n}")
        if len(self.shape) != n:
            raise GeometryError("shape and extents disagree on dimension")
        if not self.periodic:
            object.__setattr__(self, "periodic", (False,) * n)
        if not self.natural_lo:
            object.__setattr__(self, "natural_lo", (False,) * n)
        object.__setattr__(self, "extents", tuple((float(a), float(b)) for a, b in self.extents))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        for (a, b), s in zip(self.extents, self.shape):
            if s < 2:
                raise GeometryError("at least 2 nodes per axis are required")
            if not b > a:
                raise GeometryError(f"empty extent [{a}, {b}]")

    @property
    def dim_n(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        out = []
        for (a, b), s, p in zip(self.extents, self.shape, self.periodic):
            out.append((b - a) / s if p else (b - a) / (s - 1))
        return tuple(out)

    @property
    def cell_volume(self) -> float:
        """Chart volume of one grid cell (the ``h̄`` of the node weights)."""
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> list[np.ndarray]:
        return [a + h * np.arange(s) for (a, _), s, h in zip(self.extents, self.shape, self.spacing)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(n, *shape)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))

    def ravel(self, idx) -> np.ndarray:
        return np.ravel_multi_index(idx, self.shape)

    def unravel(self, flat) -> tuple[np.ndarray, ...]:
        return np.unravel_index(flat, self.shape)

    def to_json(self) -> dict:
        return {
            "extents": [list(e) for e in self.extents],
            "shape": list(self.shape),
            "periodic": list(self.periodic),
            "natural_lo": list(self.natural_lo),
        }

    @classmethod
    def from_json(cls, data: dict) -> "ChartGrid":
        n = len(data["extents"])
        return cls(
            extents=tuple(tuple(e) for e in data["extents"]),
            shape=tuple(data["shape"]),
            periodic=tuple(data.get("periodic", [False] * n)),
            natural_lo=tuple(data.get("natural_lo", [False] * n)),
        )

    @classmethod
    def with_spacing(cls, extents, h: float | Sequence[float], **kw) -> "ChartGrid":
        """Grid whose spacing is the largest value not exceeding ``h`` per axis."""
        n = len(extents)
        hs = np.broadcast_to(np.asarray(h, dtype=float), (n,))
        periodic = kw.get("periodic") or (False,) * n
        shape = []
        for (a, b), hi, p in zip(extents, hs, periodic):
            cells = int(np.ceil((b - a) / hi - 1e-9))
            shape.append(max(cells, 1) if p else max(cells, 1) + 1)
        return cls(extents=tuple(extents), shape=tuple(shape), **kw)


def axis_derivative(f: np.ndarray, axis: int, h: float, periodic: bool) -> np.ndarray:
    """Central differences in the interior, second-order one-sided at chart edges."""
    if periodic:
        return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * h)
    return np.gradient(f, h, axis=axis, edge_order=2)


@dataclass(frozen=True, eq=False)
class MetricField:
    """Node-sampled base metric ``σ_ij`` with its inverse and volume density."""

    sigma: np.ndarray
    sigma_inv: np.ndarray
    sqrt_det: np.ndarray
    diagonal: bool = field(default=False)

    @classmethod
    def from_sigma(cls, sigma: np.ndarray) -> "MetricField":
        sigma = np.asarray(sigma, dtype=float)
        n = sigma.shape[-1]
        if sigma.shape[-2:] != (n, n):
            raise GeometryError("sigma must end in an (n, n) block")
        if not np.allclose(sigma, np.swapaxes(sigma, -1, -2), rtol=0, atol=1e-14):
            raise GeometryError("sigma is not symmetric")
        eig = np.linalg.eigvalsh(sigma)
        if not np.all(eig > 0):
            bad = np.argwhere(eig.min(axis=-1) <= 0)[0]
            raise GeometryError(f"sigma not positive definite at node {tuple(int(i) for i in bad)}")
        off = sigma.copy()
        for i in range(n):
            off[..., i, i] = 0.0
        diagonal = bool(np.all(off == 0.0))
        if diagonal:
            inv = np.zeros_like(sigma)
            for i in range(n):
                inv[..., i, i] = 1.0 / sigma[..., i, i]
            sqrt_det = np.sqrt(np.prod([sigma[..., i, i] for i in range(n)], axis=0))
        else:
            inv = np.linalg.inv(sigma)
            sqrt_det = np.sqrt(np.linalg.det(sigma))
        return cls(sigma=sigma, sigma_inv=inv, sqrt_det=sqrt_det, diagonal=diagonal)

    @property
    def dim_n(self) -> int:
        return self.sigma.shape[-1]

    def norm_sq_covector(self, v: np.ndarray) -> np.ndarray:
        """``σ^ij v_i v_j`` for a covector with components on axis 0."""
        return np.einsum("i...,...ij,j...->...", v, self.sigma_inv, v)

    def norm_sq_vector(self, v: np.ndarray) -> np.ndarray:
        return np.einsum("i...,...ij,j...->...", v, self.sigma, v)

    def raise_index(self, v: np.ndarray) -> np.ndarray:
        return np.einsum("...ij,j...->i...", self.sigma_inv, v)


@dataclass(frozen=True, eq=False)
class ConformalFactor:
    """Node-sampled ``φ > 0`` and the covector ``D log φ``."""

    phi: np.ndarray
    log_phi_grad: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.phi)) or not np.all(self.phi > 0):
            raise GeometryError("phi must be finite and positive at every node")

    def scaled(self, c: float) -> "ConformalFactor":
        """``c·φ``; the drift ``D log φ`` is unchanged."""
        return ConformalFactor(phi=c * self.phi, log_phi_grad=self.log_phi_grad)

    @classmethod
    def from_values(cls, grid: ChartGrid, phi: np.ndarray,
                    log_phi_grad: np.ndarray | None = None) -> "ConformalFactor":
        phi = np.asarray(phi, dtype=float)
        if log_phi_grad is None:
            logp = np.log(phi)
            log_phi_grad = np.stack([
                axis_derivative(logp, i, h, p)
                for i, (h, p) in enumerate(zip(grid.spacing, grid.periodic))
            ])
        return cls(phi=phi, log_phi_grad=np.asarray(log_phi_grad, dtype=float))


MetricExpr = Callable[[np.ndarray], np.ndarray]


def metric_from_function(grid: ChartGrid, fn: MetricExpr) -> MetricField:
    """Sample ``fn(coords) -> (*shape, n, n)`` on the grid nodes."""
    return MetricField.from_sigma(fn(grid.coords()))
