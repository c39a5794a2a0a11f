"""Built-in geometries and closed-form oracles.

A ``ModelPreset`` is a small, JSON-serialisable recipe: chart, metric and
conformal factor identifiers from a fixed catalogue, a domain mask, and an
optional collar description for the exhaustion.  ``instantiate`` samples it
on a grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import (ChartGrid, ConformalFactor, Domain, GeometryError, MetricField,
                       make_domain)

METRIC_IDS = ("flat", "diagonal-constant", "round-sphere-polar")
PHI_IDS = ("one", "constant", "sec", "exp-linear")
MASK_IDS = ("full", "disk", "annulus")


def metric_catalog(metric_id: str, coords: np.ndarray, params: dict) -> np.ndarray:
    """Node array ``σ_ij`` of shape ``(*shape, n, n)`` for a catalogue id."""
    n = coords.shape[0]
    shape = coords.shape[1:]
    sigma = np.zeros(shape + (n, n))
    if metric_id == "flat":
        for i in range(n):
            sigma[..., i, i] = 1.0
    elif metric_id == "diagonal-constant":
        diag = params.get("diag")
        if diag is None or len(diag) != n:
            raise GeometryError("diagonal-constant needs a 'diag' list of length n")
        for i in range(n):
            sigma[..., i, i] = float(diag[i])
    elif metric_id == "round-sphere-polar":
        # chart (θ, φ_p): σ = sin²(φ_p) dθ² + dφ_p²
        if n != 2:
            raise GeometryError("round-sphere-polar is a 2-dimensional chart")
        sigma[..., 0, 0] = np.sin(coords[1]) ** 2
        sigma[..., 1, 1] = 1.0
    else:
        raise GeometryError(f"unknown metric id {metric_id!r}; known: {', '.join(METRIC_IDS)}")
    return sigma


def phi_catalog(phi_id: str, coords: np.ndarray, params: dict) -> tuple[np.ndarray, np.ndarray]:
    """``(φ, D log φ)`` for a catalogue id, with the drift in closed form."""
    n = coords.shape[0]
    shape = coords.shape[1:]
    drift = np.zeros((n,) + shape)
    if phi_id == "one":
        return np.ones(shape), drift
    if phi_id == "constant":
        return np.full(shape, float(params.get("c", 1.0))), drift
    if phi_id == "sec":
        k = int(params.get("axis", n - 1))
        x = coords[k]
        drift[k] = np.tan(x)
        return 1.0 / np.cos(x), drift
    if phi_id == "exp-linear":
        k = int(params.get("axis", 0))
        a, b = float(params.get("a", 0.0)), float(params.get("b", 1.0))
        drift[k] = b
        return np.exp(a + b * coords[k]), drift
    raise GeometryError(f"unknown phi id {phi_id!r}; known: {', '.join(PHI_IDS)}")


def mask_catalog(mask_id: str, coords: np.ndarray, params: dict) -> np.ndarray | None:
    """Level set (``≥ 0`` inside) for a catalogue mask, ``None`` for the full chart."""
    if mask_id == "full":
        return None
    center = np.asarray(params.get("center", [0.0] * coords.shape[0]), dtype=float)
    r = np.sqrt(sum((coords[i] - center[i]) ** 2 for i in range(coords.shape[0])))
    if mask_id == "disk":
        return float(params.get("radius", 1.0)) - r
    if mask_id == "annulus":
        return np.minimum(float(params.get("outer", 1.0)) - r, r - float(params.get("inner", 0.5)))
    raise GeometryError(f"unknown mask id {mask_id!r}; known: {', '.join(MASK_IDS)}")


@dataclass(frozen=True)
class ModelPreset:
    """Recipe for a model geometry.

    ``extents`` may reference the spacing through ``margin_cells``: the chart
    is shrunk by ``margin_cells·h`` at the ends flagged in ``margin``, which is
    how the hyperbolic charts keep ``φ`` finite.
    """

    name: str
    dim_n: int
    extents: tuple[tuple[float, float], ...]
    metric_id: str = "flat"
    phi_id: str = "one"
    mask_id: str = "full"
    metric_params: dict = field(default_factory=dict)
    phi_params: dict = field(default_factory=dict)
    mask_params: dict = field(default_factory=dict)
    periodic: tuple[bool, ...] = ()
    natural_lo: tuple[bool, ...] = ()
    margin: tuple[tuple[int, int], ...] = ()
    h: float = 0.05
    periodic_nodes: int = 96
    collar: dict | None = None
    description: str = ""

    def chart_extents(self, h: float) -> tuple[tuple[float, float], ...]:
        margin = self.margin or ((0, 0),) * self.dim_n
        return tuple((a + m_lo * h, b - m_hi * h) for (a, b), (m_lo, m_hi) in zip(self.extents, margin))

    def grid(self, h: float | None = None) -> ChartGrid:
        h = self.h if h is None else float(h)
        ext = self.chart_extents(h)
        periodic = self.periodic or (False,) * self.dim_n
        natural = self.natural_lo or (False,) * self.dim_n
        shape = []
        for (a, b), p in zip(ext, periodic):
            if p:
                shape.append(self.periodic_nodes)
            else:
                shape.append(int(math.ceil((b - a) / h - 1e-9)) + 1)
        return ChartGrid(extents=ext, shape=tuple(shape), periodic=periodic, natural_lo=natural)

    def instantiate(self, h: float | None = None, **overrides) -> "Model":
        preset = replace(self, **overrides) if overrides else self
        grid = preset.grid(h)
        coords = grid.coords()
        g = MetricField.from_sigma(metric_catalog(preset.metric_id, coords, preset.metric_params))
        phi_vals, drift = phi_catalog(preset.phi_id, coords, preset.phi_params)
        phi = ConformalFactor(phi=phi_vals, log_phi_grad=drift)
        ls = mask_catalog(preset.mask_id, coords, preset.mask_params)
        inside = np.ones(grid.shape, dtype=bool) if ls is None else ls >= 0
        dom = make_domain(grid, g, inside, levelset=ls)
        return Model(preset=preset, grid=grid, g=g, phi=phi, dom=dom)

    def to_json(self) -> dict:
        d = asdict(self)
        d["extents"] = [list(e) for e in self.extents]
        d["margin"] = [list(m) for m in self.margin]
        d["periodic"] = list(self.periodic)
        d["natural_lo"] = list(self.natural_lo)
        return d

    @classmethod
    def from_json(cls, data: dict) -> "ModelPreset":
        try:
            n = int(data["dim_n"])
            kw = dict(data)
            kw["extents"] = tuple(tuple(float(v) for v in e) for e in data["extents"])
            kw["margin"] = tuple(tuple(int(v) for v in m) for m in data.get("margin", ()))
            kw["periodic"] = tuple(bool(v) for v in data.get("periodic", ()))
            kw["natural_lo"] = tuple(bool(v) for v in data.get("natural_lo", ()))
            preset = cls(**kw)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed model description: {exc}") from exc
        if len(preset.extents) != n:
            raise ValueError("dim_n does not match the number of extents")
        return preset


@dataclass(frozen=True, eq=False)
class Model:
    preset: ModelPreset
    grid: ChartGrid
    g: MetricField
    phi: ConformalFactor
    dom: Domain

    @property
    def name(self) -> str:
        return self.preset.name

    def dist_to_dN(self) -> np.ndarray:
        """Distance to the ideal boundary ``∂N`` (the equator) for collar models."""
        if not self.preset.collar:
            raise GeometryError(f"model {self.name!r} has no collar")
        coords = self.grid.coords()
        if self.grid.dim_n == 1:
            return math.pi / 2 - np.abs(coords[0])
        return math.pi / 2 - coords[1]

    def with_phi(self, phi: ConformalFactor) -> "Model":
        return Model(preset=self.preset, grid=self.grid, g=self.g, phi=phi, dom=self.dom)


HALF_PI = math.pi / 2


def _presets() -> dict[str, ModelPreset]:
    p = {}
    p["euclidean-interval"] = ModelPreset(
        name="euclidean-interval", dim_n=1, extents=((0.0, 1.0),), h=0.05,
        description="flat unit interval, phi = 1")
    p["euclidean-square"] = ModelPreset(
        name="euclidean-square", dim_n=2, extents=((0.0, 1.0), (0.0, 1.0)), h=0.05,
        description="flat unit square, phi = 1")
    p["euclidean-disk"] = ModelPreset(
        name="euclidean-disk", dim_n=2, extents=((-1.2, 1.2), (-1.2, 1.2)), mask_id="disk",
        mask_params={"radius": 1.0}, h=0.05, description="flat unit disk mask, phi = 1")
    p["euclidean-annulus"] = ModelPreset(
        name="euclidean-annulus", dim_n=2, extents=((-1.2, 1.2), (-1.2, 1.2)), mask_id="annulus",
        mask_params={"inner": 0.5, "outer": 1.0}, h=0.05,
        description="flat annulus 0.5 <= r <= 1, phi = 1")
    p["hyperbolic-1d"] = ModelPreset(
        name="hyperbolic-1d", dim_n=1, extents=((-HALF_PI, HALF_PI),), phi_id="sec",
        phi_params={"axis": 0}, margin=((4, 4),), h=0.01,
        collar={"r0": math.pi / 4, "profile": "sec"},
        description="upper half circle with phi = sec(alpha); chart margin 4h at the ideal boundary")
    p["hyperbolic-2d"] = ModelPreset(
        name="hyperbolic-2d", dim_n=2, extents=((0.0, 2 * math.pi), (0.0, HALF_PI)),
        metric_id="round-sphere-polar", phi_id="sec", phi_params={"axis": 1},
        periodic=(True, False), natural_lo=(False, True), margin=((0, 0), (2, 4)), h=0.02,
        periodic_nodes=64, collar={"r0": math.pi / 4, "profile": "sec"},
        description="upper hemisphere in polar coordinates (theta, phi_p), phi = sec(phi_p); "
                    "pole disk phi_p < 2h excluded with a natural edge")
    p["hyperbolic-cap-1d"] = hyperbolic_cap(1, math.pi / 3)
    p["hyperbolic-cap-2d"] = hyperbolic_cap(2, math.pi / 4)
    return p


def hyperbolic_cap(n: int, phi0: float, h: float | None = None) -> ModelPreset:
    """The cap ``S_{φ₀}`` of the hyperbolic model as its own chart."""
    if not 0 < phi0 < HALF_PI:
        raise GeometryError("cap angle must lie in (0, pi/2)")
    if n == 1:
        return ModelPreset(
            name="hyperbolic-cap-1d", dim_n=1, extents=((-phi0, phi0),), phi_id="sec",
            phi_params={"axis": 0}, h=0.01 if h is None else h,
            description=f"cap |alpha| <= {phi0:.6g} with phi = sec(alpha)")
    if n == 2:
        return ModelPreset(
            name="hyperbolic-cap-2d", dim_n=2, extents=((0.0, 2 * math.pi), (0.0, phi0)),
            metric_id="round-sphere-polar", phi_id="sec", phi_params={"axis": 1},
            periodic=(True, False), natural_lo=(False, True), margin=((0, 0), (2, 0)),
            h=0.02 if h is None else h, periodic_nodes=64,
            description=f"cap phi_p <= {phi0:.6g} in polar coordinates, phi = sec(phi_p)")
    raise GeometryError(f"hyperbolic model supports n in {{1, 2}}, got {n}")


PRESETS = _presets()


def get_preset(name: str) -> ModelPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}") from None


def hyperbolic_model(n: int, h: float | None = None) -> ModelPreset:
    """Upper hemisphere ``S^n_+`` with ``φ = 1/cos`` of the polar angle."""
    if n not in (1, 2):
        raise GeometryError(f"hyperbolic model supports n in {{1, 2}}, got {n}")
    preset = PRESETS["hyperbolic-1d" if n == 1 else "hyperbolic-2d"]
    return preset if h is None else replace(preset, h=h)


def euclidean_models(shape: str, n: int = 2) -> ModelPreset:
    if n == 1:
        if shape not in ("interval", "square"):
            raise GeometryError("the only 1-dimensional Euclidean model is the interval")
        return PRESETS["euclidean-interval"]
    key = {"square": "euclidean-square", "disk": "euclidean-disk", "disk-mask": "euclidean-disk",
           "annulus": "euclidean-annulus", "annulus-mask": "euclidean-annulus"}.get(shape)
    if key is None:
        raise GeometryError(f"unknown Euclidean shape {shape!r}")
    return PRESETS[key]


def load_model_json(path: str | Path) -> ModelPreset:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return ModelPreset.from_json(data)


def resolve_model(source: str) -> ModelPreset:
    """Preset name or path to a JSON model file."""
    if source in PRESETS:
        return PRESETS[source]
    if source.endswith(".json") or Path(source).exists():
        return load_model_json(source)
    return get_preset(source)


# ---------------------------------------------------------------- geodesic oracle

@dataclass(frozen=True)
class H2Geodesic:
    """Geodesic semicircle of centre ``(c, 0)`` and radius ``R`` in the half plane.

    In the chart ``x = s sin α, y = s cos α, r = ln s`` of ``S¹_+ × ℝ`` it is the
    graph ``u(α) = ln(c sin α + √(R² - c² cos² α))``.
    """

    R: float
    c: float

    def __post_init__(self):
        if not self.R > abs(self.c):
            raise ValueError("need R > |c| for the geodesic to be a graph over the half circle")

    def u(self, alpha):
        a = np.asarray(alpha, dtype=float)
        return np.log(self.c * np.sin(a) + np.sqrt(self.R**2 - self.c**2 * np.cos(a) ** 2))

    def du(self, alpha):
        a = np.asarray(alpha, dtype=float)
        root = np.sqrt(self.R**2 - self.c**2 * np.cos(a) ** 2)
        num = self.c * np.cos(a) + self.c**2 * np.cos(a) * np.sin(a) / root
        return num / (self.c * np.sin(a) + root)

    def trace(self) -> tuple[float, float]:
        """Values at ``α = -π/2`` and ``α = +π/2``: ``ln(R - c)`` and ``ln(R + c)``."""
        return math.log(self.R - self.c), math.log(self.R + self.c)


def h2_geodesic(R: float, c: float) -> H2Geodesic:
    return H2Geodesic(R=float(R), c=float(c))


# ---------------------------------------------------------------- boundary data

def psi_from_spec(spec: str, model: Model) -> np.ndarray:
    """Nodal boundary data from a short expression id.

    ``const:C``, ``affine:A,B`` (A + B·x₁), ``product`` (x₁·x₂),
    ``geodesic:R,C`` (closed-form graph) and ``trace:LO,HI`` (data at the
    two ends of a 1-D chart, used for the ideal boundary).
    """
    kind, _, arg = spec.partition(":")
    nums = [float(v) for v in arg.split(",")] if arg else []
    coords = model.grid.coords()
    try:
        if kind == "const":
            return np.full(model.grid.shape, nums[0])
        if kind == "affine":
            return nums[0] + nums[1] * coords[0]
        if kind == "product":
            if model.grid.dim_n != 2:
                raise ValueError("product data needs a 2-dimensional model")
            return coords[0] * coords[1]
        if kind == "geodesic":
            if model.grid.dim_n != 1:
                raise ValueError("geodesic data needs a 1-dimensional model")
            return h2_geodesic(nums[0], nums[1]).u(coords[0])
        if kind == "trace":
            if model.grid.dim_n != 1:
                raise ValueError("two-point trace data needs a 1-dimensional model")
            return np.where(coords[0] < 0, nums[0], nums[1])
    except IndexError:
        raise ValueError(f"boundary data {spec!r} is missing parameters") from None
    raise ValueError(f"unknown boundary data {spec!r}")
