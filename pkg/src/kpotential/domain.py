"""Core value types, unit conventions and scenario handling.

Units are Gaussian-style and dimensionless: a unit point charge at distance
``rho`` has potential exactly ``1/rho``.  Lengths share one arbitrary scale
(the pair separation ``delta`` included), charges are in units where the
Coulomb constant is one, and ``k`` carries units of inverse length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ScenarioError

DEFAULT_DELTA = 1.45e-8

REPORT_NAMES = (
    "capacity",
    "equilibrium",
    "potential",
    "forces",
    "photoeffect",
    "nested",
    "voxel",
)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    radius: float

    def segments(self) -> list[tuple[float, float]]:
        return [(0.0, float(self.radius))]

    def sphere_radii(self) -> list[float]:
        return []

    @property
    def outer_radius(self) -> float:
        return float(self.radius)

    @property
    def volume(self) -> float:
        return 4.0 * math.pi * self.radius**3 / 3.0

    def breakpoints(self) -> list[float]:
        return [float(self.radius)]


@dataclass(frozen=True)
class NestedShells:
    """Inner ball, concentric thick shells and an optional bare sphere.

    ``shell_faces`` holds ``(inner, outer)`` radii of each shell.  The bare
    sphere (zero thickness) contributes to the capacity but not the volume.
    """

    inner_radius: float
    shell_faces: tuple[tuple[float, float], ...] = ()
    outer_sphere_radius: float | None = None

    def __post_init__(self):
        object.__setattr__(
            self,
            "shell_faces",
            tuple((float(a), float(b)) for a, b in self.shell_faces),
        )

    def segments(self) -> list[tuple[float, float]]:
        return [(0.0, float(self.inner_radius)), *self.shell_faces]

    def sphere_radii(self) -> list[float]:
        if self.outer_sphere_radius is None:
            return []
        return [float(self.outer_sphere_radius)]

    @property
    def outer_radius(self) -> float:
        radii = [float(self.inner_radius)]
        radii += [b for _, b in self.shell_faces]
        radii += self.sphere_radii()
        return max(radii)

    @property
    def volume(self) -> float:
        return sum(4.0 * math.pi * (b**3 - a**3) / 3.0 for a, b in self.segments())

    def breakpoints(self) -> list[float]:
        pts = [float(self.inner_radius)]
        for a, b in self.shell_faces:
            pts += [a, b]
        return pts + self.sphere_radii()

    def face_radii(self) -> list[float]:
        return self.breakpoints()


@dataclass(frozen=True, eq=False)
class VoxelSet:
    """Voxelised conductor; ``occupancy[i, j, k]`` marks cell ``(i, j, k)``."""

    spacing: float
    occupancy: np.ndarray

    def __post_init__(self):
        occ = np.array(self.occupancy, dtype=bool)
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)

    @property
    def volume(self) -> float:
        return float(self.occupancy.sum()) * self.spacing**3

    @classmethod
    def ball(cls, radius: float, spacing: float, pad_cells: int = 0) -> "VoxelSet":
        """Cells whose centres lie inside the ball, centred in the array."""
        n = 2 * int(math.ceil(radius / spacing)) + 2 * pad_cells
        c = (np.arange(n) - (n - 1) / 2.0) * spacing
        x, y, z = np.meshgrid(c, c, c, indexing="ij")
        return cls(spacing, x**2 + y**2 + z**2 <= radius**2)


ConductorGeometry = Union[Ball, NestedShells, VoxelSet]
RadialGeometry = Union[Ball, NestedShells]


def analytic_capacity(geometry: RadialGeometry) -> float:
    """C(E) for a radial set: the capacity of its outermost sphere."""
    return geometry.outer_radius


# ---------------------------------------------------------------------------
# Charges
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VolumeShell:
    """Charge spread with uniform volume density over ``a <= rho <= b``."""

    a: float
    b: float
    charge: float

    @property
    def density(self) -> float:
        return 3.0 * self.charge / (4.0 * math.pi * (self.b**3 - self.a**3))


@dataclass(frozen=True)
class SurfaceSphere:
    radius: float
    charge: float


Component = Union[VolumeShell, SurfaceSphere]


@dataclass(frozen=True)
class ChargeDistribution:
    components: tuple[Component, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    def total(self) -> float:
        return math.fsum(c.charge for c in self.components)

    def scaled(self, factor: float) -> "ChargeDistribution":
        return ChargeDistribution(
            tuple(replace(c, charge=c.charge * factor) for c in self.components)
        )

    def __add__(self, other: "ChargeDistribution") -> "ChargeDistribution":
        return ChargeDistribution(self.components + other.components)

    def breakpoints(self) -> list[float]:
        pts: list[float] = []
        for c in self.components:
            if isinstance(c, VolumeShell):
                pts += [c.a, c.b]
            else:
                pts.append(c.radius)
        return pts

    @property
    def volume_charge(self) -> float:
        return math.fsum(c.charge for c in self.components if isinstance(c, VolumeShell))

    @property
    def surface_charge(self) -> float:
        return math.fsum(c.charge for c in self.components if isinstance(c, SurfaceSphere))

    def split_shell(self, index: int, at: float) -> "ChargeDistribution":
        """Split volume shell ``index`` at radius ``at``, dividing its charge by volume."""
        shell = self.components[index]
        if not isinstance(shell, VolumeShell) or not shell.a < at < shell.b:
            raise ValueError("can only split a volume shell at an interior radius")
        inner = (at**3 - shell.a**3) / (shell.b**3 - shell.a**3)
        parts = (
            VolumeShell(shell.a, at, shell.charge * inner),
            VolumeShell(at, shell.b, shell.charge * (1.0 - inner)),
        )
        comps = self.components
        return ChargeDistribution(comps[:index] + parts + comps[index + 1 :])


# ---------------------------------------------------------------------------
# Grid and parameters
# ---------------------------------------------------------------------------


def _in_segments(rho: np.ndarray, segments: Sequence[tuple[float, float]]) -> np.ndarray:
    flag = np.zeros(rho.shape, dtype=bool)
    for a, b in segments:
        flag |= (rho > a) & (rho < b)
    return flag


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Radial nodes ``0 = rho_0 < ... < rho_N = r_max`` with per-cell conductor flags."""

    node_radii: np.ndarray
    conductor_flag: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.node_radii, dtype=float)
        flags = np.array(self.conductor_flag, dtype=bool)
        nodes.setflags(write=False)
        flags.setflags(write=False)
        object.__setattr__(self, "node_radii", nodes)
        object.__setattr__(self, "conductor_flag", flags)

    @property
    def r_max(self) -> float:
        return float(self.node_radii[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.node_radii)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.node_radii[1:] + self.node_radii[:-1])

    @property
    def cell_volumes(self) -> np.ndarray:
        r = self.node_radii
        return 4.0 * math.pi * (r[1:] ** 3 - r[:-1] ** 3) / 3.0

    @property
    def n_nodes(self) -> int:
        return len(self.node_radii)

    def same_as(self, other: "RadialGrid") -> bool:
        return self.n_nodes == other.n_nodes and np.array_equal(
            self.node_radii, other.node_radii
        )

    def index_of(self, rho: float, tol: float = 1e-9) -> int | None:
        """Node index at radius ``rho`` if one sits there."""
        i = int(np.searchsorted(self.node_radii, rho))
        for j in (i - 1, i):
            if 0 <= j < self.n_nodes and abs(self.node_radii[j] - rho) <= tol * max(1.0, rho):
                return j
        return None

    @classmethod
    def build(
        cls,
        geometry: RadialGeometry | None,
        r_max: float,
        node_count: int,
        extra_breaks: Iterable[float] = (),
    ) -> "RadialGrid":
        """Piecewise-uniform grid with every geometry/charge radius on a node.

        Cells are spread over the segments between breakpoints in proportion
        to their length, so the spacing stays close to ``r_max/(node_count-1)``.
        """
        breaks = set(geometry.breakpoints()) if geometry is not None else set()
        breaks.update(float(b) for b in extra_breaks)
        pts = sorted(b for b in breaks if 0.0 < b < r_max)
        edges = [0.0, *pts, float(r_max)]
        h = r_max / (node_count - 1)
        nodes = [0.0]
        for a, b in zip(edges[:-1], edges[1:]):
            n = max(1, int(round((b - a) / h)))
            nodes.extend(np.linspace(a, b, n + 1)[1:])
        nodes = np.array(nodes)
        segs = geometry.segments() if geometry is not None else []
        mids = 0.5 * (nodes[1:] + nodes[:-1])
        return cls(nodes, _in_segments(mids, segs))

    @classmethod
    def uniform(cls, r_max: float, node_count: int, segments=()) -> "RadialGrid":
        nodes = np.linspace(0.0, r_max, node_count)
        mids = 0.5 * (nodes[1:] + nodes[:-1])
        return cls(nodes, _in_segments(mids, segments))


@dataclass(frozen=True)
class ModelParams:
    k: float = 0.0
    q: float = 1.0
    e: float = 1.0
    delta: float = DEFAULT_DELTA


@dataclass(frozen=True)
class RadialGridSpec:
    r_max: float = 10.0
    node_count: int = 2000


@dataclass(frozen=True)
class VoxelGridSpec:
    spacing: float = 1.0 / 32.0


@dataclass(frozen=True)
class Scenario:
    geometry: ConductorGeometry
    params: ModelParams = field(default_factory=ModelParams)
    grid: RadialGridSpec | VoxelGridSpec = field(default_factory=RadialGridSpec)
    requested_outputs: tuple[str, ...] = ()
    charges: ChargeDistribution | None = None


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def ball_poincare_constant(radius: float) -> float:
    """k(B(0, r)) = sqrt(pi)/(4 r), from the interior sine / exterior 1/rho matching."""
    return math.sqrt(math.pi) / (4.0 * radius)


def _geometry_violations(g: ConductorGeometry) -> list[str]:
    out: list[str] = []
    if isinstance(g, Ball):
        if not g.radius > 0:
            out.append("geometry.radius must be strictly positive")
    elif isinstance(g, NestedShells):
        if not g.inner_radius > 0:
            out.append("geometry.inner_radius must be strictly positive")
        seq = [g.inner_radius]
        for a, b in g.shell_faces:
            if not a < b:
                out.append(f"geometry.shell_faces: shell ({a}, {b}) must have inner < outer")
            seq += [a, b]
        seq += g.sphere_radii()
        if any(not x < y for x, y in zip(seq[:-1], seq[1:])):
            out.append("geometry: radii must be strictly increasing and shells disjoint")
    elif isinstance(g, VoxelSet):
        if not g.spacing > 0:
            out.append("geometry.spacing must be strictly positive")
        if g.occupancy.ndim != 3:
            out.append("geometry.occupancy must be a 3D mask")
        elif not g.occupancy.any():
            out.append("geometry.occupancy is empty")
    else:
        out.append(f"geometry: unknown type {type(g).__name__}")
    return out


def _charge_violations(d: ChargeDistribution, g: ConductorGeometry | None) -> list[str]:
    out: list[str] = []
    segs = g.segments() if isinstance(g, (Ball, NestedShells)) else None
    spheres = g.sphere_radii() if isinstance(g, (Ball, NestedShells)) else []
    tol = 1e-12
    for i, c in enumerate(d.components):
        if isinstance(c, VolumeShell):
            if c.a == c.b:
                out.append(f"charges[{i}]: zero-thickness shell (use a surface sphere)")
                continue
            if c.a > c.b:
                out.append("shell bounds reversed")
                continue
            if c.a < 0:
                out.append(f"charges[{i}]: negative radius")
            if segs is not None and not any(
                a - tol <= c.a and c.b <= b + tol for a, b in segs
            ):
                out.append(f"charges[{i}]: volume shell not inside the conductor")
        else:
            if not c.radius > 0:
                out.append(f"charges[{i}]: sphere radius must be strictly positive")
            elif segs is not None and not (
                any(a - tol <= c.radius <= b + tol for a, b in segs)
                or any(abs(c.radius - s) <= tol for s in spheres)
            ):
                out.append(f"charges[{i}]: surface sphere not on the conductor")
    return out


def _k_violations(g: ConductorGeometry, k: float) -> list[str]:
    if k < 0:
        return ["params.k must be non-negative"]
    if not isinstance(g, (Ball, NestedShells)) or g.volume <= 0:
        return []
    upper = math.sqrt(analytic_capacity(g) / g.volume)
    if k >= upper:
        return [f"k exceeds upper bound sqrt(C/|E|) ~ {upper:.4f}"]
    if isinstance(g, Ball):
        est = ball_poincare_constant(g.radius)
    else:
        from .functional import poincare_constant

        est = poincare_constant(g, RadialGrid.build(g, 10.0 * g.outer_radius, 2000))
    if k > est:
        return [f"k exceeds Poincare estimate k(E) ~ {est:.4f}"]
    return []


def validate(obj) -> list[str]:
    """Return the list of violated invariants (empty when valid).

    Accepts a Scenario, a bare geometry, a ChargeDistribution or a
    single charge component.
    """
    if isinstance(obj, (VolumeShell, SurfaceSphere)):
        return _charge_violations(ChargeDistribution((obj,)), None)
    if isinstance(obj, ChargeDistribution):
        return _charge_violations(obj, None)
    if isinstance(obj, (Ball, NestedShells, VoxelSet)):
        return _geometry_violations(obj)
    if not isinstance(obj, Scenario):
        return [f"cannot validate object of type {type(obj).__name__}"]

    sc = obj
    out = _geometry_violations(sc.geometry)
    p = sc.params
    if not out:
        out += _k_violations(sc.geometry, p.k)
    elif p.k < 0:
        out.append("params.k must be non-negative")
    if not p.delta > 0:
        out.append("params.delta must be strictly positive")
    for name in sc.requested_outputs:
        if name not in REPORT_NAMES:
            out.append(f"requested_outputs: unknown report {name!r}")
    g = sc.geometry
    if isinstance(g, VoxelSet):
        if not isinstance(sc.grid, VoxelGridSpec):
            out.append("grid: voxel geometry needs a voxel resolution")
    else:
        if not isinstance(sc.grid, RadialGridSpec):
            out.append("grid: radial geometry needs r_max and node_count")
        else:
            if sc.grid.node_count < 10:
                out.append("grid.node_count must be at least 10")
            support = g.outer_radius if not _geometry_violations(g) else 0.0
            if sc.charges is not None and sc.charges.components:
                support = max(support, max(sc.charges.breakpoints()))
            if not sc.grid.r_max > support:
                out.append("grid.r_max must exceed the conductor and charge support")
    if sc.charges is not None:
        geom_ok = not _geometry_violations(g) and not isinstance(g, VoxelSet)
        out += _charge_violations(sc.charges, g if geom_ok else None)
    return out


# ---------------------------------------------------------------------------
# Scenario files (YAML, strict keys)
# ---------------------------------------------------------------------------

_GEOMETRY_KEYS = {
    "ball": {"shape", "radius"},
    "nested": {"shape", "inner_radius", "shell_faces", "outer_sphere_radius"},
    "voxel": {"shape", "mask_file", "radius", "spacing"},
}
_TOP_KEYS = {"geometry", "params", "grid", "requested_outputs", "charges"}
_PARAM_KEYS = {"k", "q", "e", "delta"}
_GRID_KEYS = {"r_max", "node_count", "spacing"}


def _strict(section: str, data, allowed: set[str]) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ScenarioError(f"{section}: expected a mapping")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ScenarioError(f"{section}: unknown key(s) {', '.join(unknown)}")
    return data


def geometry_from_dict(data: dict, base: Path | None = None) -> ConductorGeometry:
    data = dict(data)
    shape = data.get("shape")
    if shape not in _GEOMETRY_KEYS:
        raise ScenarioError(f"geometry.shape must be one of {sorted(_GEOMETRY_KEYS)}")
    _strict("geometry", data, _GEOMETRY_KEYS[shape])
    try:
        if shape == "ball":
            return Ball(float(data["radius"]))
        if shape == "nested":
            outer = data.get("outer_sphere_radius")
            return NestedShells(
                float(data["inner_radius"]),
                tuple(tuple(map(float, f)) for f in data.get("shell_faces") or ()),
                None if outer is None else float(outer),
            )
        if "mask_file" in data:
            from .voxel import read_mask

            path = Path(data["mask_file"])
            if base is not None and not path.is_absolute():
                path = base / path
            return read_mask(path)
        return VoxelSet.ball(float(data["radius"]), float(data["spacing"]))
    except KeyError as exc:
        raise ScenarioError(f"geometry: missing key {exc.args[0]}") from None
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"geometry: {exc}") from None


def charges_from_list(items) -> ChargeDistribution:
    comps: list[Component] = []
    for i, item in enumerate(items or ()):
        if not isinstance(item, dict):
            raise ScenarioError(f"charges[{i}]: expected a mapping")
        kind = item.get("type")
        if kind == "shell":
            _strict(f"charges[{i}]", item, {"type", "a", "b", "charge"})
            comps.append(VolumeShell(float(item["a"]), float(item["b"]), float(item["charge"])))
        elif kind == "sphere":
            _strict(f"charges[{i}]", item, {"type", "radius", "charge"})
            comps.append(SurfaceSphere(float(item["radius"]), float(item["charge"])))
        else:
            raise ScenarioError(f"charges[{i}]: type must be 'shell' or 'sphere'")
    return ChargeDistribution(tuple(comps))


def scenario_from_dict(data: dict, base: Path | None = None) -> Scenario:
    data = _strict("scenario", data, _TOP_KEYS)
    if "geometry" not in data:
        raise ScenarioError("scenario: missing geometry")
    geometry = geometry_from_dict(data["geometry"], base)
    p = _strict("params", data.get("params"), _PARAM_KEYS)
    try:
        params = ModelParams(**{key: float(v) for key, v in p.items()})
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"params: {exc}") from None
    g = _strict("grid", data.get("grid"), _GRID_KEYS)
    if isinstance(geometry, VoxelSet):
        if set(g) - {"spacing"}:
            raise ScenarioError("grid: voxel scenarios only take 'spacing'")
        grid: RadialGridSpec | VoxelGridSpec = VoxelGridSpec(
            float(g.get("spacing", geometry.spacing))
        )
    else:
        if "spacing" in g:
            raise ScenarioError("grid: 'spacing' is only valid for voxel geometry")
        grid = RadialGridSpec(
            float(g.get("r_max", 10.0 * geometry.outer_radius)),
            int(g.get("node_count", 2000)),
        )
    outputs = data.get("requested_outputs") or ()
    if isinstance(outputs, str):
        outputs = (outputs,)
    charges = charges_from_list(data["charges"]) if "charges" in data else None
    return Scenario(geometry, params, grid, tuple(outputs), charges)


def load_scenario(path: str | Path) -> Scenario:
    import yaml

    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    return scenario_from_dict(data or {}, path.parent)
