"""Procedural training terrains and height/friction queries.

A terrain patch is a piecewise-constant heightfield plus a list of yawed
box primitives (stairs/boxes kinds use boxes so risers are exactly
vertical). Patches are immutable after generation and safe to share
across environments. All generation is a pure function of
(kind, params, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .seeding import STREAM_TERRAIN, rng_stream

# Patch geometry: 8 m x 8 m centered on the origin, 4 cm grid.
PATCH_HALF_EXTENT = 4.0
GRID_RESOLUTION = 0.04
GRID_CELLS = int(round(2 * PATCH_HALF_EXTENT / GRID_RESOLUTION))
PERCEPTION_CELL_SIZE = 2.0

# Everything but the four stairs variants and "boxes" lives purely in the
# heightfield.
KINDS = (
    "rough",
    "rough_discrete",
    "large_steps",
    "boxes",
    "grid_steps",
    "step_stairs",
    "stairs_standard",
    "stairs_open",
    "stairs_ledged",
    "stairs_random",
)

# name -> (low, high, difficulty direction). Direction +1 means larger is
# harder (used by the terrain curriculum when drifting particles).
PARAM_RANGES: dict[str, dict[str, tuple[float, float, float]]] = {
    "rough": {"amplitude": (0.0, 0.3, +1.0)},
    "rough_discrete": {"amplitude": (0.0, 0.3, +1.0), "levels": (2, 12, +1.0)},
    "large_steps": {"height": (0.0, 0.4, +1.0)},
    "boxes": {"height": (0.01, 0.25, +1.0)},
    "grid_steps": {"height": (0.05, 0.4, +1.0), "width": (0.2, 0.7, -1.0)},
    "step_stairs": {"height": (0.01, 0.22, +1.0), "depth": (0.25, 1.0, -1.0)},
    "stairs_standard": {"height": (0.01, 0.22, +1.0), "depth": (0.25, 1.0, -1.0)},
    "stairs_open": {"height": (0.01, 0.22, +1.0), "depth": (0.25, 1.0, -1.0)},
    "stairs_ledged": {"height": (0.01, 0.22, +1.0), "depth": (0.25, 1.0, -1.0)},
    "stairs_random": {"height": (0.01, 0.22, +1.0), "depth": (0.25, 1.0, -1.0)},
}

# Accepted by every kind but never drawn by the curriculum sampler.
EXTRA_PARAM_RANGES: dict[str, tuple[float, float]] = {"slippery_regions": (0, 8)}

DEFAULT_FRICTION = 0.7
STAIR_BASE_OFFSET = 0.5  # flat spawn strip |x| < offset before the first tread
LEDGE_NOSING = 0.05
TREAD_THICKNESS = 0.06
BOX_COUNT = 20
BOX_SIDE_RANGE = (0.4, 1.2)


class TerrainError(ValueError):
    pass


@dataclass(frozen=True)
class TerrainSpec:
    """Parameterized terrain description; identical specs generate identical patches."""

    kind: str
    params: dict[str, float] = field(default_factory=dict)
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise TerrainError(f"unknown terrain kind {self.kind!r}; expected one of {KINDS}")
        ranges = PARAM_RANGES[self.kind]
        for name, value in self.params.items():
            if name in ranges:
                lo, hi, _ = ranges[name]
            elif name in EXTRA_PARAM_RANGES:
                lo, hi = EXTRA_PARAM_RANGES[name]
            else:
                raise TerrainError(f"{self.kind}: unknown parameter {name!r}")
            if not (lo <= value <= hi):
                raise TerrainError(
                    f"{self.kind}.{name} = {value} outside allowed range [{lo}, {hi}]"
                )

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "seed": int(self.seed)}

    @staticmethod
    def from_dict(d: dict) -> "TerrainSpec":
        return TerrainSpec(kind=d["kind"], params=dict(d.get("params", {})), seed=int(d.get("seed", 0)))


class HeightQuery(NamedTuple):
    heights: np.ndarray
    out_of_bounds: np.ndarray


@dataclass(frozen=True, eq=False)
class TerrainPatch:
    """Immutable generated terrain.

    ``heightfield`` is sampled piecewise-constant per 4 cm cell. ``boxes``
    rows are (cx, cy, yaw, half_x, half_y, z_bottom, z_top); box tops
    participate in height queries, the full box participates in contact.
    ``friction_regions`` rows are (x0, y0, x1, y1, mu); regions are closed
    on their low-x/low-y edges. ``cell_size`` defines the perception-cell
    partition whose per-episode offsets corrupt height samples only.
    """

    spec: TerrainSpec
    heightfield: np.ndarray
    boxes: np.ndarray
    friction_regions: np.ndarray
    base_friction: float = DEFAULT_FRICTION
    cell_size: float = PERCEPTION_CELL_SIZE
    origin: tuple[float, float] = (-PATCH_HALF_EXTENT, -PATCH_HALF_EXTENT)
    resolution: float = GRID_RESOLUTION

    @property
    def extent(self) -> float:
        return self.heightfield.shape[0] * self.resolution

    @property
    def num_cells(self) -> tuple[int, int]:
        n = int(math.ceil(self.extent / self.cell_size))
        return (n, n)

    def cell_index(self, x, y):
        """Perception-cell index of world points, clipped to the partition."""
        nx, ny = self.num_cells
        ix = np.clip(np.floor((np.asarray(x) - self.origin[0]) / self.cell_size), 0, nx - 1)
        iy = np.clip(np.floor((np.asarray(y) - self.origin[1]) / self.cell_size), 0, ny - 1)
        return ix.astype(np.int64), iy.astype(np.int64)


def _fractal_noise(rng: np.random.Generator, n: int, octaves: int = 3) -> np.ndarray:
    """Band-limited gradient noise on an n x n grid, roughly in [-1, 1]."""
    out = np.zeros((n, n))
    amplitude = 1.0
    cells = 4
    for _ in range(octaves):
        grad = rng.normal(size=(cells + 1, cells + 1, 2))
        grad /= np.linalg.norm(grad, axis=-1, keepdims=True)
        # sample positions in lattice coordinates
        u = np.linspace(0.0, cells, n, endpoint=False)
        gx, gy = np.meshgrid(u, u, indexing="ij")
        i0 = np.floor(gx).astype(int)
        j0 = np.floor(gy).astype(int)
        fx = gx - i0
        fy = gy - j0

        def dot(di, dj):
            g = grad[i0 + di, j0 + dj]
            return g[..., 0] * (fx - di) + g[..., 1] * (fy - dj)

        sx = fx * fx * fx * (fx * (fx * 6 - 15) + 10)
        sy = fy * fy * fy * (fy * (fy * 6 - 15) + 10)
        n00, n10 = dot(0, 0), dot(1, 0)
        n01, n11 = dot(0, 1), dot(1, 1)
        nx0 = n00 + sx * (n10 - n00)
        nx1 = n01 + sx * (n11 - n01)
        out += amplitude * (nx0 + sy * (nx1 - nx0))
        amplitude *= 0.5
        cells *= 2
    peak = np.abs(out).max()
    if peak > 0:
        out /= peak
    return out


def random_stair_scales(rng: np.random.Generator, n: int) -> np.ndarray:
    """Per-tread multiplicative scale factors, N(1.0, 0.2) clipped away from zero."""
    return np.maximum(rng.normal(1.0, 0.2, size=n), 0.1)


def _grid_index(patch_cells: int, coord: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(coord).astype(np.int64), 0, patch_cells - 1)


def _make_stairs(kind: str, h: float, d: float, rng: np.random.Generator) -> np.ndarray:
    """Build stair treads as boxes, ascending in +x and -x from the flat strip.

    Tread k of the ascending kinds spans horizontal distance [k*d, (k+1)*d)
    from the stair base at height k*h, so tread 0 is the ground-level
    approach and the first riser sits one depth past the base.
    """
    half_w = PATCH_HALF_EXTENT
    boxes = []
    for direction in (+1.0, -1.0):
        x = STAIR_BASE_OFFSET
        top = 0.0
        tread = 0
        while x < PATCH_HALF_EXTENT:
            if kind == "stairs_random":
                hk = h * random_stair_scales(rng, 1)[0]
                dk = d * random_stair_scales(rng, 1)[0]
            else:
                hk, dk = h, d
            if kind == "step_stairs":
                # alternating raised/ground platforms of depth d
                top = h if tread % 2 == 0 else 0.0
            x_end = min(x + dk, PATCH_HALF_EXTENT)
            cx = direction * 0.5 * (x + x_end)
            hx = 0.5 * (x_end - x)
            if hx <= 0:
                break
            if top > 0.0:
                if kind == "stairs_open":
                    # floating tread slab, nothing beneath
                    boxes.append((cx, 0.0, 0.0, hx, half_w, top - TREAD_THICKNESS, top))
                elif kind == "stairs_ledged":
                    # solid column plus a nosing slab overhanging the previous tread
                    boxes.append((cx, 0.0, 0.0, hx, half_w, -1.0, top))
                    nose_lo = direction * (x - LEDGE_NOSING)
                    nose_hi = direction * x
                    ncx = 0.5 * (nose_lo + nose_hi)
                    boxes.append((ncx, 0.0, 0.0, 0.5 * LEDGE_NOSING, half_w, top - TREAD_THICKNESS, top))
                else:
                    boxes.append((cx, 0.0, 0.0, hx, half_w, -1.0, top))
            if kind != "step_stairs":
                top = top + hk
            x = x_end
            tread += 1
    return np.array(boxes, dtype=np.float64).reshape(-1, 7)


def generate(spec: TerrainSpec) -> TerrainPatch:
    """Generate the patch for ``spec``. Deterministic in (kind, params, seed)."""
    spec.validate()
    rng = rng_stream(spec.seed, STREAM_TERRAIN)
    n = GRID_CELLS
    hf = np.zeros((n, n))
    boxes = np.zeros((0, 7))
    p = spec.params
    kind = spec.kind

    if kind == "rough":
        amp = p.get("amplitude", 0.1)
        hf = amp * _fractal_noise(rng, n)
    elif kind == "rough_discrete":
        amp = p.get("amplitude", 0.1)
        levels = int(p.get("levels", 6))
        noise = _fractal_noise(rng, n)
        if amp > 0 and levels > 1:
            q = np.round((noise + 1.0) / 2.0 * (levels - 1))
            hf = amp * (2.0 * q / (levels - 1) - 1.0)
    elif kind == "large_steps":
        h = p.get("height", 0.2)
        noise = _fractal_noise(rng, n)
        hf = np.where(noise > 0.0, h, 0.0)
    elif kind == "grid_steps":
        h = p.get("height", 0.2)
        d = p.get("width", 0.4)
        cols = int(math.ceil(2 * PATCH_HALF_EXTENT / d))
        col_heights = np.clip(rng.normal(h, 0.3 * h, size=(cols, cols)), 0.0, 2.0 * h)
        xs = (np.arange(n) + 0.5) * GRID_RESOLUTION
        ci = np.clip((xs / d).astype(int), 0, cols - 1)
        hf = col_heights[np.ix_(ci, ci)]
        # keep the spawn flat
        centers = xs - PATCH_HALF_EXTENT
        mask = np.abs(centers) < STAIR_BASE_OFFSET
        hf[np.ix_(mask, mask)] = 0.0
    elif kind == "boxes":
        hmax = p.get("height", 0.25)
        rows = []
        for _ in range(BOX_COUNT):
            side_x = rng.uniform(*BOX_SIDE_RANGE)
            side_y = rng.uniform(*BOX_SIDE_RANGE)
            yaw = rng.uniform(0.0, 2.0 * math.pi)
            top = rng.uniform(0.05 * hmax + 1e-3, hmax)
            cx = rng.uniform(-PATCH_HALF_EXTENT + 0.8, PATCH_HALF_EXTENT - 0.8)
            cy = rng.uniform(-PATCH_HALF_EXTENT + 0.8, PATCH_HALF_EXTENT - 0.8)
            if abs(cx) < STAIR_BASE_OFFSET and abs(cy) < STAIR_BASE_OFFSET:
                cx += math.copysign(1.0, cx if cx != 0 else 1.0)
            rows.append((cx, cy, yaw, 0.5 * side_x, 0.5 * side_y, -1.0, top))
        boxes = np.array(rows)
    elif kind in ("step_stairs", "stairs_standard", "stairs_open", "stairs_ledged", "stairs_random"):
        h = p.get("height", 0.1)
        d = p.get("depth", 0.4)
        boxes = _make_stairs(kind, h, d, rng)
    else:  # pragma: no cover - validate() rejects unknown kinds
        raise TerrainError(kind)

    regions = np.zeros((0, 5))
    n_slip = int(p.get("slippery_regions", 0))
    if n_slip:
        rows = []
        for _ in range(n_slip):
            x0 = rng.uniform(-PATCH_HALF_EXTENT, PATCH_HALF_EXTENT - 1.0)
            y0 = rng.uniform(-PATCH_HALF_EXTENT, PATCH_HALF_EXTENT - 1.0)
            rows.append((x0, y0, x0 + 1.0, y0 + 1.0, 0.1))
        regions = np.array(rows)

    return TerrainPatch(spec=spec, heightfield=hf, boxes=boxes, friction_regions=regions)


def flat_patch(seed: int = 0, friction: float = DEFAULT_FRICTION) -> TerrainPatch:
    spec = TerrainSpec(kind="rough", params={"amplitude": 0.0}, seed=seed)
    return TerrainPatch(
        spec=spec,
        heightfield=np.zeros((GRID_CELLS, GRID_CELLS)),
        boxes=np.zeros((0, 7)),
        friction_regions=np.zeros((0, 5)),
        base_friction=friction,
    )


def single_step_patch(height: float, edge_x: float = 1.0, seed: int = 0) -> TerrainPatch:
    """Flat ground with one box step of ``height`` whose riser is at x = edge_x."""
    spec = TerrainSpec(kind="large_steps", params={"height": min(max(height, 0.0), 0.4)}, seed=seed)
    box = np.array([[0.5 * (edge_x + PATCH_HALF_EXTENT), 0.0, 0.0,
                     0.5 * (PATCH_HALF_EXTENT - edge_x), PATCH_HALF_EXTENT, -1.0, height]])
    if height <= 0.0:
        box = np.zeros((0, 7))
    return TerrainPatch(
        spec=spec,
        heightfield=np.zeros((GRID_CELLS, GRID_CELLS)),
        boxes=box,
        friction_regions=np.zeros((0, 5)),
    )


def mismatch_patch(physical: TerrainPatch, perceived: TerrainPatch) -> tuple[TerrainPatch, TerrainPatch]:
    """Pair for introspection scenarios: contacts use the first, perception the second."""
    return physical, perceived


def box_tops_at(boxes: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Max box-top height covering each (x, y); -inf where no box covers."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    tops = np.full(x.shape, -np.inf)
    for cx, cy, yaw, hx, hy, _zb, zt in boxes:
        c, s = math.cos(yaw), math.sin(yaw)
        dx = x - cx
        dy = y - cy
        lx = c * dx + s * dy
        ly = -s * dx + c * dy
        inside = (np.abs(lx) <= hx) & (np.abs(ly) <= hy)
        tops = np.where(inside, np.maximum(tops, zt), tops)
    return tops


def height_query(patch: TerrainPatch, x, y) -> HeightQuery:
    """Heights at world points; clamps to the border and flags clamped queries."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = patch.heightfield.shape[0]
    gx = (x - patch.origin[0]) / patch.resolution
    gy = (y - patch.origin[1]) / patch.resolution
    oob = (gx < 0) | (gx >= n) | (gy < 0) | (gy >= n)
    ix = _grid_index(n, gx)
    iy = _grid_index(n, gy)
    h = patch.heightfield[ix, iy]
    if len(patch.boxes):
        hi = patch.origin[0] + patch.extent - 1e-9
        xc = np.clip(x, patch.origin[0], hi)
        yc = np.clip(y, patch.origin[1], hi)
        h = np.maximum(h, box_tops_at(patch.boxes, xc, yc))
    return HeightQuery(heights=h, out_of_bounds=oob)


def height_at(patch: TerrainPatch, x, y) -> np.ndarray:
    """Terrain surface height: max of heightfield cell and covering box tops."""
    return height_query(patch, x, y).heights


def normal_at(patch: TerrainPatch, x, y, spacing: float = GRID_RESOLUTION) -> np.ndarray:
    """Unit surface normal from central differences of the height function."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dhdx = (height_at(patch, x + spacing, y) - height_at(patch, x - spacing, y)) / (2 * spacing)
    dhdy = (height_at(patch, x, y + spacing) - height_at(patch, x, y - spacing)) / (2 * spacing)
    n = np.stack([-dhdx, -dhdy, np.ones_like(dhdx)], axis=-1)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return n


def friction_at(patch: TerrainPatch, x, y, default: float | None = None) -> np.ndarray:
    """Friction coefficient per point: first matching region, else the default.

    ``default`` stands in for the per-episode base coefficient; when None
    the patch's own base value applies. Regions include their low-x/low-y
    edges and exclude the high ones.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    base = patch.base_friction if default is None else default
    mu = np.full(x.shape, float(base))
    assigned = np.zeros(x.shape, dtype=bool)
    for x0, y0, x1, y1, value in patch.friction_regions:
        inside = (x >= x0) & (x < x1) & (y >= y0) & (y < y1) & ~assigned
        mu = np.where(inside, value, mu)
        assigned |= inside
    return mu


def sample_spec(kind: str, rng: np.random.Generator, seed: int | None = None) -> TerrainSpec:
    """Draw a spec uniformly from the kind's parameter ranges."""
    params = {}
    for name, (lo, hi, _) in PARAM_RANGES[kind].items():
        v = rng.uniform(lo, hi)
        params[name] = int(round(v)) if name == "levels" else float(v)
    return TerrainSpec(kind=kind, params=params, seed=int(rng.integers(2**31)) if seed is None else seed)


def export_heightfield(patch: TerrainPatch, path: str) -> None:
    """Plain-text grid dump for external plotting."""
    np.savetxt(path, patch.heightfield, fmt="%.5f")
