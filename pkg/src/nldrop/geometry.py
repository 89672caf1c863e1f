"""Shapes: ball configurations, voxel sets, halfspace slicing, file formats.

All shapes are bounded and expose the same minimal contract used by the
quadrature engines: ``dimension``, ``bounding_box()``, a vectorized
membership test via ``indicator``, and ``volume``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .errors import ParameterError, PreconditionError, ShapeFormatError


def unit_sphere_area(N: int) -> float:
    """Surface measure of the unit sphere in R^N (for N=3: 4*pi)."""
    if N < 1:
        raise ParameterError(f"dimension must be >= 1, got {N}")
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def unit_ball_volume(N: int) -> float:
    if N < 1:
        raise ParameterError(f"dimension must be >= 1, got {N}")
    return math.pi ** (N / 2.0) / math.gamma(N / 2.0 + 1.0)


def _as_unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if abs(n - 1.0) > 1e-12:
        raise ParameterError(f"direction must be a unit vector; |v| = {n!r}")
    return v


@dataclass(frozen=True, eq=False)
class Halfspace:
    """The set {x : x . nu >= l} for a unit direction nu."""

    nu: np.ndarray
    l: float

    def __post_init__(self):
        nu = _as_unit(self.nu)
        nu.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "l", float(self.l))


@dataclass(frozen=True, eq=False)
class BallConfig:
    """A finite union of balls, usually pairwise disjoint.

    ``disjoint=True`` asserts that center distances exceed radius sums and
    is validated at construction; volume is only defined for disjoint
    configurations in this representation.
    """

    dimension: int
    centers: np.ndarray  # (k, N)
    radii: np.ndarray  # (k,)
    disjoint: bool = True

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        r = np.atleast_1d(np.asarray(self.radii, dtype=float))
        if c.size == 0:
            c = c.reshape(0, self.dimension)
        if c.shape[0] != r.shape[0] or (c.shape[0] and c.shape[1] != self.dimension):
            raise ParameterError("centers must be (k, N) and radii (k,)")
        if np.any(r <= 0):
            raise ParameterError("ball radii must be positive")
        if self.disjoint and c.shape[0] > 1:
            d = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1)
            rs = r[:, None] + r[None, :]
            off = ~np.eye(c.shape[0], dtype=bool)
            if np.any(d[off] <= rs[off]):
                i, j = np.argwhere((d <= rs) & off)[0]
                raise PreconditionError(
                    f"balls {i} and {j} are not disjoint (center distance "
                    f"{d[i, j]:.6g} <= radius sum {rs[i, j]:.6g})"
                )
        c.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radii", r)

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    def bounding_box(self):
        if self.count == 0:
            z = np.zeros(self.dimension)
            return z, z
        lo = (self.centers - self.radii[:, None]).min(axis=0)
        hi = (self.centers + self.radii[:, None]).max(axis=0)
        return lo, hi


@dataclass(frozen=True, eq=False)
class VoxelShape:
    """A set of grid cells: cell (i_1..i_N) covers origin + [i, i+1)*spacing."""

    dimension: int
    origin: np.ndarray
    spacing: float
    occupancy: np.ndarray  # bool, N-dimensional

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ParameterError(f"voxel shapes support N in {{2, 3}}, got {self.dimension}")
        if not (self.spacing > 0):
            raise ParameterError(f"spacing must be positive, got {self.spacing!r}")
        occ = np.asarray(self.occupancy).astype(bool)
        if occ.ndim != self.dimension:
            raise ParameterError("occupancy array rank must equal the dimension")
        origin = np.asarray(self.origin, dtype=float)
        if origin.shape != (self.dimension,):
            raise ParameterError("origin must be an N-vector")
        occ.setflags(write=False)
        origin.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.occupancy))

    def bounding_box(self):
        hi = self.origin + np.array(self.occupancy.shape) * self.spacing
        return self.origin.copy(), hi

    def cell_centers(self) -> np.ndarray:
        """Centers of occupied cells, shape (count, N), in grid scan order."""
        idx = np.argwhere(self.occupancy)
        return self.origin + (idx + 0.5) * self.spacing

    def same_grid(self, other: "VoxelShape") -> bool:
        return (
            self.dimension == other.dimension
            and self.occupancy.shape == other.occupancy.shape
            and abs(self.spacing - other.spacing) <= 1e-15 * self.spacing
            and np.all(np.abs(self.origin - other.origin) <= 1e-12 * self.spacing)
        )


@dataclass(frozen=True, eq=False)
class SlicedShape:
    """A base shape intersected with halfspaces, evaluated via indicator."""

    base: Union[BallConfig, "SlicedShape"]
    cut: Halfspace
    keep_upper: bool  # True: keep {x.nu >= l}; False: keep {x.nu < l}

    @property
    def dimension(self) -> int:
        return self.base.dimension

    def bounding_box(self):
        return self.base.bounding_box()


Shape = Union[BallConfig, VoxelShape, SlicedShape]

# resolution used for the deterministic grid fallback of sliced-shape volume
_SLICED_VOLUME_CELLS = {2: 512, 3: 96}


def indicator(shape: Shape, x) -> np.ndarray:
    """Vectorized membership test; x has shape (..., N)."""
    x = np.asarray(x, dtype=float)
    if isinstance(shape, BallConfig):
        if shape.count == 0:
            return np.zeros(x.shape[:-1], dtype=bool)
        d2 = np.sum(
            (x[..., None, :] - shape.centers) ** 2, axis=-1
        )  # (..., k)
        return np.any(d2 <= shape.radii ** 2, axis=-1)
    if isinstance(shape, VoxelShape):
        idx = np.floor((x - shape.origin) / shape.spacing).astype(int)
        dims = shape.occupancy.shape
        ok = np.all((idx >= 0) & (idx < np.array(dims)), axis=-1)
        flat = np.zeros(x.shape[:-1], dtype=bool)
        if np.any(ok):
            sel = tuple(idx[ok].T)
            flat[ok] = shape.occupancy[sel]
        return flat
    if isinstance(shape, SlicedShape):
        inside = indicator(shape.base, x)
        proj = x @ shape.cut.nu
        side = proj >= shape.cut.l if shape.keep_upper else proj < shape.cut.l
        return inside & side
    raise ParameterError(f"unknown shape type {type(shape).__name__}")


def volume(shape: Shape) -> float:
    """Lebesgue volume: exact for disjoint balls and voxel sets; grid
    midpoint estimate for sliced ball shapes (deterministic resolution)."""
    if isinstance(shape, BallConfig):
        if shape.count == 0:
            return 0.0
        if not shape.disjoint:
            raise PreconditionError(
                "volume is undefined for a ball configuration without the "
                "disjointness flag"
            )
        return float(np.sum(unit_ball_volume(shape.dimension) * shape.radii ** shape.dimension))
    if isinstance(shape, VoxelShape):
        return shape.count * shape.spacing ** shape.dimension
    if isinstance(shape, SlicedShape):
        return _sliced_volume(shape)
    raise ParameterError(f"unknown shape type {type(shape).__name__}")


def _sliced_volume(shape: SlicedShape) -> float:
    lo, hi = shape.bounding_box()
    if np.any(hi <= lo):
        return 0.0
    n = _SLICED_VOLUME_CELLS[shape.dimension]
    axes = [lo[i] + (np.arange(n) + 0.5) * (hi[i] - lo[i]) / n for i in range(shape.dimension)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    cell = float(np.prod((hi - lo) / n))
    return float(np.count_nonzero(indicator(shape, pts))) * cell


def slice_shape(shape: Shape, hs: Halfspace):
    """Split a shape by a halfspace into (upper, lower) parts.

    Voxel shapes classify cells by center, so the two parts partition the
    occupied cells exactly.  Ball shapes return indicator-composed slices.
    """
    if isinstance(shape, VoxelShape):
        centers = shape.origin + 0.5 * shape.spacing
        idx = np.indices(shape.occupancy.shape)
        proj = sum(
            (centers[i] + idx[i] * shape.spacing) * hs.nu[i] for i in range(shape.dimension)
        )
        upper_mask = proj >= hs.l
        up = replace(shape, occupancy=shape.occupancy & upper_mask)
        lo = replace(shape, occupancy=shape.occupancy & ~upper_mask)
        return up, lo
    if isinstance(shape, (BallConfig, SlicedShape)):
        return (
            SlicedShape(base=shape, cut=hs, keep_upper=True),
            SlicedShape(base=shape, cut=hs, keep_upper=False),
        )
    raise ParameterError(f"unknown shape type {type(shape).__name__}")


def translate(shape: Shape, v) -> Shape:
    v = np.asarray(v, dtype=float)
    if isinstance(shape, BallConfig):
        return replace(shape, centers=shape.centers + v)
    if isinstance(shape, VoxelShape):
        return replace(shape, origin=shape.origin + v)
    if isinstance(shape, SlicedShape):
        # {x : x.nu >= l} shifted by v is {x : x.nu >= l + nu.v}
        cut = Halfspace(shape.cut.nu, shape.cut.l + float(shape.cut.nu @ v))
        return SlicedShape(base=translate(shape.base, v), cut=cut, keep_upper=shape.keep_upper)
    raise ParameterError(f"unknown shape type {type(shape).__name__}")


def scale(shape: Shape, lam: float) -> Shape:
    """The rescaled set lam*E.  Voxel grids scale with the shape (spacing
    lam*h), so voxel volumes transform exactly by lam^N with no resampling."""
    if not (lam > 0):
        raise ParameterError(f"scale factor must be positive, got {lam!r}")
    if isinstance(shape, BallConfig):
        return replace(shape, centers=shape.centers * lam, radii=shape.radii * lam)
    if isinstance(shape, VoxelShape):
        return replace(shape, origin=shape.origin * lam, spacing=shape.spacing * lam)
    if isinstance(shape, SlicedShape):
        cut = Halfspace(shape.cut.nu, shape.cut.l * lam)
        return SlicedShape(base=scale(shape.base, lam), cut=cut, keep_upper=shape.keep_upper)
    raise ParameterError(f"unknown shape type {type(shape).__name__}")


def ball_of_volume(N: int, m: float) -> BallConfig:
    """Origin-centered ball with volume m."""
    if not (m > 0):
        raise ParameterError(f"volume must be positive, got {m!r}")
    r = (m / unit_ball_volume(N)) ** (1.0 / N)
    return BallConfig(dimension=N, centers=np.zeros((1, N)), radii=np.array([r]))


def is_empty(shape: Shape) -> bool:
    if isinstance(shape, BallConfig):
        return shape.count == 0
    if isinstance(shape, VoxelShape):
        return shape.count == 0
    if isinstance(shape, SlicedShape):
        return volume(shape) == 0.0
    raise ParameterError(f"unknown shape type {type(shape).__name__}")


def empty_ball_config(N: int) -> BallConfig:
    return BallConfig(dimension=N, centers=np.zeros((0, N)), radii=np.zeros(0))


# ---------------------------------------------------------------------------
# Random test shapes


def random_blob(
    N: int,
    rng: np.random.Generator,
    grid_n: int = 64,
    extent: float = 1.0,
    volume_cap: Optional[float] = None,
) -> VoxelShape:
    """Seeded random blob: the union of 1-5 random balls on a voxel grid.

    When ``volume_cap`` is given the grid spacing is rescaled (exactly, see
    ``scale``) so the voxel volume lands at 90% of the cap or below.
    """
    k = int(rng.integers(1, 6))
    centers = rng.uniform(-0.28 * extent, 0.28 * extent, size=(k, N))
    radii = rng.uniform(0.10 * extent, 0.22 * extent, size=k)
    balls = BallConfig(dimension=N, centers=centers, radii=radii, disjoint=False)
    h = extent / grid_n
    origin = np.full(N, -0.5 * extent)
    axes = [origin[i] + (np.arange(grid_n) + 0.5) * h for i in range(N)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    occ = indicator(balls, pts).reshape((grid_n,) * N)
    shape = VoxelShape(dimension=N, origin=origin, spacing=h, occupancy=occ)
    if volume_cap is not None and shape.count > 0:
        v = volume(shape)
        if v > 0.9 * volume_cap:
            shape = scale(shape, (0.9 * volume_cap / v) ** (1.0 / N))
    return shape


def random_disjoint_pair(
    N: int, rng: np.random.Generator, grid_n: int = 64, extent: float = 1.0
):
    """Two disjoint random blobs on one shared grid, separated along axis 0.

    The left blob lives in the left 40% of the box, the right blob in the
    right 40%, leaving a gap of at least 10% of the extent between them.
    """
    h = extent / grid_n
    origin = np.full(N, -0.5 * extent)
    axes = [origin[i] + (np.arange(grid_n) + 0.5) * h for i in range(N)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)

    def blob_occ(x_lo, x_hi):
        k = int(rng.integers(1, 4))
        centers = rng.uniform(-0.30 * extent, 0.30 * extent, size=(k, N))
        centers[:, 0] = rng.uniform(x_lo + 0.12 * extent, x_hi - 0.12 * extent, size=k)
        radii = rng.uniform(0.06 * extent, 0.115 * extent, size=k)
        balls = BallConfig(dimension=N, centers=centers, radii=radii, disjoint=False)
        occ = indicator(balls, pts).reshape((grid_n,) * N)
        # clip to the allotted slab so the pair is disjoint with a gap
        x_coord = grids[0]
        return occ & (x_coord >= x_lo) & (x_coord < x_hi)

    occ_left = blob_occ(-0.5 * extent, -0.06 * extent)
    occ_right = blob_occ(0.06 * extent, 0.5 * extent)
    left = VoxelShape(dimension=N, origin=origin, spacing=h, occupancy=occ_left)
    right = VoxelShape(dimension=N, origin=origin, spacing=h, occupancy=occ_right)
    return left, right


# ---------------------------------------------------------------------------
# File formats

_VOXEL_MAGIC = "nldrop-voxel 1"


def voxel_to_text(shape: VoxelShape) -> str:
    out = io.StringIO()
    dims = shape.occupancy.shape
    out.write(_VOXEL_MAGIC + "\n")
    out.write(f"dimension {shape.dimension}\n")
    out.write("dims " + " ".join(str(d) for d in dims) + "\n")
    out.write("origin " + " ".join(repr(float(v)) for v in shape.origin) + "\n")
    out.write(f"spacing {float(shape.spacing)!r}\n")
    occ = shape.occupancy.astype(np.uint8)
    if shape.dimension == 2:
        for row in occ:
            out.write("".join("1" if c else "0" for c in row) + "\n")
    else:
        for i, slab in enumerate(occ):
            if i:
                out.write("\n")
            for row in slab:
                out.write("".join("1" if c else "0" for c in row) + "\n")
    return out.getvalue()


def voxel_from_text(text: str) -> VoxelShape:
    lines = text.splitlines()
    if not lines or lines[0].strip() != _VOXEL_MAGIC:
        raise ShapeFormatError(f"expected header {_VOXEL_MAGIC!r}")

    def field_line(i, name, count=None):
        parts = lines[i].split()
        if not parts or parts[0] != name:
            raise ShapeFormatError(f"line {i + 1}: expected {name!r}")
        vals = parts[1:]
        if count is not None and len(vals) != count:
            raise ShapeFormatError(f"line {i + 1}: {name} needs {count} values")
        return vals

    N = int(field_line(1, "dimension", 1)[0])
    if N not in (2, 3):
        raise ShapeFormatError(f"dimension must be 2 or 3, got {N}")
    dims = tuple(int(v) for v in field_line(2, "dims", N))
    origin = np.array([float(v) for v in field_line(3, "origin", N)])
    spacing = float(field_line(4, "spacing", 1)[0])
    body = [ln for ln in lines[5:]]
    rows_needed = dims[0] if N == 2 else dims[0] * dims[1]
    rows = [ln for ln in body if ln.strip() != ""]
    if len(rows) != rows_needed:
        raise ShapeFormatError(f"expected {rows_needed} grid rows, found {len(rows)}")
    width = dims[-1]
    occ_rows = []
    for ln in rows:
        if len(ln) != width or any(c not in "01" for c in ln):
            raise ShapeFormatError(f"bad grid row {ln!r}")
        occ_rows.append([c == "1" for c in ln])
    occ = np.array(occ_rows, dtype=bool).reshape(dims)
    return VoxelShape(dimension=N, origin=origin, spacing=spacing, occupancy=occ)


def save_voxel(shape: VoxelShape, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(voxel_to_text(shape))


def load_voxel(path) -> VoxelShape:
    with open(path) as fh:
        return voxel_from_text(fh.read())


def balls_to_csv(cfg: BallConfig) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow([f"c{i}" for i in range(cfg.dimension)] + ["radius"])
    for c, r in zip(cfg.centers, cfg.radii):
        w.writerow([repr(float(v)) for v in c] + [repr(float(r))])
    return out.getvalue()


def balls_from_csv(text: str, disjoint: bool = True) -> BallConfig:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ShapeFormatError("empty ball CSV")
    header = rows[0]
    if header[-1].strip().lower() != "radius":
        raise ShapeFormatError("ball CSV must end with a 'radius' column")
    N = len(header) - 1
    if N not in (2, 3):
        raise ShapeFormatError(f"ball CSV dimension must be 2 or 3, got {N}")
    centers, radii = [], []
    for r in rows[1:]:
        if len(r) != N + 1:
            raise ShapeFormatError(f"ball CSV row has {len(r)} fields, expected {N + 1}")
        centers.append([float(v) for v in r[:N]])
        radii.append(float(r[N]))
    if not centers:
        return empty_ball_config(N)
    return BallConfig(
        dimension=N, centers=np.array(centers), radii=np.array(radii), disjoint=disjoint
    )


def save_balls(cfg: BallConfig, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(balls_to_csv(cfg))


def load_balls(path, disjoint: bool = True) -> BallConfig:
    with open(path) as fh:
        return balls_from_csv(fh.read(), disjoint=disjoint)
