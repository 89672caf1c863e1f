"""Integration engines for singular power-law integrands on shapes.

Two engine families are provided behind one interface:

* ``tensor-midpoint``: shapes are voxelized (or already voxel grids); pair
  integrals become occupancy convolutions with a translation-invariant
  stencil evaluated by FFT.  Cell pairs near the singular diagonal use
  exact cell-pair integrals (difference-variable form with a triangular
  weight, dyadic Gauss-Legendre refinement toward the singularity, and
  geometric extrapolation of the truncated corner series).  Complement
  integrals add an exact directional tail: for every cell center the
  kernel mass outside the padded box is the direction-grid integral of the
  closed-form radial tail from the ray-box exit distance.
* ``monte-carlo``: uniform rejection sampling in bounding boxes with fixed
  batch structure; per-batch seeds derive from one SeedSequence so results
  are bit-reproducible for a fixed spec.

Error fields are refinement deltas (tensor, |result(h) - result(2h)|) or
batch standard errors (Monte Carlo).  They are proxies, not bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import signal

from . import geometry, kernels
from .errors import ParameterError
from .geometry import BallConfig, Shape, SlicedShape, VoxelShape
from .kernels import KernelSpec

_NB_BATCHES = 32
_TAIL_DIRECTIONS = {2: 256, 3: 512}
_MAX_CONV_CELLS = 3.3e7
_GL_ORDER = 6
_PAIR_DEPTH = 40
_POINT_DEPTH = 30


@dataclass(frozen=True)
class QuadratureSpec:
    """Engine selection and budgets.

    ``budget`` is the Monte Carlo sample (pair) count, or the target number
    of cells covering the shape's bounding box for tensor grids; ``None``
    resolves to 10^5 samples or 64^N cells.  ``padding`` is measured in
    bounding-box diameters and only affects complement integrals.
    """

    method: str = "tensor-midpoint"
    budget: Optional[int] = None
    seed: int = 0
    padding: float = 2.0
    diagonal_rule: str = "pair-offset"

    def __post_init__(self):
        if self.method not in ("tensor-midpoint", "monte-carlo"):
            raise ParameterError(f"unknown quadrature method {self.method!r}")
        if self.diagonal_rule not in ("pair-offset", "skip-and-bound"):
            raise ParameterError(f"unknown diagonal rule {self.diagonal_rule!r}")
        if self.budget is not None and self.budget < 1000:
            raise ParameterError(f"budget must be >= 1000, got {self.budget}")
        if self.padding < 0:
            raise ParameterError(f"padding must be nonnegative, got {self.padding}")

    def resolved_budget(self, N: int) -> int:
        if self.budget is not None:
            return int(self.budget)
        return 100_000 if self.method == "monte-carlo" else 64 ** N


@dataclass(frozen=True)
class IntegralEstimate:
    value: float
    error: float
    samples: int
    method: str
    seed: Optional[int] = None
    warning: Optional[str] = None

    def as_record(self) -> dict:
        return {
            "value": self.value,
            "error": self.error,
            "samples": self.samples,
            "method": self.method,
            "seed": self.seed,
            "warning": self.warning or "",
        }


@dataclass(frozen=True, eq=False)
class PointSingularity:
    """Marker integrand f(x) = |x - center|^(-exponent).

    Exponents below N are integrable; the cell containing the center is
    integrated by dyadic refinement instead of the midpoint rule.  Negative
    exponents are allowed (positive powers of the distance).
    """

    center: np.ndarray
    exponent: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "center", c)

    def vec(self, pts: np.ndarray) -> np.ndarray:
        r = np.sqrt(np.sum((pts - self.center) ** 2, axis=-1))
        if self.exponent > 0:
            out = np.zeros_like(r)
            pos = r > 0
            out[pos] = r[pos] ** (-self.exponent)
            out[~pos] = np.inf
            return out
        return r ** (-self.exponent)


# ---------------------------------------------------------------------------
# Offset integrands (functions of y - x) used by the pair-sum engines


@dataclass(frozen=True, eq=False)
class OffsetIntegrand:
    """A stationary pair integrand g evaluated at the offset z = y - x.

    ``sigma`` is the strength of the |z|^-sigma behavior at z = 0 (0 for
    bounded integrands); it controls near-diagonal refinement.  Radial
    integrands set ``ray_tail`` (per-steradian tail integral of
    g(r) r^(N-1) from rho to infinity) to enable complement tails, and
    ``near_moment`` (the same integral from 0 to rho) for diagonal bounds.
    """

    dimension: int
    sigma: float
    vec: Callable[[np.ndarray], np.ndarray]
    cache_token: object
    ray_tail: Optional[Callable[[np.ndarray], np.ndarray]] = None
    near_moment: Optional[Callable[[float], float]] = None


def kernel_integrand(kernel: KernelSpec) -> OffsetIntegrand:
    N, s = kernel.dimension, kernel.s

    def vec(z):
        return kernels.eval_kernel(kernel, z)

    if kernel.kind == "fractional":
        ray_tail = lambda rho: np.asarray(rho, dtype=float) ** (-s) / s
        near = lambda rho: math.inf
    elif kernel.kind == "truncated-fractional":
        r_cap = kernel.cap ** (-1.0 / (N + s))

        def ray_tail(rho):
            rho = np.asarray(rho, dtype=float)
            frac = np.maximum(rho, r_cap) ** (-s) / s
            flat = kernel.cap * np.clip(r_cap ** N - rho ** N, 0.0, None) / N
            return frac + flat

        def near(rho):
            if rho <= r_cap:
                return kernel.cap * rho ** N / N
            return kernel.cap * r_cap ** N / N + (r_cap ** (-s) - rho ** (-s)) / s

    else:  # tabulated: interpolate the tail integral on a log grid
        _tail_cache = {}

        def ray_tail(rho):
            rho = np.asarray(rho, dtype=float)
            lo, hi = float(rho.min()), float(rho.max())
            key = None
            for (a, b), tab in _tail_cache.items():
                if a <= lo and hi <= b:
                    key = (a, b)
                    break
            if key is None:
                a, b = lo * 0.5, hi * 2.0
                grid = np.geomspace(a, b, 512)
                vals = np.array([kernels.radial_tail_integral(kernel, g) for g in grid])
                _tail_cache[(a, b)] = (grid, vals)
                key = (a, b)
            grid, vals = _tail_cache[key]
            return np.interp(np.log(rho), np.log(grid), vals)

        def near(rho):
            from scipy import integrate

            val, _ = integrate.quad(
                lambda r: float(kernels.eval_kernel_radial(kernel, r)) * r ** (N - 1),
                0.0,
                rho,
                limit=100,
            )
            return val

    return OffsetIntegrand(
        dimension=N,
        sigma=N + s,
        vec=vec,
        cache_token=kernel.cache_token,
        ray_tail=ray_tail,
        near_moment=near,
    )


def riesz_integrand(N: int, alpha: float) -> OffsetIntegrand:
    if not (0.0 < alpha < N):
        raise ParameterError(f"riesz exponent must lie in (0, {N}), got {alpha}")

    def vec(z):
        r = np.sqrt(np.sum(np.asarray(z, dtype=float) ** 2, axis=-1))
        return r ** (-alpha)

    return OffsetIntegrand(
        dimension=N,
        sigma=alpha,
        vec=vec,
        cache_token=("riesz", N, alpha),
        ray_tail=None,
        near_moment=lambda rho: rho ** (N - alpha) / (N - alpha),
    )


def kernel_moment_integrand(kernel: KernelSpec) -> OffsetIntegrand:
    """g(z) = K(z) |z|: the first radial moment of the kernel."""
    N = kernel.dimension

    def vec(z):
        z = np.asarray(z, dtype=float)
        r = np.sqrt(np.sum(z ** 2, axis=-1))
        return kernels.eval_kernel_radial(kernel, r) * r

    return OffsetIntegrand(
        dimension=N,
        sigma=kernel.sigma - 1.0,
        vec=vec,
        cache_token=("moment1",) + (kernel.cache_token,),
        ray_tail=None,
        near_moment=None,
    )


def directional_positive_integrand(nu: np.ndarray) -> OffsetIntegrand:
    """g(z) = (z . nu)_+ / |z|, bounded, used by the layer-cake identity."""
    nu = np.asarray(nu, dtype=float)
    N = nu.size

    def vec(z):
        z = np.asarray(z, dtype=float)
        r = np.sqrt(np.sum(z ** 2, axis=-1))
        proj = np.clip(z @ nu, 0.0, None)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(r > 0, proj / np.where(r > 0, r, 1.0), 0.0)
        return out

    return OffsetIntegrand(
        dimension=N,
        sigma=0.0,
        vec=vec,
        cache_token=("dirpos", N) + tuple(float(v) for v in nu),
        ray_tail=None,
        near_moment=None,
    )


def _coerce_integrand(g, N: int) -> Optional[OffsetIntegrand]:
    if isinstance(g, OffsetIntegrand):
        return g
    if isinstance(g, KernelSpec):
        if g.dimension != N:
            raise ParameterError("kernel dimension does not match the shapes")
        return kernel_integrand(g)
    if isinstance(g, (int, float)) and not isinstance(g, bool):
        return riesz_integrand(N, float(g))
    return None


# ---------------------------------------------------------------------------
# Exact cell-pair and point-singularity integrals (dyadic Gauss-Legendre)

_GL_NODES, _GL_WEIGHTS = leggauss(_GL_ORDER)


def _gl_axis(lo: float, hi: float):
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return mid + half * _GL_NODES, half * _GL_WEIGHTS


def _box_quad(lo, hi, fvec, N) -> float:
    """Gauss-Legendre tensor quadrature of fvec over the box [lo, hi]."""
    axes, wts = zip(*(_gl_axis(lo[i], hi[i]) for i in range(N)))
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*wts, indexing="ij")
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return float(np.sum(fvec(pts) * w))


def _dyadic_stack_integral(boxes, fvec, N, depth) -> float:
    """Sum of integrals over boxes, splitting any box containing the origin.

    Per-depth contributions are tracked and the truncated series from the
    shrinking origin box is completed by geometric extrapolation.
    """
    contrib = np.zeros(depth + 1)
    stack = [(lo, hi, 0) for lo, hi in boxes]
    while stack:
        lo, hi, dep = stack.pop()
        if np.any(hi <= lo):
            continue
        if np.any((lo > 0.0) | (hi < 0.0)):
            contrib[dep] += _box_quad(lo, hi, fvec, N)
        elif dep < depth:
            mids = 0.5 * (lo + hi)
            for corner in range(2 ** N):
                clo, chi = lo.copy(), hi.copy()
                for ax in range(N):
                    if corner >> ax & 1:
                        clo[ax] = mids[ax]
                    else:
                        chi[ax] = mids[ax]
                stack.append((clo, chi, dep + 1))
    total = float(contrib.sum())
    if contrib[depth] > 0.0 and contrib[depth - 1] > 0.0:
        ratio = min(contrib[depth] / contrib[depth - 1], 0.95)
        total += contrib[depth] * ratio / (1.0 - ratio)
    return total


def _axis_breaks(d: float, h: float) -> list:
    """Breakpoints of [d-h, d+h] at the weight apex d and at 0 if interior."""
    pts = [d - h, d, d + h]
    if d - h < 0.0 < d + h:
        pts.append(0.0)
    return sorted(set(pts))


def cell_pair_integral(dvec, h: float, gvec: Callable, N: int, depth: int = _PAIR_DEPTH) -> float:
    """Exact integral of g(y - x) over a pair of cubic cells.

    The cells have side h and center offset dvec = center(y-cell) minus
    center(x-cell).  In the difference variable z = y - x the integral is
    g(z) times the separable triangular weight prod_i (h - |z_i - d_i|)_+
    over d + [-h, h]^N.  The weight's apex hyperplanes and the origin are
    pre-split so every quadrature box sees a smooth integrand.
    """
    d = np.asarray(dvec, dtype=float)

    def fvec(pts):
        w = np.prod(np.clip(h - np.abs(pts - d), 0.0, None), axis=-1)
        return gvec(pts) * w

    axis_edges = [_axis_breaks(d[i], h) for i in range(N)]
    boxes = []
    counts = [len(e) - 1 for e in axis_edges]
    for flat in range(int(np.prod(counts))):
        lo = np.empty(N)
        hi = np.empty(N)
        rem = flat
        for ax in range(N):
            k = rem % counts[ax]
            rem //= counts[ax]
            lo[ax] = axis_edges[ax][k]
            hi[ax] = axis_edges[ax][k + 1]
        boxes.append((lo, hi))
    return _dyadic_stack_integral(boxes, fvec, N, depth)


def point_singularity_cell_integral(
    lo, hi, center, exponent: float, N: int, depth: int = _POINT_DEPTH
) -> float:
    """Integral of |x - center|^(-exponent) over the box [lo, hi].

    Handles the singular point inside the box by dyadic refinement; the
    exponent must be below N for convergence.
    """
    if exponent >= N:
        raise ParameterError(
            f"exponent {exponent} >= N = {N}: integral over a cell containing "
            "the singular point diverges"
        )
    lo = np.asarray(lo, dtype=float) - np.asarray(center, dtype=float)
    hi = np.asarray(hi, dtype=float) - np.asarray(center, dtype=float)

    def fvec(pts):
        r = np.sqrt(np.sum(pts ** 2, axis=-1))
        return r ** (-exponent)

    boxes = []
    axis_edges = []
    for i in range(N):
        pts = [lo[i], hi[i]]
        if lo[i] < 0.0 < hi[i]:
            pts.insert(1, 0.0)
        axis_edges.append(pts)
    counts = [len(e) - 1 for e in axis_edges]
    for flat in range(int(np.prod(counts))):
        blo = np.empty(N)
        bhi = np.empty(N)
        rem = flat
        for ax in range(N):
            k = rem % counts[ax]
            rem //= counts[ax]
            blo[ax] = axis_edges[ax][k]
            bhi[ax] = axis_edges[ax][k + 1]
        boxes.append((blo, bhi))
    return _dyadic_stack_integral(boxes, fvec, N, depth)


# ---------------------------------------------------------------------------
# Stencils and FFT pair sums

_STENCIL_CACHE: dict = {}


def _stencil(dims, h: float, igd: OffsetIntegrand, rule: str) -> np.ndarray:
    """Pair-sum table T indexed by cell offset (shifted by dims - 1):
    T[off] = integral of g(y - x) over an ordered pair of cells with center
    offset off * h.  Far offsets use the midpoint value g(off*h) h^(2N);
    near offsets (inf-norm <= 2 for strongly singular g, <= 1 otherwise)
    use exact cell-pair integrals under the "pair-offset" rule."""
    N = igd.dimension
    key = (igd.cache_token, tuple(dims), float(h), rule)
    hit = _STENCIL_CACHE.get(key)
    if hit is not None:
        return hit
    shape = tuple(2 * d - 1 for d in dims)
    if np.prod(shape) > _MAX_CONV_CELLS:
        raise ParameterError(
            "tensor grid too large for the FFT pair sum; reduce the quadrature "
            "budget or the box padding"
        )
    axes = [np.arange(-(d - 1), d) for d in dims]
    grids = np.meshgrid(*axes, indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=-1).astype(float)

    T = np.zeros(offsets.shape[0])
    r0 = np.max(np.abs(offsets), axis=-1)  # inf-norm in cell units
    far = r0 > 0
    chunk = 1 << 21
    scale = h ** (2 * N)
    for start in range(0, offsets.shape[0], chunk):
        sl = slice(start, min(start + chunk, offsets.shape[0]))
        zi = offsets[sl] * h
        mask = far[sl]
        if np.any(mask):
            vals = np.zeros(zi.shape[0])
            vals[mask] = igd.vec(zi[mask]) * scale
            T[sl] = vals

    near_width = 2 if igd.sigma >= N - 0.5 else 1
    if rule == "pair-offset":
        near_sel = np.nonzero((r0 <= near_width) & (r0 > 0))[0]
        for i in near_sel:
            T[i] = cell_pair_integral(offsets[i] * h, h, igd.vec, N)
        if igd.sigma < N:
            center = np.nonzero(r0 == 0)[0]
            T[center] = cell_pair_integral(np.zeros(N), h, igd.vec, N)
    T = T.reshape(shape)
    T.setflags(write=False)
    _STENCIL_CACHE[key] = T
    return T


def _pair_field(occ: np.ndarray, T: np.ndarray) -> np.ndarray:
    """field[i] = sum over occupied j of T[(j - i) + dims - 1]."""
    rev = T[tuple(slice(None, None, -1) for _ in range(T.ndim))]
    conv = signal.fftconvolve(occ.astype(float), rev, mode="full")
    sl = tuple(slice(d - 1, 2 * d - 1) for d in occ.shape)
    return conv[sl]


def _fft_pair_sum(occ_a: np.ndarray, occ_b: np.ndarray, T: np.ndarray) -> float:
    return float(np.sum(_pair_field(occ_b, T) * occ_a))


# ---------------------------------------------------------------------------
# Directional tails for complement integrals


def _direction_grid(N: int, count: int):
    """Exact-measure midpoint direction grid: weights sum to the sphere area."""
    if N == 2:
        ang = (np.arange(count) + 0.5) * (2.0 * math.pi / count)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        w = np.full(count, 2.0 * math.pi / count)
        return dirs, w
    nu = max(4, int(round(math.sqrt(count / 2.0))))
    nphi = 2 * nu
    u = -1.0 + (np.arange(nu) + 0.5) * (2.0 / nu)
    phi = (np.arange(nphi) + 0.5) * (2.0 * math.pi / nphi)
    uu, pp = np.meshgrid(u, phi, indexing="ij")
    su = np.sqrt(1.0 - uu ** 2)
    dirs = np.stack([su * np.cos(pp), su * np.sin(pp), uu], axis=-1).reshape(-1, 3)
    w = np.full(dirs.shape[0], (2.0 / nu) * (2.0 * math.pi / nphi))
    return dirs, w


def _ray_exit(pts: np.ndarray, lo, hi, dirs: np.ndarray) -> np.ndarray:
    """Distance from each interior point to the box boundary along each
    direction; shape (len(pts), len(dirs))."""
    x = pts[:, None, :]
    u = dirs[None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_hi = (hi - x) / u
        t_lo = (lo - x) / u
    t = np.where(u > 0, t_hi, np.where(u < 0, t_lo, np.inf))
    return t.min(axis=-1)


def _tail_per_cell(pts: np.ndarray, lo, hi, igd: OffsetIntegrand, n_dirs: int) -> np.ndarray:
    """Per-point integral of g over the complement of the box [lo, hi]."""
    dirs, w = _direction_grid(igd.dimension, n_dirs)
    out = np.empty(pts.shape[0])
    chunk = 2048
    for start in range(0, pts.shape[0], chunk):
        sl = slice(start, min(start + chunk, pts.shape[0]))
        rho = _ray_exit(pts[sl], lo, hi, dirs)
        out[sl] = igd.ray_tail(rho) @ w
    return out


# ---------------------------------------------------------------------------
# Voxelization and grid utilities


def voxelize(
    shape: Shape,
    cells_per_axis: Optional[int] = None,
    box=None,
    budget: Optional[int] = None,
) -> VoxelShape:
    """Sample a shape onto a cubic-cell grid covering ``box`` (default: the
    shape's bounding box).  Cells are classified by their centers."""
    if isinstance(shape, VoxelShape) and box is None and cells_per_axis is None:
        return shape
    N = shape.dimension
    lo, hi = shape.bounding_box() if box is None else (np.asarray(box[0], float), np.asarray(box[1], float))
    extent = hi - lo
    if np.any(extent <= 0):
        return VoxelShape(
            dimension=N, origin=lo, spacing=1.0, occupancy=np.zeros((1,) * N, dtype=bool)
        )
    if cells_per_axis is None:
        budget = budget or 64 ** N
        cells_per_axis = max(4, int(round(budget ** (1.0 / N))))
    h = float(np.max(extent)) / cells_per_axis
    dims = tuple(max(1, int(math.ceil(extent[i] / h - 1e-9))) for i in range(N))
    if np.prod(dims) > 1.0e8:
        raise ParameterError("voxelization grid too large; reduce the budget")
    axes = [lo[i] + (np.arange(dims[i]) + 0.5) * h for i in range(N)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    occ = geometry.indicator(shape, pts).reshape(dims)
    return VoxelShape(dimension=N, origin=lo, spacing=h, occupancy=occ)


def _embed(vox: VoxelShape, origin, dims) -> np.ndarray:
    """Occupancy of ``vox`` re-indexed into a larger aligned grid."""
    off = np.rint((vox.origin - origin) / vox.spacing).astype(int)
    if np.max(np.abs((vox.origin - origin) / vox.spacing - off)) > 1e-6:
        raise ParameterError("grids are not aligned; cannot embed exactly")
    occ = np.zeros(dims, dtype=bool)
    sl = tuple(slice(off[i], off[i] + vox.occupancy.shape[i]) for i in range(vox.dimension))
    occ[sl] = vox.occupancy
    return occ


def _common_grid(a: VoxelShape, b: VoxelShape):
    """Embed two same-spacing aligned voxel shapes into one shared grid."""
    h = a.spacing
    if abs(a.spacing - b.spacing) > 1e-12 * h:
        raise ParameterError("voxel shapes have different spacings")
    origin = np.minimum(a.origin, b.origin)
    hi = np.maximum(
        a.origin + np.array(a.occupancy.shape) * h,
        b.origin + np.array(b.occupancy.shape) * h,
    )
    dims = tuple(int(round(v)) for v in (hi - origin) / h)
    return _embed(a, origin, dims), _embed(b, origin, dims), origin, h


def _coarsen(occ: np.ndarray) -> np.ndarray:
    """Halve the grid resolution: a coarse cell is occupied when at least
    half of its fine subcells are."""
    N = occ.ndim
    padded = occ
    for ax in range(N):
        if padded.shape[ax] % 2:
            pad = [(0, 0)] * N
            pad[ax] = (0, 1)
            padded = np.pad(padded, pad)
    view_shape = []
    for d in padded.shape:
        view_shape.extend([d // 2, 2])
    counts = padded.astype(np.int8).reshape(view_shape)
    for ax in range(N - 1, -1, -1):
        counts = counts.sum(axis=2 * ax + 1)
    return counts >= 2 ** (N - 1)


def _coarse_voxel(vox: VoxelShape) -> VoxelShape:
    return VoxelShape(
        dimension=vox.dimension,
        origin=vox.origin,
        spacing=2.0 * vox.spacing,
        occupancy=_coarsen(vox.occupancy),
    )


def _as_grid(shape: Shape, budget: int, box=None, coarse: bool = False) -> VoxelShape:
    """Voxel view of any shape for the tensor engines."""
    if isinstance(shape, VoxelShape):
        return _coarse_voxel(shape) if coarse else shape
    n = max(4, int(round(budget ** (1.0 / shape.dimension))))
    if coarse:
        n = max(4, n // 2)
    return voxelize(shape, cells_per_axis=n, box=box)


def _batch_rngs(seed: int):
    seqs = np.random.SeedSequence(seed).spawn(_NB_BATCHES)
    return [np.random.default_rng(s) for s in seqs]


def _mc_combine(batch_means: np.ndarray):
    value = float(np.mean(batch_means))
    if len(batch_means) > 1:
        err = float(np.std(batch_means, ddof=1) / math.sqrt(len(batch_means)))
    else:
        err = float("nan")
    return value, err


# ---------------------------------------------------------------------------
# Public operations


def integral_over(E: Shape, f, spec: QuadratureSpec) -> IntegralEstimate:
    """Estimate the integral of f over the shape E.

    ``f`` is either a vectorized callable mapping an array of points with
    shape (k, N) to (k,) values, or a ``PointSingularity`` marker whose
    singular cell is integrated by dyadic refinement on tensor grids.
    """
    N = E.dimension
    if geometry.is_empty(E):
        return IntegralEstimate(0.0, 0.0, 0, spec.method, spec.seed)
    sing = f if isinstance(f, PointSingularity) else None
    fvec = sing.vec if sing is not None else f

    if spec.method == "monte-carlo":
        budget = spec.resolved_budget(N)
        lo, hi = E.bounding_box()
        box_vol = float(np.prod(hi - lo))
        per = max(1, budget // _NB_BATCHES)
        means = []
        for rng in _batch_rngs(spec.seed):
            pts = rng.uniform(lo, hi, size=(per, N))
            inside = geometry.indicator(E, pts)
            vals = np.where(inside, fvec(pts), 0.0)
            means.append(float(np.mean(vals)) * box_vol)
        value, err = _mc_combine(np.array(means))
        warn = None
        if sing is not None and 2.0 * sing.exponent >= N:
            warn = "heavy-tailed integrand; Monte Carlo stderr unreliable"
        return IntegralEstimate(value, err, per * _NB_BATCHES, "monte-carlo", spec.seed, warn)

    budget = spec.resolved_budget(N)

    def tensor_value(grid: VoxelShape):
        if grid.count == 0:
            return 0.0, None
        h = grid.spacing
        centers = grid.cell_centers()
        vals = fvec(centers)
        warn = None
        if sing is not None:
            d_inf = np.max(np.abs(centers - sing.center), axis=-1)
            # a point on a face or corner belongs to every touching cell,
            # so correct each of them; the per-cell integrals then add up
            # consistently across any partition of the shape
            inside = d_inf <= 0.5 * h + 1e-12 * h
            for i in np.nonzero(inside)[0]:
                cell_lo = centers[i] - 0.5 * h
                cell_hi = centers[i] + 0.5 * h
                if sing.exponent >= N:
                    vals[i] = 0.0
                    warn = (
                        "singular cell excluded: exponent >= dimension makes the "
                        "cell integral divergent"
                    )
                else:
                    vals[i] = (
                        point_singularity_cell_integral(
                            cell_lo, cell_hi, sing.center, sing.exponent, N
                        )
                        / h ** N
                    )
        return float(np.sum(vals)) * h ** N, warn

    fine = _as_grid(E, budget)
    coarse = _as_grid(E, budget, coarse=True)
    value, warn = tensor_value(fine)
    value2, _ = tensor_value(coarse)
    return IntegralEstimate(
        value, abs(value - value2), fine.count, "tensor-midpoint", spec.seed, warn
    )


def double_integral(E: Shape, F: Shape, g, spec: QuadratureSpec) -> IntegralEstimate:
    """Estimate the pair integral of g over E x F.

    ``g`` may be a KernelSpec, a riesz exponent (float), an
    ``OffsetIntegrand`` (stationary, evaluated at z = y - x), or a generic
    callable g(x, y).  Stationary integrands use FFT pair sums on a common
    grid with near-diagonal cell-pair integrals; generic callables fall
    back to direct midpoint sums or Monte Carlo.
    """
    N = E.dimension
    if geometry.is_empty(E) or geometry.is_empty(F):
        return IntegralEstimate(0.0, 0.0, 0, spec.method, spec.seed)
    igd = _coerce_integrand(g, N)

    if spec.method == "monte-carlo":
        budget = spec.resolved_budget(N)
        loE, hiE = E.bounding_box()
        loF, hiF = F.bounding_box()
        vol = float(np.prod(hiE - loE)) * float(np.prod(hiF - loF))
        per = max(1, budget // _NB_BATCHES)
        means = []
        for rng in _batch_rngs(spec.seed):
            x = rng.uniform(loE, hiE, size=(per, N))
            y = rng.uniform(loF, hiF, size=(per, N))
            keep = geometry.indicator(E, x) & geometry.indicator(F, y)
            if igd is not None:
                vals = np.where(keep, _safe_offset_eval(igd, y - x), 0.0)
            else:
                vals = np.where(keep, g(x, y), 0.0)
            means.append(float(np.mean(vals)) * vol)
        value, err = _mc_combine(np.array(means))
        warn = None
        if igd is not None and 2.0 * igd.sigma >= N:
            warn = "heavy-tailed integrand; Monte Carlo stderr unreliable"
        return IntegralEstimate(value, err, per * _NB_BATCHES, "monte-carlo", spec.seed, warn)

    budget = spec.resolved_budget(N)
    if igd is None:
        return _generic_tensor_double(E, F, g, spec, budget)

    def tensor_value(coarse: bool):
        gE, gF, origin, h, union_box = _pair_grids(E, F, budget, coarse)
        T = _stencil(gE.shape, h, igd, spec.diagonal_rule)
        val = _fft_pair_sum(gE, gF, T)
        bound = 0.0
        if spec.diagonal_rule == "skip-and-bound":
            overlap = int(np.count_nonzero(gE & gF))
            if overlap:
                rho = math.sqrt(N) * h
                m = igd.near_moment(rho) if igd.near_moment is not None else math.inf
                bound = overlap * geometry.unit_sphere_area(N) * m
        cells = int(np.count_nonzero(gE)) + int(np.count_nonzero(gF))
        return val, bound, cells

    value, bound, cells = tensor_value(False)
    value2, _, _ = tensor_value(True)
    err = abs(value - value2) + bound
    warn = "diagonal cells skipped; analytic bound added to the error" if bound else None
    if bound == math.inf:
        warn = "diagonal bound divergent for this integrand; value excludes coincident cells"
    return IntegralEstimate(value, err, cells, "tensor-midpoint", spec.seed, warn)


def _safe_offset_eval(igd: OffsetIntegrand, z: np.ndarray) -> np.ndarray:
    r2 = np.sum(z ** 2, axis=-1)
    ok = r2 > 0
    out = np.zeros(z.shape[0])
    if np.any(ok):
        out[ok] = igd.vec(z[ok])
    out[~ok] = np.inf
    return out


def _pair_grids(E: Shape, F: Shape, budget: int, coarse: bool):
    """Common-grid occupancy views of E and F plus the shared box."""
    if (
        isinstance(E, VoxelShape)
        and isinstance(F, VoxelShape)
        and abs(E.spacing - F.spacing) <= 1e-12 * E.spacing
    ):
        vE = _coarse_voxel(E) if coarse else E
        vF = _coarse_voxel(F) if coarse else F
        occE, occF, origin, h = _common_grid(vE, vF)
        hi = origin + np.array(occE.shape) * h
        return occE, occF, origin, h, (origin, hi)
    loE, hiE = E.bounding_box()
    loF, hiF = F.bounding_box()
    lo = np.minimum(loE, loF)
    hi = np.maximum(hiE, hiF)
    n = max(4, int(round(budget ** (1.0 / E.dimension))))
    if coarse:
        n = max(4, n // 2)
    gE = voxelize(E, cells_per_axis=n, box=(lo, hi))
    gF = voxelize(F, cells_per_axis=n, box=(lo, hi))
    return gE.occupancy, gF.occupancy, gE.origin, gE.spacing, (lo, hi)


def _generic_tensor_double(E, F, g, spec, budget) -> IntegralEstimate:
    def value_at(coarse):
        gE = _as_grid(E, budget, coarse=coarse)
        gF = _as_grid(F, budget, coarse=coarse)
        cE, cF = gE.cell_centers(), gF.cell_centers()
        scale = gE.spacing ** gE.dimension * gF.spacing ** gF.dimension
        total = 0.0
        chunk = max(1, (1 << 22) // max(1, cF.shape[0]))
        for start in range(0, cE.shape[0], chunk):
            xs = cE[start : start + chunk]
            xx = np.repeat(xs, cF.shape[0], axis=0)
            yy = np.tile(cF, (xs.shape[0], 1))
            total += float(np.sum(g(xx, yy)))
        return total * scale, cE.shape[0] + cF.shape[0]

    value, cells = value_at(False)
    value2, _ = value_at(True)
    return IntegralEstimate(
        value,
        abs(value - value2),
        cells,
        "tensor-midpoint",
        spec.seed,
        "generic integrand: midpoint rule without near-diagonal refinement",
    )


def complement_double_integral(
    E: Shape, kernel: KernelSpec, spec: QuadratureSpec, box=None
) -> IntegralEstimate:
    """Estimate the pair integral of K(x - y) over E x (complement of E).

    The near part runs over E x (box minus E) for a padded bounding box;
    the remainder is the exact directional tail: for each cell center (or
    sample point) the kernel mass outside the box is integrated over a
    direction grid using the closed-form radial tail from the ray-box exit
    distance.  Passing ``box`` pins the padded box, which makes sums over
    related shapes cancel exactly in decomposition identities.
    """
    N = E.dimension
    if geometry.is_empty(E):
        return IntegralEstimate(0.0, 0.0, 0, spec.method, spec.seed)
    igd = kernel_integrand(kernel)
    if igd.dimension != N:
        raise ParameterError("kernel dimension does not match the shape")
    lo, hi = E.bounding_box()
    diam = float(np.linalg.norm(hi - lo))
    if box is None:
        pad = spec.padding * diam
        box = (lo - pad, hi + pad)

    if spec.method == "monte-carlo":
        return _mc_complement(E, igd, spec, box)

    budget = spec.resolved_budget(N)

    def tensor_value(coarse: bool):
        grid = _as_grid(E, budget, coarse=coarse)
        h = grid.spacing
        blo = grid.origin - np.ceil(np.clip(grid.origin - box[0], 0, None) / h - 1e-9) * h
        n_lo = np.rint((grid.origin - blo) / h).astype(int)
        n_hi = np.ceil(np.clip(box[1] - (grid.origin + np.array(grid.occupancy.shape) * h), 0, None) / h - 1e-9).astype(int)
        dims = tuple(np.array(grid.occupancy.shape) + n_lo + n_hi)
        occE = np.zeros(dims, dtype=bool)
        sl = tuple(
            slice(n_lo[i], n_lo[i] + grid.occupancy.shape[i]) for i in range(N)
        )
        occE[sl] = grid.occupancy
        occC = ~occE
        T = _stencil(dims, h, igd, spec.diagonal_rule)
        near = _fft_pair_sum(occE, occC, T)
        box_lo = blo
        box_hi = blo + np.array(dims) * h
        idx = np.argwhere(occE)
        centers = box_lo + (idx + 0.5) * h
        tails = _tail_per_cell(centers, box_lo, box_hi, igd, _TAIL_DIRECTIONS[N])
        tail_term = float(np.sum(tails)) * h ** N
        cells = int(np.count_nonzero(occE)) + int(np.prod(dims))
        return near + tail_term, tail_term, cells

    value, tail_term, cells = tensor_value(False)
    value2, _, _ = tensor_value(True)
    warn = None
    if tail_term > 0.2 * abs(value):
        warn = f"tail fraction {tail_term / value:.2f} exceeds 20%; increase padding"
    return IntegralEstimate(
        value, abs(value - value2), cells, "tensor-midpoint", spec.seed, warn
    )


def _mc_complement(E, igd, spec, box) -> IntegralEstimate:
    N = igd.dimension
    lo, hi = E.bounding_box()
    box_lo, box_hi = np.asarray(box[0], float), np.asarray(box[1], float)
    volE_box = float(np.prod(hi - lo))
    vol_box = float(np.prod(box_hi - box_lo))
    budget = spec.resolved_budget(N)
    per = max(1, budget // _NB_BATCHES)
    means = []
    tail_frac = 0.0
    for rng in _batch_rngs(spec.seed):
        x = rng.uniform(lo, hi, size=(per, N))
        y = rng.uniform(box_lo, box_hi, size=(per, N))
        in_e = geometry.indicator(E, x)
        keep = in_e & ~geometry.indicator(E, y)
        vals = np.where(keep, _safe_offset_eval(igd, y - x), 0.0)
        near = float(np.mean(vals)) * volE_box * vol_box
        tails = np.zeros(per)
        if np.any(in_e):
            tails[in_e] = _tail_per_cell(
                x[in_e], box_lo, box_hi, igd, _TAIL_DIRECTIONS[N]
            )
        tail = float(np.mean(tails)) * volE_box
        means.append(near + tail)
        tail_frac = max(tail_frac, tail / (near + tail) if near + tail > 0 else 0.0)
    value, err = _mc_combine(np.array(means))
    warn = None
    if 2.0 * igd.sigma >= N:
        warn = "heavy-tailed integrand; Monte Carlo stderr unreliable"
    elif tail_frac > 0.2:
        warn = f"tail fraction {tail_frac:.2f} exceeds 20%; increase padding"
    return IntegralEstimate(value, err, per * _NB_BATCHES, "monte-carlo", spec.seed, warn)


def sphere_average(f, N: int, spec: QuadratureSpec) -> IntegralEstimate:
    """Integral of f over the unit sphere (surface measure, not the mean).

    ``f`` is vectorized over direction arrays of shape (k, N).
    """
    if N not in (2, 3):
        raise ParameterError(f"sphere integrals support N in {{2, 3}}, got {N}")
    area = geometry.unit_sphere_area(N)
    if spec.method == "monte-carlo":
        budget = spec.resolved_budget(N)
        per = max(1, budget // _NB_BATCHES)
        means = []
        for rng in _batch_rngs(spec.seed):
            v = rng.standard_normal((per, N))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            means.append(float(np.mean(f(v))) * area)
        value, err = _mc_combine(np.array(means))
        return IntegralEstimate(value, err, per * _NB_BATCHES, "monte-carlo", spec.seed)
    count = spec.resolved_budget(N)
    count = max(16, min(count, 1 << 20))

    def value_at(m):
        dirs, w = _direction_grid(N, m)
        return float(np.sum(f(dirs) * w))

    value = value_at(count)
    value2 = value_at(max(8, count // 2))
    return IntegralEstimate(value, abs(value - value2), count, "tensor-midpoint", spec.seed)
