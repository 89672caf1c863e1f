"""Parametric competitor search against the single ball.

The single-ball energy is compared with split configurations: two (or a
chain of k) disjoint balls assembled through the exact decomposition
identities, so every term reduces to single-ball values plus pairwise
interactions.  The translated components drop their background attraction
(the A-term is carried by the component at the origin), mirroring how the
splitting argument treats the far piece; this only raises the reported
split energy, so positive margins are conservative evidence.

Also provided: a weak-subadditivity probe (the far-apart union of two
family minimizers is itself a family competitor) and a volume-preserving
annealing search on voxel grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import energy as energy_mod
from . import geometry, quadrature
from .energy import EnergyParams, EnergyReport
from .errors import ParameterError, PreconditionError
from .geometry import BallConfig, VoxelShape
from .quadrature import IntegralEstimate, QuadratureSpec

_DEFAULT_FRACTIONS = (0.25, 0.375, 0.5, 0.625, 0.75)
_DEFAULT_D_COUNT = 12
_D_MAX_FACTOR = 1e3
_FAR_FACTOR = 1e6


def _ball_radius(N: int, m: float) -> float:
    return (m / geometry.unit_ball_volume(N)) ** (1.0 / N)


@dataclass(frozen=True)
class TwoBallConfig:
    """Two disjoint balls of masses m1 (at the origin) and m2 (at distance
    d along the first axis)."""

    dimension: int
    m1: float
    m2: float
    d: float

    def __post_init__(self):
        if self.m1 <= 0 or self.m2 <= 0:
            raise ParameterError("masses must be positive")
        if self.d <= 0:
            raise ParameterError("separation must be positive")
        r1 = _ball_radius(self.dimension, self.m1)
        r2 = _ball_radius(self.dimension, self.m2)
        if self.d <= r1 + r2:
            raise PreconditionError(
                f"balls overlap: d = {self.d} <= r1 + r2 = {r1 + r2}"
            )

    @property
    def radii(self) -> Tuple[float, float]:
        return (
            _ball_radius(self.dimension, self.m1),
            _ball_radius(self.dimension, self.m2),
        )

    def shape(self) -> BallConfig:
        N = self.dimension
        r1, r2 = self.radii
        centers = np.zeros((2, N))
        centers[1, 0] = self.d
        return BallConfig(dimension=N, centers=centers, radii=np.array([r1, r2]))


def single_ball_energy(m: float, params: EnergyParams, spec: QuadratureSpec) -> EnergyReport:
    """Energy of the origin-centered ball of volume m."""
    if m <= 0:
        raise ParameterError(f"mass must be positive, got {m}")
    N = params.kernel.dimension
    return energy_mod.total_energy(geometry.ball_of_volume(N, m), params, spec)


def _pair_cross_terms(
    params: EnergyParams, N: int, c1, r1: float, c2, r2: float
) -> Tuple[float, float, float]:
    """(cross riesz, cross kernel, error) between two disjoint balls."""
    d = float(np.linalg.norm(np.asarray(c2, float) - np.asarray(c1, float)))
    if N == 3 and abs(params.alpha - 1.0) < 1e-12:
        cross_r = geometry.unit_ball_volume(3) ** 2 * (r1 * r2) ** 3 / d
        err_r = 0.0
    else:
        cross_r = energy_mod._ball_pair_interaction(params.alpha, N, c1, r1, c2, r2)
        err_r = abs(
            cross_r - energy_mod._ball_pair_interaction(params.alpha, N, c1, r1, c2, r2, n=48)
        )
    cross_k = energy_mod._ball_pair_interaction(params.kernel, N, c1, r1, c2, r2)
    err_k = abs(
        cross_k - energy_mod._ball_pair_interaction(params.kernel, N, c1, r1, c2, r2, n=48)
    )
    return cross_r, cross_k, err_r + 2.0 * err_k


def _multi_ball_energy(
    entries: Sequence[Tuple[np.ndarray, float]],
    params: EnergyParams,
    spec: QuadratureSpec,
    a_indices: Sequence[int],
) -> Tuple[EnergyReport, float]:
    """Assemble the energy of a disjoint union of balls from single-ball
    terms and pairwise interactions.  Only the balls listed in
    ``a_indices`` contribute background attraction.  Returns the report
    and the total cross riesz term (used by the far-separation bound)."""
    N = params.kernel.dimension
    k = len(entries)
    for i in range(k):
        for j in range(i + 1, k):
            d = float(np.linalg.norm(entries[j][0] - entries[i][0]))
            if d <= entries[i][1] + entries[j][1]:
                raise PreconditionError("balls overlap in the composite configuration")
    p_total = v_total = r_total = 0.0
    p_err = v_err = r_err = 0.0
    for i, (c, r) in enumerate(entries):
        p = energy_mod._single_ball_perimeter(params.kernel, r)
        p_half = energy_mod._single_ball_perimeter(params.kernel, r, n=96)
        v = energy_mod._ball_self_riesz(N, params.alpha, r)
        p_total += p
        p_err += abs(p - p_half)
        v_total += v
        if i in a_indices:
            b = energy_mod._ball_background(N, params.beta, c, r)
            b_half = energy_mod._ball_background(N, params.beta, c, r, n=256)
            r_total += b
            r_err += abs(b - b_half)
    cross_r_total = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            cr, ck, err = _pair_cross_terms(
                params, N, entries[i][0], entries[i][1], entries[j][0], entries[j][1]
            )
            v_total += cr
            cross_r_total += cr
            p_total -= 2.0 * ck
            v_err += err
    total = p_total + v_total - params.A * r_total
    err = p_err + v_err + params.A * r_err
    report = EnergyReport(
        perimeter=IntegralEstimate(p_total, p_err, 0, "radial-reduction", spec.seed),
        riesz=IntegralEstimate(v_total, v_err, 0, "radial-reduction", spec.seed),
        background=IntegralEstimate(r_total, r_err, 0, "radial-reduction", spec.seed),
        total=total,
        error=err,
        params=params,
    )
    return report, cross_r_total


def two_ball_energy(cfg: TwoBallConfig, params: EnergyParams, spec: QuadratureSpec) -> EnergyReport:
    """Energy of the two-ball configuration; the origin ball carries the
    background term.  When the set distance is at least d/2 the cross
    riesz term is checked against the far-separation bound 2 m1 m2 / d."""
    N = params.kernel.dimension
    if cfg.dimension != N:
        raise ParameterError("configuration dimension does not match the kernel")
    r1, r2 = cfg.radii
    entries = [
        (np.zeros(N), r1),
        (np.array([cfg.d] + [0.0] * (N - 1)), r2),
    ]
    report, cross_r = _multi_ball_energy(entries, params, spec, a_indices=(0,))
    set_distance = cfg.d - r1 - r2
    if set_distance >= 0.5 * cfg.d:
        bound = 2.0 * cfg.m1 * cfg.m2 / cfg.d
        assert cross_r <= bound * (1.0 + 1e-9) + 3.0 * report.error, (
            f"cross riesz {cross_r} exceeds the far-separation bound {bound}"
        )
    return report


@dataclass(frozen=True)
class FamilySearchResult:
    """Best split found, the single-ball reference, and the search trace."""

    best_m1: float
    best_m2: float
    best_d: float
    best_energy: float
    reference_energy: float
    family_min: float
    margin: float
    error: float
    trace: List[dict]

    def as_record(self) -> dict:
        return {
            "best_m1": self.best_m1,
            "best_m2": self.best_m2,
            "best_d": self.best_d,
            "best_energy": self.best_energy,
            "reference_energy": self.reference_energy,
            "family_min": self.family_min,
            "margin": self.margin,
            "error": self.error,
        }


def split_advantage(
    m: float,
    params: EnergyParams,
    spec: QuadratureSpec,
    fractions: Optional[Sequence[float]] = None,
    d_count: int = _DEFAULT_D_COUNT,
    d_max_factor: float = _D_MAX_FACTOR,
    k: int = 2,
) -> FamilySearchResult:
    """Minimize the split-family energy over (m1, d) and compare with the
    single ball.  ``margin`` = reference - best split; a positive margin
    beyond error bars means splitting beats the ball.  Chains of k > 2
    equal balls join the family when requested."""
    if m <= 0:
        raise ParameterError(f"mass must be positive, got {m}")
    if k < 2:
        raise ParameterError(f"family needs at least 2 balls, got k = {k}")
    N = params.kernel.dimension
    ref = single_ball_energy(m, params, spec)
    diam = 2.0 * _ball_radius(N, m)
    fractions = tuple(fractions) if fractions is not None else _DEFAULT_FRACTIONS
    trace: List[dict] = []
    best = None

    def consider(m1, m2, d, total, err):
        nonlocal best
        entry = {"m1": m1, "m2": m2, "d": d, "total": total, "error": err}
        if best is None or total < best["total"]:
            best = entry
        entry["best_so_far"] = best["total"]
        trace.append(entry)

    for f in fractions:
        m1 = f * m
        m2 = (1.0 - f) * m
        if m1 <= 0 or m2 <= 0:
            continue
        touching = _ball_radius(N, m1) + _ball_radius(N, m2)
        d_grid = np.geomspace(1.02 * touching, d_max_factor * diam, d_count)
        for d in d_grid:
            cfg = TwoBallConfig(dimension=N, m1=m1, m2=m2, d=float(d))
            rep = two_ball_energy(cfg, params, spec)
            consider(m1, m2, float(d), rep.total, rep.error)
    for kk in range(3, k + 1):
        mk = m / kk
        touching = 2.0 * _ball_radius(N, mk)
        d_grid = np.geomspace(1.02 * touching, d_max_factor * diam, d_count)
        for d in d_grid:
            entries = [
                (np.array([i * float(d)] + [0.0] * (N - 1)), _ball_radius(N, mk))
                for i in range(kk)
            ]
            rep, _ = _multi_ball_energy(entries, params, spec, a_indices=(0,))
            consider(mk, m - mk, float(d), rep.total, rep.error)
    family_min = min(ref.total, best["total"])
    return FamilySearchResult(
        best_m1=best["m1"],
        best_m2=best["m2"],
        best_d=best["d"],
        best_energy=best["total"],
        reference_energy=ref.total,
        family_min=family_min,
        margin=ref.total - best["total"],
        error=ref.error + best["error"],
        trace=trace,
    )


@dataclass(frozen=True)
class SubadditivityProbe:
    """familyMin(m1+m2) compared against familyMin_A(m1) + familyMin_0(m2).

    Floats coerce to the residual; nonpositive residual (within error)
    reproduces the weak subadditivity of the infimum."""

    residual: float
    combined_error: float
    family_min_sum: float
    family_min_1: float
    family_min_2: float

    def __float__(self) -> float:
        return self.residual


def _best_entries(m: float, params: EnergyParams, spec: QuadratureSpec, result: FamilySearchResult):
    """Ball layout realizing a family minimum."""
    N = params.kernel.dimension
    if result.family_min >= result.reference_energy:
        return [(np.zeros(N), _ball_radius(N, m))]
    return [
        (np.zeros(N), _ball_radius(N, result.best_m1)),
        (
            np.array([result.best_d] + [0.0] * (N - 1)),
            _ball_radius(N, result.best_m2),
        ),
    ]


def weak_subadditivity_probe(
    m1: float, m2: float, params: EnergyParams, spec: QuadratureSpec
) -> SubadditivityProbe:
    """Probe familyMin(m1+m2) <= familyMin_A(m1) + familyMin_0(m2).

    The combined family explicitly contains the far-apart union of the two
    component minimizers (translated by 10^6 diameters), mirroring the
    construction that proves the inequality, so the residual can only be
    positive by the cross terms of that union.  Those inter-group cross
    terms quantify the distance to the infinite-separation limit and are
    computed exactly, so they are charged to ``combined_error`` alongside
    the quadrature errors.
    """
    if m1 <= 0 or m2 <= 0:
        raise ParameterError("masses must be positive")
    N = params.kernel.dimension
    params0 = replace(params, A=0.0)
    res1 = split_advantage(m1, params, spec)
    res2 = split_advantage(m2, params0, spec)

    extra = m1 / (m1 + m2)
    fractions = tuple(sorted(set(_DEFAULT_FRACTIONS) | {extra, 1.0 - extra}))
    fractions = tuple(f for f in fractions if 0.0 < f < 1.0)
    res_sum = split_advantage(m1 + m2, params, spec, fractions=fractions)

    entries1 = _best_entries(m1, params, spec, res1)
    entries2 = _best_entries(m2, params0, spec, res2)
    extent = max(float(c[0]) + r for c, r in entries1) + max(
        float(c[0]) + r for c, r in entries2
    )
    D = _FAR_FACTOR * max(extent, 2.0 * _ball_radius(N, m1 + m2))
    shift = np.zeros(N)
    shift[0] = D
    shifted2 = [(c + shift, r) for c, r in entries2]
    composite = entries1 + shifted2
    a_indices = tuple(range(len(entries1)))
    comp_report, _ = _multi_ball_energy(composite, params, spec, a_indices=a_indices)

    inter_gap = 0.0
    for c1, r1 in entries1:
        for c2, r2 in shifted2:
            cr, ck, _ = _pair_cross_terms(params, N, c1, r1, c2, r2)
            inter_gap += cr + 2.0 * ck

    family_min_sum = min(res_sum.family_min, comp_report.total)
    lhs = family_min_sum
    rhs = res1.family_min + res2.family_min
    err = res_sum.error + comp_report.error + res1.error + res2.error + inter_gap
    return SubadditivityProbe(
        residual=lhs - rhs,
        combined_error=err,
        family_min_sum=family_min_sum,
        family_min_1=res1.family_min,
        family_min_2=res2.family_min,
    )


# ---------------------------------------------------------------------------
# Voxel annealing


def _neighbor_masks(occ: np.ndarray):
    """Boundary masks: occupied cells touching empties, empty cells
    touching occupied (4-neighborhood)."""
    empty = ~occ
    touch_empty = np.zeros_like(occ)
    touch_occ = np.zeros_like(occ)
    for ax in range(occ.ndim):
        for shift in (1, -1):
            rolled = np.roll(occ, shift, axis=ax)
            edge = [slice(None)] * occ.ndim
            edge[ax] = 0 if shift == 1 else -1
            rolled[tuple(edge)] = False
            touch_occ |= rolled
            rolled_e = np.roll(empty, shift, axis=ax)
            rolled_e[tuple(edge)] = False
            touch_empty |= rolled_e
    return occ & touch_empty, empty & touch_occ


def voxel_local_search(
    E0: VoxelShape,
    params: EnergyParams,
    steps: int,
    t0: Optional[float] = None,
    ratio: float = 0.95,
    seed: int = 0,
    spec: Optional[QuadratureSpec] = None,
) -> Tuple[VoxelShape, List[dict]]:
    """Volume-preserving annealing on a voxel grid (N = 2).

    Each move removes one occupied boundary cell and adds one empty
    boundary cell (the occupied count never changes); acceptance follows
    the Metropolis rule with a geometric temperature schedule (ratio per
    epoch).  The energy model matches the grid engines: pair sums with
    the near-refined stencils, the exact directional tail outside the
    grid box for the perimeter, and exact origin-cell background.
    Returns the best shape seen and a per-epoch trace; deterministic for
    a fixed seed.
    """
    if E0.dimension != 2:
        raise ParameterError("the local search supports N = 2 voxel shapes")
    spec = spec or QuadratureSpec()
    if steps <= 0:
        return E0, []
    N = 2
    occ = E0.occupancy.copy()
    count = int(np.count_nonzero(occ))
    if count == 0 or count == occ.size:
        return E0, []
    dims = occ.shape
    h = E0.spacing
    igd_k = quadrature.kernel_integrand(params.kernel)
    igd_r = quadrature.riesz_integrand(N, params.alpha)
    T_k = quadrature._stencil(dims, h, igd_k, spec.diagonal_rule)
    T_r = quadrature._stencil(dims, h, igd_r, spec.diagonal_rule)
    t0_k = float(T_k[tuple(d - 1 for d in dims)])
    t0_r = float(T_r[tuple(d - 1 for d in dims)])

    box_lo = E0.origin
    box_hi = E0.origin + np.array(dims) * h
    all_idx = np.indices(dims).reshape(N, -1).T
    all_centers = box_lo + (all_idx + 0.5) * h
    tail = quadrature._tail_per_cell(
        all_centers, box_lo, box_hi, igd_k, quadrature._TAIL_DIRECTIONS[N]
    ).reshape(dims) * h ** N
    col_k = quadrature._pair_field(np.ones(dims, dtype=bool), T_k)
    a_field = col_k + tail

    r_cells = np.linalg.norm(all_centers, axis=1).reshape(dims)
    with np.errstate(divide="ignore"):
        b_field = np.where(r_cells > 0, r_cells ** (-params.beta), 0.0) * h ** N
    d_inf = np.max(np.abs(all_centers), axis=1).reshape(dims)
    sing = np.argwhere(d_inf <= 0.5 * h + 1e-12 * h)
    for cell in sing:
        cl = box_lo + cell * h
        if params.beta >= N:
            b_field[tuple(cell)] = 0.0
        elif params.beta != 0.0:
            b_field[tuple(cell)] = quadrature.point_singularity_cell_integral(
                cl, cl + h, np.zeros(N), params.beta, N
            )
        else:
            b_field[tuple(cell)] = h ** N
    lin = a_field - params.A * b_field

    phi_k = quadrature._pair_field(occ, T_k)
    phi_r = quadrature._pair_field(occ, T_r)
    s_k = float(np.sum(phi_k[occ]))
    s_r = float(np.sum(phi_r[occ]))

    def current_energy():
        return float(np.sum(lin[occ])) - s_k + 0.5 * s_r

    def window(cell):
        return tuple(
            slice(dims[ax] - 1 - cell[ax], 2 * dims[ax] - 1 - cell[ax])
            for ax in range(N)
        )

    rng = np.random.default_rng(seed)
    energy_now = current_energy()
    best_energy = energy_now
    best_occ = occ.copy()

    def propose():
        occ_b, emp_b = _neighbor_masks(occ)
        occ_list = np.argwhere(occ_b if np.any(occ_b) else occ)
        emp_list = np.argwhere(emp_b if np.any(emp_b) else ~occ)
        u = tuple(occ_list[rng.integers(len(occ_list))])
        v = tuple(emp_list[rng.integers(len(emp_list))])
        off = tuple(v[ax] - u[ax] + dims[ax] - 1 for ax in range(N))
        # moving a cell removes u's pair terms (including its diagonal T0)
        # and adds v's against E - {u}: dS = 2 phi(v) - 2 phi(u) - 2 T[v-u] + 2 T0
        d_sk = 2.0 * (float(phi_k[v]) - float(phi_k[u]) - float(T_k[off]) + t0_k)
        d_sr = 2.0 * (float(phi_r[v]) - float(phi_r[u]) - float(T_r[off]) + t0_r)
        delta = float(lin[v]) - float(lin[u]) - d_sk + 0.5 * d_sr
        return u, v, d_sk, d_sr, delta

    if t0 is None:
        probes = [abs(propose()[4]) for _ in range(16)]
        t0 = float(np.median(probes)) or 1e-6
    temperature = float(t0)
    epoch = max(64, count)
    trace: List[dict] = []
    accepted = 0
    for step in range(steps):
        u, v, d_sk, d_sr, delta = propose()
        if delta <= 0 or rng.random() < math.exp(-delta / max(temperature, 1e-300)):
            occ[u] = False
            occ[v] = True
            phi_k += T_k[window(v)]
            phi_k -= T_k[window(u)]
            phi_r += T_r[window(v)]
            phi_r -= T_r[window(u)]
            s_k += d_sk
            s_r += d_sr
            energy_now += delta
            accepted += 1
            if energy_now < best_energy:
                best_energy = energy_now
                best_occ = occ.copy()
        if (step + 1) % epoch == 0:
            trace.append(
                {
                    "step": step + 1,
                    "temperature": temperature,
                    "energy": energy_now,
                    "best_energy": best_energy,
                    "accept_rate": accepted / (step + 1),
                }
            )
            temperature *= ratio
    if not trace or trace[-1]["step"] != steps:
        trace.append(
            {
                "step": steps,
                "temperature": temperature,
                "energy": energy_now,
                "best_energy": best_energy,
                "accept_rate": accepted / steps,
            }
        )
    # guard against drift in the incrementally tracked pair sums
    phi_fresh = quadrature._pair_field(occ, T_r)
    s_fresh = float(np.sum(phi_fresh[occ]))
    assert abs(s_fresh - s_r) <= 1e-6 * (1.0 + abs(s_fresh)), "pair-sum drift"
    assert int(np.count_nonzero(occ)) == count, "volume constraint violated"
    best = VoxelShape(
        dimension=2, origin=E0.origin, spacing=E0.spacing, occupancy=best_occ
    )
    return best, trace
