"""Orbit-complexity estimators: Bowen packings/covers, coded-orbit Hamming
covers, witness-set separation checks and scale-normalized reports.

Conventions (fixed for reproducibility and so the packing/covering chain
S(2e) <= N(e) <= S(e) holds exactly, ties included):

  * candidates are grid midpoints scanned in row-major order;
  * a separated set keeps a candidate iff its Bowen distance to every kept
    point is >= eps;
  * a cover repeatedly opens a ball at the lowest-index uncovered candidate
    and removes candidates at Bowen distance < eps (open balls).

Greedy results are bounds, not extremal values: a separated count is a lower
bound for the maximal packing of the grid, a cover count an upper bound for
the minimal cover of the grid.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .diffeo import AbCSystem, Array, MapNode, as_points, mod1, orbit_batch, torus_dist
from .scaling import ScalingFamily, eval_log

_TIME_CHUNK = 64


class GridError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration and partitions


@dataclass(frozen=True)
class BowenConfig:
    n_time: int
    eps: float
    grid: int = 32
    points: Optional[Array] = None  # explicit candidate list overrides grid
    stride: int = 1

    def __post_init__(self):
        if self.n_time < 1:
            raise ValueError("n_time must be >= 1")
        if self.points is None and self.eps <= 2.0 / self.grid:
            raise GridError(
                f"grid {self.grid} too coarse for eps={self.eps}: need eps > 2/grid"
            )

    def candidates(self) -> Array:
        if self.points is not None:
            return as_points(self.points)
        return grid_candidates(self.grid)

    def times(self) -> list[int]:
        return list(range(0, self.n_time, self.stride))


def grid_candidates(g: int) -> Array:
    """Row-major midpoints of a g x g grid."""
    mids = (np.arange(g) + 0.5) / g
    ys, xs = np.meshgrid(mids, mids, indexing="ij")
    return np.stack([xs.ravel(), ys.ravel()], axis=-1)


@dataclass(frozen=True)
class GridPartition:
    """Cells [i/nx, (i+1)/nx) x [j/ny, (j+1)/ny), label = i * ny + j."""

    nx: int
    ny: int = 1

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_diameter(self) -> float:
        return max(1.0 / self.nx, 1.0 / self.ny)

    def labels(self, pts: Array) -> Array:
        x = mod1(np.asarray(pts[..., 0], dtype=float))
        y = mod1(np.asarray(pts[..., 1], dtype=float))
        i = np.minimum((x * self.nx).astype(np.int64), self.nx - 1)
        j = np.minimum((y * self.ny).astype(np.int64), self.ny - 1)
        return i * self.ny + j


@dataclass(frozen=True)
class PushforwardPartition:
    """Image of a grid partition under a map: label(x) = base(node^{-1}(x))."""

    base: GridPartition
    node: MapNode

    @property
    def n_cells(self) -> int:
        return self.base.n_cells

    @property
    def cell_diameter(self) -> float:
        return self.base.cell_diameter  # of the base cells; images may differ

    def labels(self, pts: Array) -> Array:
        return self.base.labels(self.node.inverse(np.asarray(pts, dtype=float)))


Partition = Union[GridPartition, PushforwardPartition]


# ---------------------------------------------------------------------------
# Bowen metric and greedy packing/cover


def bowen_dist(sys: AbCSystem, x, y, n_time: int) -> float:
    """max over 0 <= i < n_time of the torus sup-distance of the orbits."""
    pts = np.stack([as_points(x)[0], as_points(y)[0]])
    orb = orbit_batch(sys, pts, range(n_time))
    return float(np.max(torus_dist(orb[:, 0, :], orb[:, 1, :])))


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SLOWTORUS_THREADS", "1")))
    except ValueError:
        return 1


def orbit_array(sys: AbCSystem, candidates: Array, times: Sequence[int]) -> Array:
    """(T, N, 2) orbit positions of all candidates.

    Candidates are independent, so the work splits over SLOWTORUS_THREADS
    workers; chunks are reassembled in candidate order, keeping the result
    identical for any thread count.
    """
    workers = _worker_count()
    n = len(candidates)
    if workers <= 1 or n < 4 * workers:
        return orbit_batch(sys, candidates, times)
    bounds = np.linspace(0, n, workers + 1).astype(int)
    chunks = [candidates[a:b] for a, b in zip(bounds, bounds[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda c: orbit_batch(sys, c, times), chunks))
    return np.concatenate(parts, axis=1)


def _dist_to_center(orbits: Array, c: int, idxs: Array, eps: float) -> Array:
    """Bowen distance from candidate c to candidates idxs, with early drop of
    candidates that already exceed eps (their exact value is not needed)."""
    T = orbits.shape[0]
    d = np.zeros(len(idxs))
    alive = np.ones(len(idxs), dtype=bool)
    for t0 in range(0, T, _TIME_CHUNK):
        t1 = min(t0 + _TIME_CHUNK, T)
        if not np.any(alive):
            break
        seg = torus_dist(orbits[t0:t1, idxs[alive], :], orbits[t0:t1, c : c + 1, :])
        d[alive] = np.maximum(d[alive], seg.max(axis=0))
        alive &= d < eps
    return d


def greedy_centers(orbits: Array, eps: float) -> list[int]:
    """Maximal eps-separated subset scanned in candidate order.

    The same set read as ball centers is a cover of the candidates with open
    eps-balls, so its size is simultaneously a lower bound for the maximal
    packing and an upper bound for the minimal cover of the grid.
    """
    N = orbits.shape[1]
    excluded = np.zeros(N, dtype=bool)
    kept: list[int] = []
    idx_all = np.arange(N)
    for c in range(N):
        if excluded[c]:
            continue
        kept.append(c)
        rest = idx_all[~excluded]
        d = _dist_to_center(orbits, c, rest, eps)
        excluded[rest[d < eps]] = True
    return kept


@dataclass(frozen=True)
class SeparatedResult:
    count: int
    witnesses: Array  # (count, 2) candidate points


def max_separated(sys: AbCSystem, cfg: BowenConfig) -> SeparatedResult:
    """Greedy Bowen packing over the candidate grid (lower bound for S)."""
    cands = cfg.candidates()
    orbits = orbit_array(sys, cands, cfg.times())
    kept = greedy_centers(orbits, cfg.eps)
    return SeparatedResult(count=len(kept), witnesses=cands[kept])


def min_cover(sys: AbCSystem, cfg: BowenConfig) -> int:
    """Greedy Bowen cover of the candidate grid (upper bound for N)."""
    cands = cfg.candidates()
    orbits = orbit_array(sys, cands, cfg.times())
    return len(greedy_centers(orbits, cfg.eps))


def pairwise_bowen(orbits: Array) -> Array:
    """(N, N) matrix of Bowen distances (small candidate sets only)."""
    T, N, _ = orbits.shape
    # keep the (chunk, N, N, 2) intermediates under ~100 MB
    chunk = max(1, min(_TIME_CHUNK, int(6e6 / max(N * N, 1))))
    out = np.zeros((N, N))
    for t0 in range(0, T, chunk):
        t1 = min(t0 + chunk, T)
        seg = orbits[t0:t1]
        d = torus_dist(seg[:, :, None, :], seg[:, None, :, :])
        out = np.maximum(out, d.max(axis=0))
    return out


# ---------------------------------------------------------------------------
# witness sets for the untwisted construction


@dataclass(frozen=True)
class WitnessReport:
    count: int
    expected_count: int
    points: Array
    images: Array
    horizon: int
    eps: float
    all_separated: bool
    min_pair_separation: float
    failures: tuple[tuple[int, int, float], ...]  # (i, j, distance)
    partial: bool = False  # horizon truncated by the compute budget


def witness_set(stage_q: int, stage_eps: float, eps: float, i0: int = 0) -> Array:
    """The explicit separated-set candidates for the untwisted stage:
    x-offsets i0/q + 2*j*eps_n/q^2 (j < q/2) on levels 3/8 + k*eps
    (0 <= k <= floor(1/(4*eps)))."""
    q = stage_q
    js = np.arange(q // 2)
    xs = (i0 / q + 2.0 * js * stage_eps / (q * q)) % 1.0
    levels = [3.0 / 8.0 + k * eps for k in range(int(math.floor(1.0 / (4.0 * eps))) + 1)]
    pts = [(x, y) for y in levels for x in xs]
    return np.array(pts, dtype=float)


def witness_untwisted(
    sys: AbCSystem,
    eps: float,
    i0: int = 0,
    max_horizon: Optional[int] = None,
    max_points: int = 512,
) -> WitnessReport:
    """Check the untwisted witness set is (q_next, eps)-Bowen separated.

    The set is pushed through the conjugation stack; orbit enumeration is
    exact in the rotation coordinate, so the pairwise worst separations are
    sharp.  A horizon larger than max_horizon, or a witness set larger than
    max_points (pair enumeration is quadratic), is truncated and the report
    flagged partial.
    """
    st = sys.stage
    horizon = sys.q_next
    partial = False
    if max_horizon is not None and horizon > max_horizon:
        horizon = max_horizon
        partial = True
    base = witness_set(st.q, float(st.eps), eps, i0=i0)
    expected = (st.q // 2) * (int(math.floor(1.0 / (4.0 * eps))) + 1)
    if len(base) > max_points:
        base = base[:max_points]
        partial = True
    fracs = sys.rotation_fracs(range(horizon))
    from .diffeo import orbit_images

    orbs = orbit_images(sys.H, base, fracs)
    dmat = pairwise_bowen(orbs)
    n = base.shape[0]
    iu = np.triu_indices(n, k=1)
    pair_min = dmat[iu]
    failures = []
    for i, j, d in zip(iu[0], iu[1], pair_min):
        if d < eps:
            failures.append((int(i), int(j), float(d)))
    images = sys.H.forward(base)
    return WitnessReport(
        count=n,
        expected_count=expected,
        points=base,
        images=images,
        horizon=horizon,
        eps=eps,
        all_separated=not failures,
        min_pair_separation=float(pair_min.min()) if pair_min.size else math.inf,
        failures=tuple(failures),
        partial=partial,
    )


# ---------------------------------------------------------------------------
# coded orbits and Hamming covers


def code_orbit(sys: AbCSystem, part: Partition, x, n_time: int) -> Array:
    """Cell labels along the orbit of x."""
    orb = orbit_batch(sys, as_points(x), range(n_time))
    return part.labels(orb[:, 0, :])


def code_orbits(sys: AbCSystem, part: Partition, pts: Array, n_time: int) -> Array:
    """(n_samples, n_time) label words for many starting points."""
    pts = as_points(pts)
    fracs = sys.rotation_fracs(range(n_time))
    u = sys.H.inverse(pts)
    out = np.empty((pts.shape[0], n_time), dtype=np.int64)
    cur = np.empty_like(u)
    for i, fr in enumerate(fracs):
        cur[:, 0] = mod1(u[:, 0] + fr)
        cur[:, 1] = u[:, 1]
        out[:, i] = part.labels(sys.H.forward(cur))
    return out


@dataclass(frozen=True)
class HammingCoverResult:
    count: int
    covered_fraction: float
    sample_size: int
    seed: int


def hamming_cover(
    sys: AbCSystem,
    part: Partition,
    n_time: int,
    eps: float,
    sample_size: int,
    seed: int,
) -> HammingCoverResult:
    """Greedy covering of coded sample orbits by Hamming balls of radius eps
    until at least a (1 - eps) fraction of the samples is covered; the ball
    count estimates the minimal Hamming cover of that measure."""
    if sample_size < 100.0 / eps:
        raise ValueError("sample_size must be >= 100/eps")
    rng = np.random.Generator(np.random.Philox(seed))
    pts = rng.random((sample_size, 2))
    words = code_orbits(sys, part, pts, n_time)
    covered = np.zeros(sample_size, dtype=bool)
    need = (1.0 - eps) * sample_size
    count = 0
    for c in range(sample_size):
        if covered.sum() >= need:
            break
        if covered[c]:
            continue
        d = np.mean(words != words[c], axis=1)
        covered |= d < eps
        count += 1
    return HammingCoverResult(
        count=count,
        covered_fraction=float(covered.mean()),
        sample_size=sample_size,
        seed=seed,
    )


def hamming_word_dist(w1: Array, w2: Array) -> float:
    return float(np.mean(np.asarray(w1) != np.asarray(w2)))


# ---------------------------------------------------------------------------
# stage-to-stage checks


@dataclass(frozen=True)
class SandwichResult:
    ok: bool
    n_coarse_4eps: int
    n_fine_2eps: int
    n_coarse_eps: int
    sep_fine_eps: int
    sep_coarse_2eps: int
    upgrade_ok: bool


def sandwich_check(
    sys_n: AbCSystem,
    sys_next: AbCSystem,
    m: int,
    eps: float,
    grid: int = 32,
) -> SandwichResult:
    """Covers on a common grid and horizon: the one-stage-deeper system is
    squeezed between covers of the current stage at doubled and halved radii,
    and its separated count dominates the current stage's at doubled radius."""
    cands = grid_candidates(grid)
    times = list(range(m))
    orb_n = orbit_array(sys_n, cands, times)
    orb_next = orbit_array(sys_next, cands, times)
    n4 = len(greedy_centers(orb_n, 4 * eps))
    n2 = len(greedy_centers(orb_next, 2 * eps))
    n1 = len(greedy_centers(orb_n, eps))
    s_fine = len(greedy_centers(orb_next, eps))
    s_coarse = len(greedy_centers(orb_n, 2 * eps))
    return SandwichResult(
        ok=(n4 <= n2 <= n1),
        n_coarse_4eps=n4,
        n_fine_2eps=n2,
        n_coarse_eps=n1,
        sep_fine_eps=s_fine,
        sep_coarse_2eps=s_coarse,
        upgrade_ok=(s_fine >= s_coarse),
    )


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class CountRecord:
    stage: int
    q: int
    horizon: int
    eps: float
    count_kind: str  # "separated" | "cover" | "hamming"
    count: int


@dataclass(frozen=True)
class RatioRow:
    stage: int
    horizon: int
    eps: float
    count_kind: str
    count: int
    family: str
    t: float
    log_ratio: float


@dataclass(frozen=True)
class ComplexityReport:
    records: tuple[CountRecord, ...]
    rows: tuple[RatioRow, ...]
    trend: dict  # (family_label, t) -> "increasing" | "decreasing" | "flat"

    def csv_lines(self) -> list[str]:
        out = ["stage,horizon,eps,count_kind,count,family,t,log_ratio"]
        for r in self.rows:
            out.append(
                f"{r.stage},{r.horizon},{r.eps!r},{r.count_kind},{r.count},"
                f"{r.family},{r.t!r},{r.log_ratio!r}"
            )
        return out


def slow_entropy_report(
    records: Sequence[CountRecord],
    families: Sequence[tuple[ScalingFamily, Sequence[float]]],
) -> ComplexityReport:
    """Normalize counts by a_m(t) in log-space and flag tail directions.

    An increasing tail of count/a_m(t) over the stages is evidence the slow
    entropy is >= t at that scale; a decreasing tail, <= t.
    """
    if len(records) < 2:
        raise ValueError("need at least two stage records")
    rows: list[RatioRow] = []
    trend: dict = {}
    ordered = sorted(records, key=lambda r: (r.count_kind, r.stage, r.horizon))
    for fam, ts in families:
        for t in ts:
            per_kind: dict = {}
            for rec in ordered:
                if rec.horizon < 2:
                    continue  # scale families need m > 1; static counts skipped
                lr = math.log(max(rec.count, 1)) - eval_log(fam, rec.horizon, t)
                rows.append(
                    RatioRow(
                        stage=rec.stage,
                        horizon=rec.horizon,
                        eps=rec.eps,
                        count_kind=rec.count_kind,
                        count=rec.count,
                        family=fam.label(),
                        t=t,
                        log_ratio=lr,
                    )
                )
                per_kind.setdefault(rec.count_kind, []).append(lr)
            for kind, seq in per_kind.items():
                if len(seq) >= 2:
                    d = seq[-1] - seq[-2]
                    direction = "increasing" if d > 0 else ("decreasing" if d < 0 else "flat")
                    trend[(fam.label(), t, kind)] = direction
    # packing/covering consistency across shared (stage, horizon) pairs
    _assert_packing_chain(records)
    return ComplexityReport(records=tuple(records), rows=tuple(rows), trend=trend)


def _assert_packing_chain(records: Sequence[CountRecord]) -> None:
    by_key: dict = {}
    for r in records:
        by_key[(r.stage, r.horizon, r.count_kind, r.eps)] = r.count
    for (stage, horizon, kind, eps), count in by_key.items():
        if kind != "separated":
            continue
        cover_same = by_key.get((stage, horizon, "cover", eps))
        if cover_same is not None and count > cover_same:
            raise AssertionError(
                f"packing/covering violated at stage {stage}, horizon {horizon}: "
                f"separated({eps}) = {count} > cover({eps}) = {cover_same}"
            )
        cover_half = by_key.get((stage, horizon, "cover", eps / 2))
        if cover_half is not None and count > cover_half:
            raise AssertionError(
                f"packing/covering violated at stage {stage}, horizon {horizon}: "
                f"separated({eps}) = {count} > cover({eps / 2}) = {cover_half}"
            )
