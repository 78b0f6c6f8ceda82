"""Coding-word selections with exact symbol uniformity and sliding Hamming
separation.

A selection is N words of length k over an alphabet of size s (s | k).  Words
are drawn uniformly, repaired to exact uniformity (surplus symbols removed at
random positions, deficits refilled left-to-right in symbol order), then
verified exhaustively: for every ordered pair and every shift t < (1-eps)*k
(t >= 1 when a word is compared against itself) the normalized Hamming
distance over the overlap must reach 1 - 1/s - eps*s.  Verification is
exhaustive, never probabilistic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

Array = np.ndarray


class SelectionError(RuntimeError):
    """Retry budget exhausted; carries the worst offending pair and shift."""

    def __init__(self, message: str, report: Optional["SelectionReport"] = None):
        super().__init__(message)
        self.report = report


def separation_threshold(s: int, eps: float) -> float:
    return 1.0 - 1.0 / s - eps * s


def hamming_shift(w: Sequence[int], w2: Sequence[int], t: int) -> float:
    """Normalized Hamming distance between w and w2 slid left by t.

    Compares w[i] against w2[i + t] over the overlap of length k - t.
    """
    a = np.asarray(w)
    b = np.asarray(w2)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("words must be 1-d and of equal length")
    k = a.shape[0]
    if not (0 <= t < k):
        raise ValueError(f"shift must satisfy 0 <= t < {k}")
    if t == 0:
        return float(np.mean(a != b))
    return float(np.mean(a[: k - t] != b[t:]))


@dataclass(frozen=True)
class WordSelection:
    alphabet_size: int
    k: int
    eps: float
    words: Array  # (N, k) uint8/uint16
    seed: int
    verified: bool

    def __post_init__(self):
        if self.alphabet_size < 2:
            raise ValueError("alphabet must have at least 2 symbols")
        if self.k % self.alphabet_size != 0:
            raise ValueError("word length must be a multiple of the alphabet size")

    @property
    def n_words(self) -> int:
        return self.words.shape[0]

    def to_text(self) -> str:
        lines = [
            f"{self.alphabet_size} {self.k} {self.n_words} {self.eps!r} {self.seed}"
        ]
        for row in self.words:
            lines.append("".join(np.base_repr(int(c), 36).lower() for c in row))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str, verify: bool = False) -> "WordSelection":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        s_, k_, n_, eps_, seed_ = lines[0].split()
        s, k, n, seed = int(s_), int(k_), int(n_), int(seed_)
        words = np.array(
            [[int(c, 36) for c in ln.strip()] for ln in lines[1 : n + 1]],
            dtype=np.uint16,
        )
        if words.shape != (n, k):
            raise ValueError("selection body does not match its header")
        sel = WordSelection(
            alphabet_size=s, k=k, eps=float(eps_), words=words, seed=seed, verified=False
        )
        if verify:
            rep = verify_selection(sel)
            sel = WordSelection(
                alphabet_size=s,
                k=k,
                eps=float(eps_),
                words=words,
                seed=seed,
                verified=rep.passed,
            )
        return sel


@dataclass(frozen=True)
class SelectionReport:
    threshold: float
    uniform: bool
    min_pairwise_per_shift: Array  # (n_shifts,) inf where no pair exists
    min_self_sliding: float
    worst_pair: tuple[int, int, int, float]  # (i, j, t, distance)

    @property
    def min_pairwise(self) -> float:
        vals = self.min_pairwise_per_shift
        finite = vals[np.isfinite(vals)]
        return float(finite.min()) if finite.size else math.inf

    @property
    def passed(self) -> bool:
        return (
            self.uniform
            and self.min_pairwise >= self.threshold
            and self.min_self_sliding >= self.threshold
        )


def _one_hot(words: Array, s: int) -> Array:
    n, k = words.shape
    out = np.zeros((n, k, s), dtype=np.float32)
    rows = np.repeat(np.arange(n), k)
    cols = np.tile(np.arange(k), n)
    out[rows, cols, words.ravel()] = 1.0
    return out


def _match_counts(onehot: Array, t: int) -> Array:
    """matches[i, j] = #positions where word_i[p] == word_j[p + t]."""
    n, k, s = onehot.shape
    a = onehot[:, : k - t, :].reshape(n, -1)
    b = onehot[:, t:, :].reshape(n, -1)
    return a @ b.T


def verify_selection(sel: WordSelection, early_exit: bool = False) -> SelectionReport:
    """Exhaustive check of uniformity and all pair/shift separations.

    The report alone is enough to re-derive the verified flag.  With
    early_exit the scan stops at the first violated shift (the report then
    covers the shifts examined so far; min arrays keep inf past the stop).
    """
    s, k = sel.alphabet_size, sel.k
    words = np.asarray(sel.words)
    n = words.shape[0]
    thr = separation_threshold(s, sel.eps)
    target = k // s
    uniform = True
    for row in words:
        counts = np.bincount(row, minlength=s)
        if not np.all(counts == target):
            uniform = False
            break
    # pairwise shifts are strict (t < (1-eps)k); the self comparison also
    # covers the boundary shift t = (1-eps)k when it is an integer
    t_pair_end = math.ceil((1.0 - sel.eps) * k)  # exclusive
    t_self_last = math.floor((1.0 - sel.eps) * k)  # inclusive
    n_shifts = max(1, max(t_pair_end, t_self_last + 1))
    min_pair = np.full(n_shifts, np.inf)
    min_self = math.inf
    worst = (0, 0, 0, math.inf)
    onehot = _one_hot(words, s)
    off_diag = ~np.eye(n, dtype=bool)
    for t in range(min(n_shifts, k)):
        overlap = k - t
        matches = _match_counts(onehot, t)
        dist = 1.0 - matches / overlap
        if n > 1 and t < t_pair_end:
            dmin = float(dist[off_diag].min())
            min_pair[t] = dmin
            if dmin < worst[3]:
                i, j = divmod(int(np.argmin(np.where(off_diag, dist, np.inf))), n)
                worst = (i, j, t, dmin)
        if 1 <= t <= t_self_last:
            dself = float(np.min(np.diag(dist)))
            if dself < min_self:
                min_self = dself
                if dself < worst[3]:
                    i = int(np.argmin(np.diag(dist)))
                    worst = (i, i, t, dself)
        if early_exit and (
            (n > 1 and t < t_pair_end and min_pair[t] < thr)
            or (t >= 1 and min_self < thr)
        ):
            break
    return SelectionReport(
        threshold=thr,
        uniform=uniform,
        min_pairwise_per_shift=min_pair,
        min_self_sliding=min_self,
        worst_pair=worst,
    )


def _repair_uniform(word: Array, s: int, rng: np.random.Generator) -> Array:
    """Make every symbol appear exactly k/s times.

    Remove surplus occurrences at uniformly random positions, then fill the
    vacated slots left-to-right with the deficient symbols in symbol order.
    """
    k = word.shape[0]
    target = k // s
    out = word.copy()
    counts = np.bincount(out, minlength=s)
    vacated: list[int] = []
    for sym in range(s):
        extra = counts[sym] - target
        if extra > 0:
            positions = np.flatnonzero(out == sym)
            drop = rng.choice(positions, size=extra, replace=False)
            vacated.extend(int(i) for i in drop)
    vacated.sort()
    fill: list[int] = []
    for sym in range(s):
        deficit = target - counts[sym]
        if deficit > 0:
            fill.extend([sym] * deficit)
    for pos, sym in zip(vacated, fill):
        out[pos] = sym
    return out


# The concentration parameter from the selection argument; recorded for
# reproducibility of the sampling internals, not used as a rejection gate
# (desk-scale word lengths sit far below the regime where it binds).
def sampling_delta(eps: float) -> float:
    return eps * eps / 5.0


def sample_selection(
    s: int,
    k: int,
    n_words: int,
    eps: float,
    seed: int,
    max_rounds: int = 50,
) -> WordSelection:
    """Draw, repair and verify a selection; resample failing words.

    Deterministic given the seed (counter-based generator).  Raises
    SelectionError with the worst offending pair/shift when the retry budget
    is exhausted, which signals that k is below the feasibility threshold for
    these (s, eps).
    """
    if s < 2:
        raise ValueError("alphabet must have at least 2 symbols")
    if k % s != 0:
        raise ValueError("k must be a multiple of s")
    rng = np.random.Generator(np.random.Philox(seed))
    dtype = np.uint8 if s <= 256 else np.uint16

    def fresh(count: int) -> Array:
        raw = rng.integers(0, s, size=(count, k), dtype=np.uint16).astype(dtype)
        return np.stack([_repair_uniform(w, s, rng) for w in raw])

    words = fresh(n_words)
    report = None
    for _ in range(max_rounds):
        sel = WordSelection(
            alphabet_size=s, k=k, eps=eps, words=words, seed=seed, verified=False
        )
        report = verify_selection(sel)
        if report.passed:
            return WordSelection(
                alphabet_size=s, k=k, eps=eps, words=words, seed=seed, verified=True
            )
        bad = _failing_words(sel, report)
        words = words.copy()
        words[list(bad)] = fresh(len(bad))
    raise SelectionError(
        f"retry budget exhausted after {max_rounds} rounds; worst pair "
        f"(i={report.worst_pair[0]}, j={report.worst_pair[1]}, "
        f"t={report.worst_pair[2]}) at distance {report.worst_pair[3]:.4f} "
        f"< threshold {report.threshold:.4f}",
        report,
    )


def _failing_words(sel: WordSelection, report: SelectionReport) -> set[int]:
    """Indices of words involved in any separation violation."""
    s, k = sel.alphabet_size, sel.k
    thr = report.threshold
    onehot = _one_hot(np.asarray(sel.words), s)
    n = sel.words.shape[0]
    bad: set[int] = set()
    t_pair_end = math.ceil((1.0 - sel.eps) * k)
    t_self_last = math.floor((1.0 - sel.eps) * k)
    for t in range(min(k, max(t_pair_end, t_self_last + 1))):
        overlap = k - t
        dist = 1.0 - _match_counts(onehot, t) / overlap
        viol = dist < thr
        if t == 0 or t > t_self_last:
            np.fill_diagonal(viol, False)  # self comparison out of range
        if t >= t_pair_end:
            viol &= np.eye(n, dtype=bool)  # pairwise comparison out of range
        ii, jj = np.nonzero(viol)
        # resample the later word of each offending pair
        for i, j in zip(ii, jj):
            bad.add(int(max(i, j)))
    return bad or {0}


def assemble_W(theta: WordSelection, q: int) -> np.ndarray:
    """Concatenate the q words (length q each) and append the symbolwise
    +1 (mod s) shift of the concatenation: a word of length 2*q**2."""
    if theta.n_words != q:
        raise ValueError(f"selection must hold exactly q = {q} words")
    if theta.k != q:
        raise ValueError(f"each word must have length q = {q}")
    w_bar = np.asarray(theta.words).reshape(-1)
    w_tilde = (w_bar + 1) % theta.alphabet_size
    return np.concatenate([w_bar, w_tilde]).astype(np.int64)
