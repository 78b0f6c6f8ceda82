"""Desk-scale experiment builders.

Chains here use small custom multipliers so that finite-stage dynamics are
computable, running through exactly the same code paths as the exact growth
regimes.  Stage maps are only built once the stage denominator can carry the
construction (q >= 4 for the two-block twist); earlier stages contribute the
identity, which commutes with every rotation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .diffeo import (
    AbCSystem,
    Composite,
    MapNode,
    Rotation,
    build_ue_h,
    build_untwisted_h,
    build_wm_h,
)
from .params import CustomStep, ParamProfile, StageParams, build_chain
from .words import WordSelection, assemble_W, sample_selection

MIN_TWIST_Q = 4


def desk_profile(
    kl_schedule: Sequence[tuple[int, int, int]],
    q1: int = 2,
    relaxed_eps: Fraction = Fraction(1, 8),
) -> ParamProfile:
    """Custom relaxed-eps profile from explicit (k, l, l_prime) multipliers."""
    steps = tuple(CustomStep(k=k, l=l, l_prime=lp) for (k, l, lp) in kl_schedule)
    return ParamProfile(
        regime="custom", q1=q1, relax_eps=True, relaxed_eps=relaxed_eps, custom=steps
    )


# Stage-2 witness stage q_2 = 8, horizon q_3 = 4096, then one more stage.
UNTWISTED_DESK = desk_profile([(1, 2, 4), (1, 64, 8), (1, 1, 64), (1, 1, 64)])

# Vanishing-trend chain: q = 2, 4, 64, 262144 (horizons q_2, q_3 capped q_4).
VANISHING_DESK = desk_profile([(1, 1, 4), (1, 4, 8), (1, 64, 64), (1, 1, 64)])


def stage_map_untwisted(stage: StageParams) -> MapNode:
    if stage.q < MIN_TWIST_Q:
        return Rotation(Fraction(0))
    return build_untwisted_h(stage)


def default_ue_placement(stage: StageParams) -> tuple[int, int]:
    """Largest feasible (i1, s1) placement for the staircase shear."""
    eps = float(stage.eps)
    q = stage.q
    a = 2 * math.floor(1.0 / (3.0 * eps)) - 1
    lo = math.ceil(2.0 * eps * q)
    hi = q - lo
    s1 = 0
    while lo + a * (s1 + 1) * (s1 + 2) // 2 <= hi:
        s1 += 1
    if s1 < 1:
        raise ValueError(f"stage q={q}, eps={eps} cannot host any staircase block")
    return lo, s1


def stage_map_ue(stage: StageParams) -> MapNode:
    if stage.q < MIN_TWIST_Q:
        return Rotation(Fraction(0))
    i1, s1 = default_ue_placement(stage)
    return build_ue_h(stage, i1=i1, s1=s1)


def stage_map_wm(
    stage: StageParams,
    seed: int,
    word_eps: float = 0.25,
    sigma: Optional[float] = None,
    cap_tiles: int = 64,
) -> tuple[MapNode, WordSelection]:
    """Word-driven stage map; the word is assembled from a verified selection
    of q words of length q over the stage alphabet of size n^2 (word_eps is
    chosen large at desk scale so the separation threshold is attainable at
    short lengths)."""
    if stage.q < MIN_TWIST_Q:
        return Rotation(Fraction(0)), None
    s = stage.n * stage.n
    sel = sample_selection(s=s, k=stage.q, n_words=stage.q, eps=word_eps, seed=seed)
    word = assemble_W(sel, stage.q)
    return build_wm_h(stage, word, sigma=sigma, cap_tiles=cap_tiles), sel


@dataclass(frozen=True)
class BuiltChain:
    construction: str
    chain: tuple[StageParams, ...]
    stage_maps: tuple[MapNode, ...]  # aligned with chain
    selections: tuple[Optional[WordSelection], ...]

    def system(self, n: int) -> AbCSystem:
        """T_n = H_n o R_{alpha_{n+1}} o H_n^{-1} for stage n of the chain."""
        idx = next(i for i, st in enumerate(self.chain) if st.n == n)
        maps = tuple(
            m for m in self.stage_maps[: idx + 1] if not _is_identity(m)
        )
        H: MapNode = Composite(nodes=maps) if maps else Rotation(Fraction(0))
        stage = self.chain[idx]
        if idx + 1 < len(self.chain):
            alpha_next = self.chain[idx + 1].alpha
        else:
            alpha_next = stage.alpha + stage.beta
        return AbCSystem(H=H, alpha_next=alpha_next, stage=stage)


def _is_identity(node: MapNode) -> bool:
    return isinstance(node, Rotation) and node.alpha % 1 == 0


def build_systems(
    construction: str,
    profile: ParamProfile,
    n_max: int,
    seed: int = 0,
    word_eps: float = 0.25,
    sigma: Optional[float] = None,
    cap_tiles: int = 64,
) -> BuiltChain:
    """Chain plus per-stage conjugation maps for one construction."""
    chain = build_chain(profile, n_max)
    maps: list[MapNode] = []
    sels: list[Optional[WordSelection]] = []
    for st in chain:
        if construction == "untwisted":
            maps.append(stage_map_untwisted(st))
            sels.append(None)
        elif construction == "uniquely_ergodic":
            maps.append(stage_map_ue(st))
            sels.append(None)
        elif construction == "weak_mixing":
            m, sel = stage_map_wm(
                st, seed=seed + st.n, word_eps=word_eps, sigma=sigma, cap_tiles=cap_tiles
            )
            maps.append(m)
            sels.append(sel)
        else:
            raise ValueError(f"unknown construction {construction!r}")
    return BuiltChain(
        construction=construction,
        chain=tuple(chain),
        stage_maps=tuple(maps),
        selections=tuple(sels),
    )


def wm_desk_profile(q2: int) -> ParamProfile:
    """Chain reaching q_2 = q2 (a power of two times 2) with unit later steps."""
    if q2 % 4 != 0:
        raise ValueError("desk weak-mixing q2 must be divisible by 4")
    kl1 = q2 // 4
    return desk_profile([(1, kl1, 4), (1, 1, 8), (1, 1, 64)])
