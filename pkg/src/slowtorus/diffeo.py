"""Area-preserving torus primitives and their compositions.

Every map here acts on points of the unit torus represented as float arrays
of shape (..., 2) with coordinates in [0, 1).  All primitives are built from
three mechanisms, each exactly measure-preserving by construction:

  * the square twist: a quarter turn of an inner square that fades to the
    identity through a leaf-shift along square level sets (unit Jacobian on
    every leaf),
  * shears: translations along one coordinate by a smoothed staircase
    function of the other,
  * affine retilings: equivariant rescaling of a primitive into 1/q cells.

Conjugation stages compose these into a stack H = h_1 o ... o h_n; the
dynamical map is T = H o R_alpha o H^{-1} with the rotation coordinate
advanced in exact rational arithmetic.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .params import StageParams

Array = np.ndarray


class ConstructionError(ValueError):
    """A primitive cannot be built; the message names the violated constraint."""


# ---------------------------------------------------------------------------
# small numeric helpers


def mod1(a: Array) -> Array:
    return a - np.floor(a)


def as_points(p) -> Array:
    """Coerce a point or array of points to shape (n, 2) float64."""
    a = np.asarray(p, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.shape[-1] != 2:
        raise ValueError("points must have a trailing dimension of 2")
    return a


def torus_dist(p: Array, q: Array) -> Array:
    """Sup metric on the torus: max of coordinatewise circle distances."""
    d = np.abs(p - q)
    d = np.minimum(d, 1.0 - d)
    return np.max(d, axis=-1)


def circle_diff(a: Array, b: Array) -> Array:
    """Signed representative of a - b in [-1/2, 1/2)."""
    d = a - b
    return d - np.round(d)


def smoothstep(u: Array) -> Array:
    """Quintic smoothstep: 0 below 0, 1 above 1, C^2 in between."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


def ramp(u: Array) -> Array:
    """Increasing smooth ramp: 0 for u <= -1, 1 for u >= 1."""
    return smoothstep((np.asarray(u, dtype=float) + 1.0) * 0.5)


# ---------------------------------------------------------------------------
# the square twist


@dataclass(frozen=True)
class SquareTwist:
    """Quarter-turn of [0,1]^2 that is the identity near the boundary.

    Exact counterclockwise rotation by pi/2 about (1/2, 1/2) on
    [2*eps, 1-2*eps]^2, exact identity outside [eps, 1-eps]^2.  In the
    transition annulus each square level set {sup-distance from center = rho}
    is shifted along itself by a(rho) * 2*rho (a quarter of its perimeter
    8*rho, scaled by a smooth fade a), which preserves area leaf by leaf.
    """

    eps: float

    def __post_init__(self):
        if not (0.0 < self.eps < 0.25):
            raise ConstructionError(f"twist width must be in (0, 1/4), got {self.eps}")

    @property
    def r_rotate(self) -> float:
        return 0.5 - 2.0 * self.eps

    @property
    def r_identity(self) -> float:
        return 0.5 - self.eps

    # -- leaf coordinates -------------------------------------------------

    @staticmethod
    def _arclength(u: Array, v: Array, rho: Array) -> Array:
        """Position along the square leaf, counterclockwise from (rho, 0)."""
        right = u >= np.abs(v)
        top = v >= np.abs(u)
        left = -u >= np.abs(v)
        s_right = np.mod(v, 8.0 * rho)
        s_top = 2.0 * rho - u
        s_left = 4.0 * rho - v
        s_bottom = 6.0 * rho + u
        return np.select([right, top, left], [s_right, s_top, s_left], default=s_bottom)

    @staticmethod
    def _on_square(rho: Array, s: Array) -> tuple[Array, Array]:
        s = np.mod(s, 8.0 * rho)
        c1 = s < rho
        c2 = s < 3.0 * rho
        c3 = s < 5.0 * rho
        c4 = s < 7.0 * rho
        u = np.select([c1, c2, c3, c4], [rho, 2.0 * rho - s, -rho, s - 6.0 * rho], default=rho)
        v = np.select([c1, c2, c3, c4], [s, rho, 4.0 * rho - s, -rho], default=s - 8.0 * rho)
        return u, v

    def _fade(self, rho: Array) -> Array:
        return 1.0 - smoothstep((rho - self.r_rotate) / self.eps)

    # -- evaluation ---------------------------------------------------------

    def eval(self, pts: Array, inverse: bool = False) -> Array:
        pts = np.asarray(pts, dtype=float)
        x = pts[..., 0]
        y = pts[..., 1]
        u = x - 0.5
        v = y - 0.5
        rho = np.maximum(np.abs(u), np.abs(v))
        out = pts.copy()

        rotate = rho <= self.r_rotate
        if inverse:
            # clockwise: (u, v) -> (v, -u)
            out[..., 0] = np.where(rotate, y, out[..., 0])
            out[..., 1] = np.where(rotate, 1.0 - x, out[..., 1])
        else:
            # counterclockwise: (u, v) -> (-v, u)
            out[..., 0] = np.where(rotate, 1.0 - y, out[..., 0])
            out[..., 1] = np.where(rotate, x, out[..., 1])

        mid = (~rotate) & (rho < self.r_identity)
        if np.any(mid):
            um, vm, rm = u[mid], v[mid], rho[mid]
            s = self._arclength(um, vm, rm)
            shift = self._fade(rm) * 2.0 * rm
            s2 = s - shift if inverse else s + shift
            u2, v2 = self._on_square(rm, s2)
            res = out[mid]
            res[..., 0] = u2 + 0.5
            res[..., 1] = v2 + 0.5
            out[mid] = res
        return out

    def smoothness_margin(self, pts: Array) -> Array:
        """Distance to the nearest set where the map is not smooth.

        Accounts for the zone circles, the diagonals of the square (where
        the leaf coordinates kink), and the image's diagonals.
        """
        pts = np.asarray(pts, dtype=float)
        img = self.eval(pts)
        out = np.full(pts.shape[:-1], np.inf)
        for z in (pts, img):
            u = z[..., 0] - 0.5
            v = z[..., 1] - 0.5
            rho = np.maximum(np.abs(u), np.abs(v))
            diag = np.abs(np.abs(u) - np.abs(v)) / math.sqrt(2.0)
            out = np.minimum(out, diag)
            for radius in (self.r_rotate, self.r_identity):
                out = np.minimum(out, np.abs(rho - radius))
        return out


def square_twist_eval(tw: SquareTwist, p, inverse: bool = False) -> Array:
    """Apply the square twist to a point or point array of [0,1]^2."""
    a = as_points(p)
    res = tw.eval(a, inverse=inverse)
    return res[0] if np.asarray(p).ndim == 1 else res


# ---------------------------------------------------------------------------
# map nodes


class MapNode:
    """Immutable torus map with forward/inverse evaluation on point arrays."""

    kind: str = "abstract"

    def forward(self, pts: Array) -> Array:
        raise NotImplementedError

    def inverse(self, pts: Array) -> Array:
        raise NotImplementedError

    def apply(self, pts: Array, inverse: bool = False) -> Array:
        return self.inverse(pts) if inverse else self.forward(pts)

    def apply_point(self, p, inverse: bool = False) -> Array:
        return self.apply(as_points(p), inverse=inverse)[0]

    def smoothness_margin(self, pts: Array) -> Array:
        return np.full(np.asarray(pts).shape[:-1], np.inf)

    def params_dict(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params_dict()}

    def describe(self, indent: int = 0) -> str:
        pad = " " * indent
        items = ", ".join(f"{k}={v}" for k, v in self.params_dict().items())
        return f"{pad}{self.kind}({items})"

    def __repr__(self) -> str:
        return self.describe()


def _frac_str(fr: Fraction) -> str:
    return f"{fr.numerator}/{fr.denominator}"


def _parse_frac(s: str) -> Fraction:
    n, d = s.split("/")
    return Fraction(int(n), int(d))


@dataclass(frozen=True)
class Rotation(MapNode):
    """R_alpha(x, y) = (x + alpha, y)."""

    alpha: Fraction = Fraction(0)
    kind = "rotation"

    def forward(self, pts: Array) -> Array:
        out = np.array(pts, dtype=float, copy=True)
        out[..., 0] = mod1(out[..., 0] + float(self.alpha % 1))
        return out

    def inverse(self, pts: Array) -> Array:
        out = np.array(pts, dtype=float, copy=True)
        out[..., 0] = mod1(out[..., 0] - float(self.alpha % 1))
        return out

    def params_dict(self) -> dict:
        return {"alpha": _frac_str(self.alpha)}


def _tile_x(
    pts: Array,
    q: int,
    block: Callable[[Array, Array, bool], tuple[Array, Array]],
    inverse: bool,
) -> Array:
    """Apply a map of the cell [0, 1/q) x [0,1] equivariantly on the torus.

    ``block`` receives local coordinates (q*x mod 1, y) and must map the unit
    square to itself.
    """
    x = mod1(np.asarray(pts[..., 0], dtype=float))
    y = np.asarray(pts[..., 1], dtype=float)
    scaled = x * q
    cell = np.floor(scaled)
    cell = np.minimum(cell, q - 1)  # guard against x*q == q from rounding
    lx = scaled - cell
    bx, by = block(lx, y, inverse)
    out = np.empty(np.broadcast(x, y).shape + (2,), dtype=float)
    out[..., 0] = mod1((cell + bx) / q)
    out[..., 1] = mod1(by)
    return out


@dataclass(frozen=True)
class QuasiRotTiled(MapNode):
    """The square twist rescaled horizontally into q cells, equivariantly."""

    q: int
    eps: float
    kind = "quasi_rot_tiled"

    def __post_init__(self):
        if self.q < 1:
            raise ConstructionError("q must be >= 1")
        SquareTwist(self.eps)  # validates eps

    @property
    def twist(self) -> SquareTwist:
        return SquareTwist(self.eps)

    def _block(self, lx: Array, y: Array, inverse: bool) -> tuple[Array, Array]:
        loc = np.stack([lx, y], axis=-1)
        res = self.twist.eval(loc, inverse=inverse)
        return res[..., 0], res[..., 1]

    def forward(self, pts: Array) -> Array:
        return _tile_x(pts, self.q, self._block, False)

    def inverse(self, pts: Array) -> Array:
        return _tile_x(pts, self.q, self._block, True)

    def smoothness_margin(self, pts: Array) -> Array:
        x = mod1(np.asarray(pts[..., 0], dtype=float))
        y = np.asarray(pts[..., 1], dtype=float)
        scaled = x * self.q
        cell = np.minimum(np.floor(scaled), self.q - 1)
        loc = np.stack([scaled - cell, y], axis=-1)
        # local margins shrink by the cell rescale in the worst direction
        return self.twist.smoothness_margin(loc) / self.q

    def params_dict(self) -> dict:
        return {"q": self.q, "eps": self.eps}


def phi_q_eval(q: int, eps: float, p, inverse: bool = False) -> Array:
    """Evaluate the 1/q-rescaled twist at a point or point array."""
    node = QuasiRotTiled(q=q, eps=eps)
    a = as_points(p)
    res = node.apply(a, inverse=inverse)
    return res[0] if np.asarray(p).ndim == 1 else res


@dataclass(frozen=True)
class UntwistedH(MapNode):
    """Two consecutive block twists per 1/q cell.

    On each cell, a wide block of width 1/q - 1/q^2 and a narrow block of
    width 1/q^2 each carry a twist rescaled to the block, so the cell maps
    onto itself and the map commutes with R_{1/q}.  With
    ``literal_big_rescale`` the wide block uses the plain q rescale instead
    of its own width (for side-by-side comparison only: that variant does
    not map the block onto itself).
    """

    q: int
    eps: float
    literal_big_rescale: bool = False
    kind = "untwisted_h"

    def __post_init__(self):
        if self.q < 4:
            raise ConstructionError("untwisted stage needs q >= 4 (two-block split)")
        SquareTwist(self.eps)

    @property
    def twist(self) -> SquareTwist:
        return SquareTwist(self.eps)

    def _block(self, lx: Array, y: Array, inverse: bool) -> tuple[Array, Array]:
        # local cell coordinates: lx in [0, 1), cell width 1/q in x
        q = self.q
        w = 1.0 - 1.0 / q  # wide-block fraction of the cell
        big = lx < w
        bx = np.empty_like(lx)
        by = np.empty_like(y)
        tw = self.twist
        if np.any(big):
            scale = q / (q - 1.0) if not self.literal_big_rescale else 1.0
            # wide block rescaled onto the unit square
            X = lx[big] * scale if not self.literal_big_rescale else lx[big]
            loc = np.stack([X, np.broadcast_to(y, lx.shape)[big]], axis=-1)
            res = tw.eval(loc, inverse=inverse)
            bx[big] = res[..., 0] / scale if not self.literal_big_rescale else res[..., 0]
            by[big] = res[..., 1]
        small = ~big
        if np.any(small):
            X = (lx[small] - w) * q
            loc = np.stack([X, np.broadcast_to(y, lx.shape)[small]], axis=-1)
            res = tw.eval(loc, inverse=inverse)
            bx[small] = w + res[..., 0] / q
            by[small] = res[..., 1]
        return bx, by

    def forward(self, pts: Array) -> Array:
        return _tile_x(pts, self.q, self._block, False)

    def inverse(self, pts: Array) -> Array:
        return _tile_x(pts, self.q, self._block, True)

    def smoothness_margin(self, pts: Array) -> Array:
        q = self.q
        x = mod1(np.asarray(pts[..., 0], dtype=float))
        y = np.asarray(pts[..., 1], dtype=float)
        scaled = x * q
        cell = np.minimum(np.floor(scaled), q - 1)
        lx = scaled - cell
        w = 1.0 - 1.0 / q
        tw = self.twist
        big = lx < w
        out = np.empty_like(lx)
        if np.any(big):
            X = lx[big] * q / (q - 1.0)
            loc = np.stack([X, np.broadcast_to(y, lx.shape)[big]], axis=-1)
            out[big] = tw.smoothness_margin(loc) * (q - 1.0) / (q * q)
        if np.any(~big):
            X = (lx[~big] - w) * q
            loc = np.stack([X, np.broadcast_to(y, lx.shape)[~big]], axis=-1)
            out[~big] = tw.smoothness_margin(loc) / (q * q)
        # the block seam itself
        out = np.minimum(out, np.abs(lx - w) / q)
        return out

    def params_dict(self) -> dict:
        return {"q": self.q, "eps": self.eps, "literal_big_rescale": self.literal_big_rescale}

    def describe(self, indent: int = 0) -> str:
        pad = " " * indent
        q = self.q
        w = 1.0 / q - 1.0 / (q * q)
        return (
            f"{pad}untwisted_h(q={q}, eps={self.eps}): per 1/{q} cell, "
            f"wide twist on [0, {w:.6g}] and narrow twist on [{w:.6g}, {1.0 / q:.6g}]"
        )


def _staircase_profile(z: Array, centers: Array, signs: Array, width: float) -> Array:
    """Sum of +-ramps at the given centers, each of half-width ``width``.

    Closed form: ramps are disjoint (centers at least 2*width apart), so at
    most one is partially active at any z; the rest contribute 0 or 1.
    """
    z = np.asarray(z, dtype=float)
    total = np.zeros_like(z)
    # completed ramps: center <= z - width
    idx = np.searchsorted(centers, z - width, side="right")
    csum = np.concatenate([[0.0], np.cumsum(signs)])
    total += csum[idx]
    # at most one active ramp: the first center > z - width
    nearest = np.clip(idx, 0, len(centers) - 1)
    c = centers[nearest]
    active = np.abs(z - c) < width
    total = np.where(
        active & (idx < len(centers)),
        total + signs[nearest] * ramp((z - c) / width),
        total,
    )
    return total


@dataclass(frozen=True)
class VerticalStepShear(MapNode):
    """(x, y) -> (x, y + psi(x)) with psi a smoothed up-down staircase.

    psi has period 1/q.  Within a period, rescaled by q^2, it descends in
    steps of height 3*eps on plateaus of length s for s = 1..s1 consecutive
    staircases, and is zero outside; i1 positions the first staircase.  The
    plateau count per staircase is a = 2*floor(1/(3*eps)) - 1 and the ramps
    between plateaus have half-width eps.
    """

    q: int
    eps: float
    i1: int
    s1: int
    kind = "vertical_step_shear"

    def __post_init__(self):
        if not (0.0 < self.eps < 1.0 / 3.0):
            raise ConstructionError("step shear needs eps in (0, 1/3)")
        if self.s1 < 1:
            raise ConstructionError("s1 must be >= 1")
        lo = math.ceil(2.0 * self.eps * self.q)
        if self.i1 < lo:
            raise ConstructionError(
                f"placement violates i1 >= ceil(2*eps*q) = {lo} (got i1={self.i1})"
            )
        a = self.plateaus
        end = self.i1 + a * self.s1 * (self.s1 + 1) // 2
        hi = self.q - lo
        if end > hi:
            raise ConstructionError(
                f"placement violates i1 + a*s1*(s1+1)/2 <= q - ceil(2*eps*q) "
                f"= {hi} (got {end})"
            )

    @property
    def plateaus(self) -> int:
        return 2 * math.floor(1.0 / (3.0 * self.eps)) - 1

    def _psi_scaled(self, xi: Array) -> Array:
        """psi on the rescaled coordinate xi = q^2 * (x mod 1/q), xi in [0, q)."""
        a = self.plateaus
        b = math.floor(1.0 / (3.0 * self.eps))
        xi = np.asarray(xi, dtype=float)
        out = np.zeros_like(xi)
        start = float(self.i1)
        for s in range(1, self.s1 + 1):
            end = start + a * s
            inside = (xi >= start) & (xi < end)
            if np.any(inside):
                zeta = xi[inside] - start
                centers = np.array([i * s for i in range(1, a)], dtype=float)
                signs = np.array(
                    [-1.0 if i <= b - 1 else 1.0 for i in range(1, a)], dtype=float
                )
                out[inside] = 3.0 * self.eps * _staircase_profile(
                    zeta, centers, signs, self.eps
                )
            start = end
        return out

    def psi(self, x: Array) -> Array:
        x = mod1(np.asarray(x, dtype=float))
        frac = x * self.q
        frac = frac - np.floor(frac)
        return self._psi_scaled(frac * self.q)

    def forward(self, pts: Array) -> Array:
        out = np.array(pts, dtype=float, copy=True)
        out[..., 1] = mod1(out[..., 1] + self.psi(out[..., 0]))
        return out

    def inverse(self, pts: Array) -> Array:
        out = np.array(pts, dtype=float, copy=True)
        out[..., 1] = mod1(out[..., 1] - self.psi(out[..., 0]))
        return out

    def smoothness_margin(self, pts: Array) -> Array:
        # knots sit at plateau/ramp junctions: multiples of eps shifts around
        # centers; a cheap conservative bound is the distance to the nearest
        # ramp edge in the rescaled coordinate, divided by q^2.
        x = mod1(np.asarray(pts[..., 0], dtype=float))
        frac = x * self.q
        frac = frac - np.floor(frac)
        xi = frac * self.q
        a = self.plateaus
        margins = np.full(xi.shape, np.inf)
        start = float(self.i1)
        for s in range(1, self.s1 + 1):
            end = start + a * s
            for i in range(0, a + 1):
                c = start + i * s
                for edge in (c - self.eps, c + self.eps):
                    margins = np.minimum(margins, np.abs(xi - edge))
            start = end
        return margins / (self.q * self.q)

    def params_dict(self) -> dict:
        return {"q": self.q, "eps": self.eps, "i1": self.i1, "s1": self.s1}

    def describe(self, indent: int = 0) -> str:
        pad = " " * indent
        a = self.plateaus
        q2 = self.q * self.q
        spans = []
        start = self.i1
        for s in range(1, self.s1 + 1):
            end = start + a * s
            spans.append(f"steps of length {s} on [{start}/{q2}, {end}/{q2}]")
            start = end
        return (
            f"{pad}vertical_step_shear(q={self.q}, eps={self.eps}, {a} plateaus "
            f"of height {3 * self.eps:.6g}): " + "; ".join(spans)
        )


@dataclass(frozen=True)
class HorizontalStepShear(MapNode):
    """(x, y) -> (x + chi(y), y): strip i of height 1/a translates by b*i/a.

    chi is a smoothed staircase in y with a strips, plateau translation
    (b/a) * (#completed ramps); the ramp offset j0 (the least multiple of
    a/gcd... in practice of a/b-periodicity) makes the net translation near
    y in {0, 1} vanish mod 1, so the map is the identity there.  Commutes
    with every horizontal rotation.
    """

    a: int
    b: int
    eps: float
    kind = "horizontal_step_shear"

    def __post_init__(self):
        if self.a < 1 or self.b < 1:
            raise ConstructionError("shear needs a, b >= 1")
        if self.a % self.b != 0:
            raise ConstructionError("a must be a multiple of b (a = b * strips)")
        if not (0.0 < self.eps < 0.5):
            raise ConstructionError("shear smoothing width must be in (0, 1/2)")
        if 1.0 / (self.a / self.b) < 1e-12:
            raise ConstructionError("strip width below numeric resolution (< 1e-12)")
        if self.j0 * 2 >= self.a:
            raise ConstructionError(
                "identity collar consumes the whole strip range "
                f"(j0={self.j0}, a={self.a}): eps too large for this a, b"
            )

    @property
    def period(self) -> int:
        # translation step is b/a = 1/(a/b); a strip index multiple of a/b
        # contributes an integer translation
        return self.a // self.b

    @property
    def j0(self) -> int:
        per = self.period
        return per * math.ceil(self.a * self.eps / per)

    def chi(self, y: Array) -> Array:
        y = mod1(np.asarray(y, dtype=float))
        z = y * self.a
        centers = np.arange(self.j0 + 1, self.a - self.j0 + 1, dtype=float)
        signs = np.ones_like(centers)
        count = _staircase_profile(z, centers, signs, self.eps)
        return (self.b / self.a) * count

    def forward(self, pts: Array) -> Array:
        out = np.array(pts, dtype=float, copy=True)
        out[..., 0] = mod1(out[..., 0] + self.chi(out[..., 1]))
        return out

    def inverse(self, pts: Array) -> Array:
        out = np.array(pts, dtype=float, copy=True)
        out[..., 0] = mod1(out[..., 0] - self.chi(out[..., 1]))
        return out

    def smoothness_margin(self, pts: Array) -> Array:
        y = mod1(np.asarray(pts[..., 1], dtype=float))
        z = y * self.a
        near = np.round(z)
        return (np.abs(np.abs(z - near) - self.eps)) / self.a

    def params_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "eps": self.eps}


@dataclass(frozen=True)
class WordDrivenPhi(MapNode):
    """Blockwise twists on [0, 1/q) driven by a symbol word of length 2*q^2.

    Block i (width 1/(2*q^3)) carries the identity for symbol 0 and a tiled
    twist with stretch 2*q^(j+2) for symbol j >= 1, capped at
    2*q^3*cap_tiles so narrow cells stay resolvable; extended
    1/q-equivariantly.
    """

    q: int
    eps: float
    word: tuple[int, ...]
    cap_tiles: int = 64
    kind = "word_driven_phi"

    def __post_init__(self):
        if len(self.word) != 2 * self.q * self.q:
            raise ConstructionError(
                f"word length must be 2*q^2 = {2 * self.q * self.q}, got {len(self.word)}"
            )
        if min(self.word) < 0:
            raise ConstructionError("symbols must be non-negative")
        SquareTwist(self.eps)
        if self.cap_tiles < 1:
            raise ConstructionError("cap_tiles must be >= 1")
        worst = 2 * self.q**3 * self.tiles_for(max(self.word))
        if 1.0 / worst < 1e-12:
            raise ConstructionError("block width below numeric resolution (< 1e-12)")

    def tiles_for(self, symbol: int) -> int:
        if symbol == 0:
            return 0
        return min(self.q ** (symbol - 1), self.cap_tiles)

    @property
    def twist(self) -> SquareTwist:
        return SquareTwist(self.eps)

    def _block(self, lx: Array, y: Array, inverse: bool) -> tuple[Array, Array]:
        # lx in [0,1) is the cell-local coordinate; blocks split it 2*q^2 ways
        nblocks = 2 * self.q * self.q
        scaled = lx * nblocks
        block = np.minimum(np.floor(scaled), nblocks - 1).astype(np.int64)
        inner = scaled - block
        word = np.asarray(self.word, dtype=np.int64)
        sym = word[block]
        bx = lx.copy()
        by = np.array(np.broadcast_to(y, lx.shape), dtype=float, copy=True)
        tw = self.twist
        for j in np.unique(sym):
            if j == 0:
                continue
            sel = sym == j
            tiles = self.tiles_for(int(j))
            z = inner[sel] * tiles
            tile = np.minimum(np.floor(z), tiles - 1)
            loc = np.stack([z - tile, by[sel]], axis=-1)
            res = tw.eval(loc, inverse=inverse)
            inner_new = (tile + res[..., 0]) / tiles
            bx[sel] = (block[sel] + inner_new) / nblocks
            by[sel] = res[..., 1]
        return bx, by

    def forward(self, pts: Array) -> Array:
        return _tile_x(pts, self.q, self._block, False)

    def inverse(self, pts: Array) -> Array:
        return _tile_x(pts, self.q, self._block, True)

    def smoothness_margin(self, pts: Array) -> Array:
        nblocks = 2 * self.q * self.q
        x = mod1(np.asarray(pts[..., 0], dtype=float))
        y = np.asarray(pts[..., 1], dtype=float)
        frac = x * self.q
        lx = frac - np.floor(frac)
        scaled = lx * nblocks
        block = np.minimum(np.floor(scaled), nblocks - 1).astype(np.int64)
        inner = scaled - block
        word = np.asarray(self.word, dtype=np.int64)
        sym = word[block]
        out = np.full(lx.shape, np.inf)
        tw = self.twist
        for j in np.unique(sym):
            sel = sym == j
            if j == 0:
                continue
            tiles = self.tiles_for(int(j))
            stretch = self.q * nblocks * tiles
            z = inner[sel] * tiles
            tile = np.minimum(np.floor(z), tiles - 1)
            loc = np.stack([z - tile, y[sel] if y.shape == lx.shape else np.broadcast_to(y, lx.shape)[sel]], axis=-1)
            out[sel] = tw.smoothness_margin(loc) / stretch
        # block seams
        seam = np.minimum(inner, 1.0 - inner) / (self.q * nblocks)
        return np.minimum(out, seam)

    def params_dict(self) -> dict:
        return {
            "q": self.q,
            "eps": self.eps,
            "cap_tiles": self.cap_tiles,
            "word": "".join(np.base_repr(s, 36).lower() for s in self.word),
        }

    def describe(self, indent: int = 0) -> str:
        pad = " " * indent
        counts = {}
        for s in self.word:
            counts[s] = counts.get(s, 0) + 1
        hist = ", ".join(f"{s}:{c}" for s, c in sorted(counts.items()))
        return (
            f"{pad}word_driven_phi(q={self.q}, eps={self.eps}, "
            f"blocks={len(self.word)}, symbol counts {{{hist}}}, cap_tiles={self.cap_tiles})"
        )


@dataclass(frozen=True)
class Composite(MapNode):
    """Composition in map order: Composite([f, g]) evaluates f(g(x))."""

    nodes: tuple[MapNode, ...]
    kind = "composite"

    def forward(self, pts: Array) -> Array:
        out = np.asarray(pts, dtype=float)
        for node in reversed(self.nodes):
            out = node.forward(out)
        return out

    def inverse(self, pts: Array) -> Array:
        out = np.asarray(pts, dtype=float)
        for node in self.nodes:
            out = node.inverse(out)
        return out

    def smoothness_margin(self, pts: Array) -> Array:
        cur = np.asarray(pts, dtype=float)
        margin = np.full(cur.shape[:-1], np.inf)
        for node in reversed(self.nodes):
            margin = np.minimum(margin, node.smoothness_margin(cur))
            cur = node.forward(cur)
        return margin

    def params_dict(self) -> dict:
        return {"nodes": [n.to_dict() for n in self.nodes]}

    def describe(self, indent: int = 0) -> str:
        pad = " " * indent
        lines = [f"{pad}composite of {len(self.nodes)} maps (leftmost applied last):"]
        for node in self.nodes:
            lines.append(node.describe(indent + 2))
        return "\n".join(lines)


_NODE_KINDS = {}
for _cls in (Rotation, QuasiRotTiled, UntwistedH, VerticalStepShear, HorizontalStepShear, WordDrivenPhi, Composite):
    _NODE_KINDS[_cls.kind] = _cls


def node_from_dict(d: dict) -> MapNode:
    kind = d.get("kind")
    if kind == "rotation":
        return Rotation(alpha=_parse_frac(d["alpha"]))
    if kind == "quasi_rot_tiled":
        return QuasiRotTiled(q=int(d["q"]), eps=float(d["eps"]))
    if kind == "untwisted_h":
        return UntwistedH(
            q=int(d["q"]),
            eps=float(d["eps"]),
            literal_big_rescale=bool(d.get("literal_big_rescale", False)),
        )
    if kind == "vertical_step_shear":
        return VerticalStepShear(
            q=int(d["q"]), eps=float(d["eps"]), i1=int(d["i1"]), s1=int(d["s1"])
        )
    if kind == "horizontal_step_shear":
        return HorizontalStepShear(a=int(d["a"]), b=int(d["b"]), eps=float(d["eps"]))
    if kind == "word_driven_phi":
        word = tuple(int(c, 36) for c in d["word"])
        return WordDrivenPhi(
            q=int(d["q"]), eps=float(d["eps"]), word=word, cap_tiles=int(d.get("cap_tiles", 64))
        )
    if kind == "composite":
        return Composite(nodes=tuple(node_from_dict(n) for n in d["nodes"]))
    raise ValueError(f"unknown node kind {kind!r}")


def node_to_json(node: MapNode) -> str:
    return json.dumps(node.to_dict(), indent=2, sort_keys=True) + "\n"


def node_from_json(text: str) -> MapNode:
    return node_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# stage constructors


def build_untwisted_h(stage: StageParams, literal_big_rescale: bool = False) -> MapNode:
    """The two-block twist for one stage of the untwisted construction."""
    return UntwistedH(q=stage.q, eps=float(stage.eps), literal_big_rescale=literal_big_rescale)


def build_ue_h(stage: StageParams, i1: int, s1: int) -> MapNode:
    """Vertical staircase shear followed by the tiled twist (one stage)."""
    shear = VerticalStepShear(q=stage.q, eps=float(stage.eps), i1=i1, s1=s1)
    return Composite(nodes=(QuasiRotTiled(q=stage.q, eps=float(stage.eps)), shear))


def build_wm_h(
    stage: StageParams,
    word: Sequence[int],
    sigma: Optional[float] = None,
    cap_tiles: int = 64,
) -> MapNode:
    """Word-driven blockwise twists followed by the horizontal strip shear."""
    n, q = stage.n, stage.q
    if sigma is None:
        sigma = 1.0 / n
    b = int(math.floor(n * q**sigma))
    if b < 1:
        raise ConstructionError("strip count multiplier floor(n*q^sigma) must be >= 1")
    a = b * 2 * q**3
    phi = WordDrivenPhi(q=q, eps=float(stage.eps), word=tuple(word), cap_tiles=cap_tiles)
    shear = HorizontalStepShear(a=a, b=b, eps=float(stage.eps))
    return Composite(nodes=(shear, phi))


# ---------------------------------------------------------------------------
# assembled systems and orbits


@dataclass(frozen=True)
class AbCSystem:
    """H o R_alpha o H^{-1} with the rotation advanced exactly."""

    H: MapNode
    alpha_next: Fraction
    stage: StageParams

    @property
    def q_next(self) -> int:
        return self.alpha_next.denominator

    def rotation_fracs(self, times: Sequence[int]) -> Array:
        """t * alpha_next mod 1 for each t, computed in exact arithmetic."""
        p = self.alpha_next.numerator
        q = self.alpha_next.denominator
        return np.array([((t * p) % q) / q for t in times], dtype=float)

    def step(self, pts: Array, inverse: bool = False) -> Array:
        """One application of T (or T^{-1})."""
        u = self.H.inverse(pts)
        shift = float(self.alpha_next % 1)
        u = np.array(u, copy=True)
        u[..., 0] = mod1(u[..., 0] + (-shift if inverse else shift))
        return self.H.forward(u)

    def to_dict(self) -> dict:
        return {
            "H": self.H.to_dict(),
            "alpha_next": _frac_str(self.alpha_next),
            "stage": self.stage.to_dict(),
        }

    def describe(self) -> str:
        st = self.stage
        lines = [
            f"stage n={st.n}: q={st.q}, alpha={st.alpha}, eps={st.eps}, "
            f"next rotation {self.alpha_next} (q_next={self.q_next})",
            self.H.describe(2),
        ]
        return "\n".join(lines)


def system_from_dict(d: dict) -> AbCSystem:
    return AbCSystem(
        H=node_from_dict(d["H"]),
        alpha_next=_parse_frac(d["alpha_next"]),
        stage=StageParams.from_dict(d["stage"]),
    )


def orbit(sys: AbCSystem, x, L: int, stride: int = 1) -> Array:
    """T^t(x) for t = 0, stride, ... < L: one inverse pull-back, one forward
    evaluation per sample, rotation advanced in exact rational arithmetic."""
    if L < 1:
        raise ValueError("L must be >= 1")
    p0 = as_points(x)
    u = sys.H.inverse(p0)[0]
    times = range(0, L, stride)
    fracs = sys.rotation_fracs(times)
    pts = np.empty((len(fracs), 2), dtype=float)
    pts[:, 0] = mod1(u[0] + fracs)
    pts[:, 1] = u[1]
    return sys.H.forward(pts)


def orbit_batch(sys: AbCSystem, seeds: Array, times: Sequence[int]) -> Array:
    """Orbit positions for many seeds: returns (len(times), n_seeds, 2)."""
    seeds = as_points(seeds)
    u = sys.H.inverse(seeds)
    fracs = sys.rotation_fracs(times)
    out = np.empty((len(fracs), seeds.shape[0], 2), dtype=float)
    cur = np.empty_like(u)
    for i, fr in enumerate(fracs):
        cur[:, 0] = mod1(u[:, 0] + fr)
        cur[:, 1] = u[:, 1]
        out[i] = sys.H.forward(cur)
    return out


def orbit_images(H: MapNode, base: Array, fracs: Array) -> Array:
    """H(base + (frac, 0)) for each frac: orbit of H(base) under H R^t H^{-1}
    without the inverse pull-back (useful when base points are given in
    pre-conjugation coordinates)."""
    base = as_points(base)
    out = np.empty((len(fracs), base.shape[0], 2), dtype=float)
    cur = np.empty_like(base)
    for i, fr in enumerate(fracs):
        cur[:, 0] = mod1(base[:, 0] + fr)
        cur[:, 1] = base[:, 1]
        out[i] = H.forward(cur)
    return out


# ---------------------------------------------------------------------------
# central index and measure checks


def central_index(chain: Sequence[StageParams], n: int) -> int:
    """Index i minimizing |i/q_n - sum_{m<n} 1/(2 q_m)|, exactly."""
    st = next(s for s in chain if s.n == n)
    target = sum((Fraction(1, 2 * s.q) for s in chain if s.n < n), Fraction(0))
    qn = st.q
    best = (None, None)
    # |i/q - target| is unimodal in i; check the two integers around q*target
    center = target * qn
    lo = int(math.floor(center))
    for i in (lo - 1, lo, lo + 1, lo + 2):
        ii = i % qn
        val = abs(Fraction(ii, qn) - target)
        if best[0] is None or val < best[1]:
            best = (ii, val)
    return best[0]


def jacobian_mc(
    node: MapNode,
    samples: int,
    fd_step: float,
    seed: int = 0,
    inverse: bool = False,
) -> dict:
    """Monte-Carlo check of |det Df - 1| by central differences.

    Uniform sample points; points within 2*fd_step of the map's
    non-smooth set are excluded (their count is reported).  Coordinate
    differences are unwrapped on the circle before differencing.
    """
    if not (1e-8 <= fd_step <= 1e-4):
        raise ValueError("fd_step must lie in [1e-8, 1e-4]")
    rng = np.random.Generator(np.random.Philox(seed))
    pts = rng.random((samples, 2))
    margin = node.smoothness_margin(pts)
    keep = margin > 2.0 * fd_step
    pts = pts[keep]
    h = fd_step
    def f(p):
        return node.apply(p, inverse=inverse)
    dxp = f(pts + np.array([h, 0.0]))
    dxm = f(pts - np.array([h, 0.0]))
    dyp = f(pts + np.array([0.0, h]))
    dym = f(pts - np.array([0.0, h]))
    j11 = circle_diff(dxp[:, 0], dxm[:, 0]) / (2 * h)
    j21 = circle_diff(dxp[:, 1], dxm[:, 1]) / (2 * h)
    j12 = circle_diff(dyp[:, 0], dym[:, 0]) / (2 * h)
    j22 = circle_diff(dyp[:, 1], dym[:, 1]) / (2 * h)
    det = j11 * j22 - j12 * j21
    err = np.abs(det - 1.0)
    return {
        "mean": float(np.mean(err)) if err.size else 0.0,
        "max": float(np.max(err)) if err.size else 0.0,
        "n_used": int(err.size),
        "n_excluded": int(samples - err.size),
    }
