"""Poincare-disk hyperbolic geometry and the Bolza surface group.

The unit disk carries the background metric g0 = 4|dz|^2/(1-|z|^2)^2 of
curvature -1.  A disk isometry is stored as a pair (a, b) of complex
numbers with |a|^2 - |b|^2 = 1, acting by

    z  ->  (a z + b) / (conj(b) z + conj(a)),

i.e. the SU(1,1) matrix [[a, b], [conj(b), conj(a)]].  The pair and its
negative act identically, so elements are compared projectively.

The Bolza surface (genus 2) is the quotient of the disk by the group
generated by the four side pairings of the regular hyperbolic octagon
centred at 0 together with their inverses.  Its Dirichlet domain about 0
is the octagon itself; `fold_to_domain` maps any disk point into it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, ResourceError

EPS_BOUNDARY = 1e-6
DEDUP_TOL = 1e-9
FOLD_MAX_ITER = 1000

# grid resolution for the duplicate-detection keys; two offset grids are
# combined so a pair of float copies of one element cannot straddle both
_KEY_RES = 1e-6


def require_disk_point(z: complex, eps: float = EPS_BOUNDARY) -> None:
    """Reject points on or too close to the ideal boundary."""
    if abs(z) >= 1.0 - eps:
        raise DomainError(f"point {z!r} too close to the ideal boundary (|z| >= {1.0 - eps})")


@dataclass(frozen=True)
class GroupElement:
    """Unit-determinant disk isometry z -> (a z + b)/(conj(b) z + conj(a))."""

    a: complex
    b: complex

    def __post_init__(self):
        det = abs(self.a) ** 2 - abs(self.b) ** 2
        # determinant check is relative: entries of long words are large and
        # the subtraction cancels catastrophically in float64
        scale = max(1.0, abs(self.a) ** 2)
        if abs(det - 1.0) > 1e-10 * scale:
            raise ValueError(f"not unit determinant: |a|^2-|b|^2 = {det}")

    def apply(self, z: complex) -> complex:
        require_disk_point(z, eps=0.0)
        return (self.a * z + self.b) / (np.conj(self.b) * z + np.conj(self.a))

    def derivative(self, z: complex) -> complex:
        require_disk_point(z, eps=0.0)
        return 1.0 / (np.conj(self.b) * z + np.conj(self.a)) ** 2

    def inverse(self) -> "GroupElement":
        return GroupElement(np.conj(self.a), -self.b)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(
            self.a * other.a + self.b * np.conj(other.b),
            self.a * other.b + self.b * np.conj(other.a),
        )

    def is_identity(self, tol: float = DEDUP_TOL) -> bool:
        return abs(self.a - 1.0) < tol and abs(self.b) < tol or abs(self.a + 1.0) < tol and abs(self.b) < tol

    def dist(self, other: "GroupElement") -> float:
        """Projective matrix max-norm distance (both signs identified)."""
        d_plus = max(abs(self.a - other.a), abs(self.b - other.b))
        d_minus = max(abs(self.a + other.a), abs(self.b + other.b))
        return min(d_plus, d_minus)


IDENTITY = GroupElement(1.0 + 0.0j, 0.0j)


def mobius_apply(gamma: GroupElement, z: complex) -> complex:
    """Apply the isometry; raises DomainError outside the open disk."""
    if abs(z) >= 1.0:
        raise DomainError(f"|z| = {abs(z)} >= 1")
    return gamma.apply(z)


def mobius_derivative(gamma: GroupElement, z: complex) -> complex:
    """Complex derivative 1/(conj(b) z + conj(a))^2 of the action."""
    if abs(z) >= 1.0:
        raise DomainError(f"|z| = {abs(z)} >= 1")
    return gamma.derivative(z)


def hyp_distance(z, w):
    """Hyperbolic distance 2 artanh |(z-w)/(1 - conj(w) z)| (array-safe)."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if np.any(np.abs(z) >= 1.0) or np.any(np.abs(w) >= 1.0):
        raise DomainError("hyp_distance requires both points inside the open disk")
    t = np.abs((z - w) / (1.0 - np.conj(w) * z))
    out = 2.0 * np.arctanh(t)
    return float(out) if out.ndim == 0 else out


def _canonical_sign(a: np.ndarray, b: np.ndarray):
    """Flip (a, b) -> (-a, -b) so the representative is unique.

    |a| >= 1 always, so either |Re a| or |Im a| exceeds 0.7; the rule is
    stable under perturbations ~1e-12 except on a measure-zero set.
    """
    re = a.real.copy()
    use_im = np.abs(re) <= 0.5
    re[use_im] = a.imag[use_im]
    s = np.where(re >= 0.0, 1.0, -1.0)
    return a * s, b * s


def _keys(a: np.ndarray, b: np.ndarray, offset: float) -> np.ndarray:
    """Combined int64 hash of the four rounded matrix coordinates."""
    h = np.zeros(a.shape, dtype=np.int64)
    for v in (a.real, a.imag, b.real, b.imag):
        k = np.round(v / _KEY_RES + offset).astype(np.int64)
        h = h * np.int64(1000003) + k
        h ^= h >> 17
    return h


class ElementTable:
    """Deduplicated group elements as flat arrays, sorted by word length.

    Behaves as a read-only sequence of GroupElement; the array attributes
    (a, b, word_length) are what the numerical kernels consume.
    """

    def __init__(self, a: np.ndarray, b: np.ndarray, word_length: np.ndarray):
        self.a = a
        self.b = b
        self.word_length = word_length

    def __len__(self) -> int:
        return self.a.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [GroupElement(complex(x), complex(y)) for x, y in zip(self.a[i], self.b[i])]
        return GroupElement(complex(self.a[i]), complex(self.b[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def shell(self, length: int) -> "ElementTable":
        m = self.word_length == length
        return ElementTable(self.a[m], self.b[m], self.word_length[m])

    def up_to(self, length: int) -> "ElementTable":
        m = self.word_length <= length
        return ElementTable(self.a[m], self.b[m], self.word_length[m])

    def counts(self) -> dict[int, int]:
        lengths, counts = np.unique(self.word_length, return_counts=True)
        return {int(l): int(c) for l, c in zip(lengths, counts)}


@dataclass
class FuchsianGroup:
    """Cocompact disk group with cached breadth-first enumeration."""

    generators: list[GroupElement]
    dedup_tolerance: float = DEDUP_TOL
    element_cap: int = 10_000_000
    name: str = "custom"
    _table: ElementTable | None = field(default=None, repr=False)
    _keys0: np.ndarray | None = field(default=None, repr=False)
    _keys1: np.ndarray | None = field(default=None, repr=False)
    _max_length: int = field(default=-1, repr=False)

    def __post_init__(self):
        for g in self.generators:
            if abs(g.apply(0.0)) >= 1.0:
                raise ValueError("generator does not preserve the disk")
        ga, gb = _canonical_sign(
            np.array([g.a for g in self.generators]),
            np.array([g.b for g in self.generators]),
        )
        self._gen_a = ga
        self._gen_b = gb

    # -- enumeration -----------------------------------------------------

    def _extend(self, max_word_length: int) -> None:
        if self._table is None:
            a = np.array([1.0 + 0.0j])
            b = np.array([0.0j])
            wl = np.array([0], dtype=np.int32)
            self._table = ElementTable(a, b, wl)
            self._keys0 = np.sort(_keys(a, b, 0.0))
            self._keys1 = np.sort(_keys(a, b, 0.5))
            self._max_length = 0
        while self._max_length < max_word_length:
            level = self._max_length + 1
            prev = self._table.shell(level - 1)
            cand_a_parts, cand_b_parts = [], []
            # frontier x generators, chunked to bound peak memory
            chunk = max(1, int(2_000_000 // max(1, len(self._gen_a))))
            for lo in range(0, len(prev), chunk):
                pa = prev.a[lo : lo + chunk, None]
                pb = prev.b[lo : lo + chunk, None]
                ga = self._gen_a[None, :]
                gb = self._gen_b[None, :]
                # (prev @ gen): left factor prev, right factor gen
                na = pa * ga + pb * np.conj(gb)
                nb = pa * gb + pb * np.conj(ga)
                cand_a_parts.append(na.ravel())
                cand_b_parts.append(nb.ravel())
            ca = np.concatenate(cand_a_parts)
            cb = np.concatenate(cand_b_parts)
            ca, cb = _canonical_sign(ca, cb)
            k0 = _keys(ca, cb, 0.0)
            k1 = _keys(ca, cb, 0.5)
            # dedup within the level on both grids
            _, idx = np.unique(k0, return_index=True)
            ca, cb, k0, k1 = ca[idx], cb[idx], k0[idx], k1[idx]
            _, idx = np.unique(k1, return_index=True)
            ca, cb, k0, k1 = ca[idx], cb[idx], k0[idx], k1[idx]
            # drop anything already present at a shorter word length
            seen = np.searchsorted(self._keys0, k0)
            seen = np.clip(seen, 0, len(self._keys0) - 1)
            dup = self._keys0[seen] == k0
            seen1 = np.searchsorted(self._keys1, k1)
            seen1 = np.clip(seen1, 0, len(self._keys1) - 1)
            dup |= self._keys1[seen1] == k1
            keep = ~dup
            ca, cb, k0, k1 = ca[keep], cb[keep], k0[keep], k1[keep]
            total = len(self._table) + ca.shape[0]
            if total > self.element_cap:
                raise ResourceError(
                    f"group enumeration to word length {level} needs {total} elements"
                    f" (cap {self.element_cap})"
                )
            self._table = ElementTable(
                np.concatenate([self._table.a, ca]),
                np.concatenate([self._table.b, cb]),
                np.concatenate([self._table.word_length, np.full(ca.shape[0], level, dtype=np.int32)]),
            )
            self._keys0 = np.sort(np.concatenate([self._keys0, k0]))
            self._keys1 = np.sort(np.concatenate([self._keys1, k1]))
            self._max_length = level

    def enumerate(self, max_word_length: int) -> ElementTable:
        """All elements of word length <= max_word_length, deduplicated."""
        if max_word_length < 0:
            raise ValueError("max_word_length must be >= 0")
        self._extend(max_word_length)
        return self._table.up_to(max_word_length)

    # -- folding ----------------------------------------------------------

    @property
    def neighbor_points(self) -> np.ndarray:
        """Orbit points gen(0) whose bisectors cut the Dirichlet domain."""
        return (self._gen_b / np.conj(self._gen_a)).copy()

    def in_fundamental_domain(self, z: complex, tol: float = 1e-12) -> bool:
        """Dirichlet membership: no generator orbit point is closer than 0."""
        zc = complex(z)
        n0 = abs(zc) ** 2
        for p in self.neighbor_points:
            np_ = abs((zc - p) / (1.0 - np.conj(p) * zc)) ** 2
            if np_ < n0 - tol:
                return False
        return True

    def fold_to_domain(self, z: complex, eps: float = EPS_BOUNDARY):
        """Map z into the Dirichlet domain about 0.

        Returns (z_folded, gamma) with gamma.apply(z) == z_folded.  Greedy:
        repeatedly apply the generator that brings the point closest to 0.
        """
        zc = complex(z)
        if abs(zc) >= 1.0 - eps:
            raise DomainError(f"|z| = {abs(zc)} too close to the boundary for folding")
        gamma = IDENTITY
        gens = [GroupElement(complex(a), complex(b)) for a, b in zip(self._gen_a, self._gen_b)]
        for _ in range(FOLD_MAX_ITER):
            if self.in_fundamental_domain(zc):
                return zc, gamma
            best = None
            best_r = abs(zc)
            for g in gens:
                r = abs(g.apply(zc))
                if r < best_r:
                    best_r = r
                    best = g
            if best is None:
                # on the boundary up to roundoff: accept
                return zc, gamma
            zc = best.apply(zc)
            gamma = best @ gamma
        raise ConvergenceError(f"folding did not terminate within {FOLD_MAX_ITER} iterations")


def group_enumerate(group: FuchsianGroup, max_word_length: int) -> ElementTable:
    """Module-level alias for FuchsianGroup.enumerate."""
    return group.enumerate(max_word_length)


def fold_to_domain(group: FuchsianGroup, z: complex):
    """Module-level alias for FuchsianGroup.fold_to_domain."""
    return group.fold_to_domain(z)


# -- the Bolza preset -----------------------------------------------------

_SQRT2 = math.sqrt(2.0)
BOLZA_GEN_A = 1.0 + _SQRT2
BOLZA_GEN_B_ABS = math.sqrt(2.0 + 2.0 * _SQRT2)


def bolza_generators() -> list[GroupElement]:
    """Four octagon side pairings and their inverses (8 elements).

    Generator k (k = 0..3) has a = 1 + sqrt(2), b = sqrt(2 + 2 sqrt(2)) e^{i k pi/4};
    the determinant identity (1+sqrt 2)^2 - (2+2 sqrt 2) = 1 is exact.
    """
    gens = []
    for k in range(4):
        b = BOLZA_GEN_B_ABS * np.exp(1j * k * math.pi / 4.0)
        g = GroupElement(BOLZA_GEN_A + 0.0j, b)
        gens.append(g)
        gens.append(g.inverse())
    return gens


def bolza_group(element_cap: int = 10_000_000) -> FuchsianGroup:
    return FuchsianGroup(bolza_generators(), name="bolza", element_cap=element_cap)


def surface_group(name: str, **kwargs) -> FuchsianGroup:
    """Config-key entry point; only the "bolza" preset is provided."""
    if name != "bolza":
        raise ValueError(f"unknown surface preset {name!r}")
    return bolza_group(**kwargs)


def dirichlet_bisector(p: complex):
    """Euclidean (center, radius) of the hyperbolic bisector of [0, p].

    The bisector is a circle orthogonal to the unit circle; its closest
    point to the origin is the hyperbolic midpoint of the segment.
    """
    r = abs(p)
    r_mid = r / (1.0 + math.sqrt(1.0 - r * r))  # half the hyperbolic angle
    rho = (1.0 - r_mid * r_mid) / (2.0 * r_mid)
    center = (r_mid + rho) * p / r
    return center, rho


def _circle_intersection(c1: complex, r1: float, c2: complex, r2: float):
    """Both intersection points of two circles."""
    d = abs(c2 - c1)
    u = (c2 - c1) / d
    x = (d * d + r1 * r1 - r2 * r2) / (2.0 * d)
    h2 = r1 * r1 - x * x
    if h2 < 0:
        raise ValueError("circles do not intersect")
    h = math.sqrt(h2)
    base = c1 + x * u
    return base + 1j * h * u, base - 1j * h * u


def octagon_corners(group: FuchsianGroup) -> np.ndarray:
    """Vertices of the Dirichlet octagon, ordered by angle."""
    pts = group.neighbor_points
    order = np.argsort(np.angle(pts) % (2.0 * math.pi))
    pts = pts[order]
    corners = []
    n = len(pts)
    for k in range(n):
        c1, r1 = dirichlet_bisector(pts[k])
        c2, r2 = dirichlet_bisector(pts[(k + 1) % n])
        w1, w2 = _circle_intersection(c1, r1, c2, r2)
        corners.append(w1 if abs(w1) < abs(w2) else w2)
    return np.array(corners)


def octagon_circumradius(group: FuchsianGroup | None = None) -> float:
    """Hyperbolic distance from 0 to an octagon vertex."""
    g = group if group is not None else bolza_group()
    w = octagon_corners(g)[0]
    return float(hyp_distance(0.0, w))
