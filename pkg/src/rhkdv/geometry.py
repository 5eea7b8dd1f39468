"""Oriented contours built from segments, circles and ellipses.

A contour is an ordered list of disjoint pieces. Nodes are the collocation
points used by the Cauchy-transform machinery: interior Chebyshev angles on
segments (endpoints excluded), uniform parameter samples on closed curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

POSITIVE = "positive"
NEGATIVE = "negative"

# Chebyshev families available on segments; see cauchy_kernel for the
# transform formulas attached to each.
FAMILIES = ("plain", "chebt", "chebu")


def _check_n(n: int) -> int:
    n = int(n)
    if n < 4:
        raise ValueError("piece needs at least 4 nodes")
    return n


@dataclass(frozen=True)
class ContourPiece:
    """Base type; concrete pieces are Segment, Circle, Ellipse."""

    def nodes(self) -> np.ndarray:
        raise NotImplementedError

    def scale(self) -> float:
        raise NotImplementedError

    def distance(self, z: complex) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class Segment(ContourPiece):
    a: complex
    b: complex
    n: int
    family: str = "plain"
    kind: str = field(default="segment", init=False)
    orientation: str = field(default=POSITIVE, init=False)

    def __post_init__(self):
        object.__setattr__(self, "a", complex(self.a))
        object.__setattr__(self, "b", complex(self.b))
        object.__setattr__(self, "n", _check_n(self.n))
        if self.a == self.b:
            raise ValueError("degenerate segment: endpoints coincide")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown segment family {self.family!r}")

    @property
    def mid(self) -> complex:
        return 0.5 * (self.a + self.b)

    @property
    def half(self) -> complex:
        return 0.5 * (self.b - self.a)

    def ref_angles(self) -> np.ndarray:
        # interior nodes x_l = cos(l pi / (n+1)), l = 1..n
        return np.arange(1, self.n + 1) * np.pi / (self.n + 1)

    def nodes(self) -> np.ndarray:
        return self.mid + self.half * np.cos(self.ref_angles())

    def point_at(self, s) -> np.ndarray:
        # s in [0, 1] runs a -> b
        s = np.asarray(s, dtype=float)
        return self.a + (self.b - self.a) * s

    def scale(self) -> float:
        return abs(self.b - self.a)

    def distance(self, z: complex) -> float:
        w = (complex(z) - self.a) / (self.b - self.a)
        t = min(max(w.real, 0.0), 1.0)
        return abs(complex(z) - (self.a + t * (self.b - self.a)))

    def conj_piece(self) -> "Segment":
        return Segment(np.conj(self.a), np.conj(self.b), self.n, self.family)

    def neg_piece(self) -> "Segment":
        return Segment(-self.a, -self.b, self.n, self.family)

    def same_locus(self, other, tol: float) -> bool:
        if not isinstance(other, Segment):
            return False
        s = self.scale() + other.scale()
        direct = abs(self.a - other.a) + abs(self.b - other.b)
        swapped = abs(self.a - other.b) + abs(self.b - other.a)
        return min(direct, swapped) < tol * max(s, 1.0)


@dataclass(frozen=True)
class Circle(ContourPiece):
    center: complex
    radius: float
    n: int
    orientation: str = POSITIVE
    kind: str = field(default="circle", init=False)

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "n", _check_n(self.n))
        if self.radius <= 0:
            raise ValueError("circle radius must be positive")
        if self.orientation not in (POSITIVE, NEGATIVE):
            raise ValueError("orientation must be 'positive' or 'negative'")

    @property
    def sign(self) -> int:
        return 1 if self.orientation == POSITIVE else -1

    def nodes(self) -> np.ndarray:
        l = np.arange(self.n)
        return self.center + self.radius * np.exp(2j * np.pi * self.sign * l / self.n)

    def point_at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return self.center + self.radius * np.exp(2j * np.pi * self.sign * s)

    def scale(self) -> float:
        return self.radius

    def distance(self, z: complex) -> float:
        return abs(abs(complex(z) - self.center) - self.radius)

    def conj_piece(self) -> "Circle":
        flipped = NEGATIVE if self.orientation == POSITIVE else POSITIVE
        return Circle(np.conj(self.center), self.radius, self.n, flipped)

    def neg_piece(self) -> "Circle":
        return Circle(-self.center, self.radius, self.n, self.orientation)

    def same_locus(self, other, tol: float) -> bool:
        if not isinstance(other, Circle):
            return False
        s = max(self.radius + other.radius, 1.0)
        return (abs(self.center - other.center) + abs(self.radius - other.radius)) < tol * s


@dataclass(frozen=True)
class Ellipse(ContourPiece):
    center: complex
    rx: float
    ry: float
    n: int
    orientation: str = POSITIVE
    kind: str = field(default="ellipse", init=False)

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "rx", float(self.rx))
        object.__setattr__(self, "ry", float(self.ry))
        object.__setattr__(self, "n", _check_n(self.n))
        if self.rx <= 0 or self.ry <= 0:
            raise ValueError("ellipse semi-axes must be positive")
        if self.orientation not in (POSITIVE, NEGATIVE):
            raise ValueError("orientation must be 'positive' or 'negative'")

    @property
    def sign(self) -> int:
        return 1 if self.orientation == POSITIVE else -1

    # Joukowski parameters: gamma(v) = center + A v + B / v on |v| = 1
    @property
    def A(self) -> float:
        return 0.5 * (self.rx + self.ry)

    @property
    def B(self) -> float:
        return 0.5 * (self.rx - self.ry)

    def vnodes(self) -> np.ndarray:
        l = np.arange(self.n)
        return np.exp(2j * np.pi * self.sign * l / self.n)

    def nodes(self) -> np.ndarray:
        v = self.vnodes()
        return self.center + self.A * v + self.B / v

    def point_at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        v = np.exp(2j * np.pi * self.sign * s)
        return self.center + self.A * v + self.B / v

    def scale(self) -> float:
        return max(self.rx, self.ry)

    def distance(self, z: complex) -> float:
        zc = complex(z)
        s = np.linspace(0.0, 1.0, 129)
        d = np.abs(self.point_at(s) - zc)
        i = int(np.argmin(d))
        if d[i] > 0.1 * max(self.scale(), 1.0):
            return float(d[i])  # coarse upper bound suffices far away
        lo, hi = s[i] - 1.0 / 128.0, s[i] + 1.0 / 128.0
        for _ in range(40):
            m1 = lo + 0.382 * (hi - lo)
            m2 = hi - 0.382 * (hi - lo)
            if abs(self.point_at(m1) - zc) < abs(self.point_at(m2) - zc):
                hi = m2
            else:
                lo = m1
        return float(abs(self.point_at(0.5 * (lo + hi)) - zc))

    def conj_piece(self) -> "Ellipse":
        flipped = NEGATIVE if self.orientation == POSITIVE else POSITIVE
        return Ellipse(np.conj(self.center), self.rx, self.ry, self.n, flipped)

    def neg_piece(self) -> "Ellipse":
        return Ellipse(-self.center, self.rx, self.ry, self.n, self.orientation)

    def same_locus(self, other, tol: float) -> bool:
        if not isinstance(other, Ellipse):
            return False
        s = max(self.scale() + other.scale(), 1.0)
        d = abs(self.center - other.center) + abs(self.rx - other.rx) + abs(self.ry - other.ry)
        return d < tol * s


def make_segment(a: complex, b: complex, n: int, family: str = "plain") -> Segment:
    """Straight segment from a to b with n interior Chebyshev nodes."""
    return Segment(a, b, n, family)


def make_circle(center: complex, radius: float, orientation: str, n: int) -> Circle:
    """Circle with uniform nodes; 'positive' means counterclockwise."""
    return Circle(center, radius, n, orientation)


def make_ellipse(center: complex, rx: float, ry: float, orientation: str, n: int) -> Ellipse:
    """Axis-aligned ellipse, gamma(0) = center + rx."""
    return Ellipse(center, rx, ry, n, orientation)


@dataclass(frozen=True)
class Contour:
    pieces: tuple

    def __init__(self, pieces: Iterable[ContourPiece]):
        object.__setattr__(self, "pieces", tuple(pieces))

    def __len__(self) -> int:
        return len(self.pieces)

    def nodes(self) -> np.ndarray:
        if not self.pieces:
            return np.zeros(0, dtype=complex)
        return np.concatenate([p.nodes() for p in self.pieces])

    def counts(self) -> list:
        return [p.n for p in self.pieces]

    def offsets(self) -> list:
        out, acc = [], 0
        for p in self.pieces:
            out.append(acc)
            acc += p.n
        out.append(acc)
        return out

    def total(self) -> int:
        return sum(p.n for p in self.pieces)

    def scale(self) -> float:
        if not self.pieces:
            return 1.0
        return max(p.scale() for p in self.pieces)

    def distance(self, z: complex) -> float:
        if not self.pieces:
            return np.inf
        return min(p.distance(z) for p in self.pieces)

    def min_gap(self) -> float:
        """Smallest distance between distinct pieces (node-to-curve sampling)."""
        if len(self.pieces) < 2:
            return np.inf
        gap = np.inf
        for i, pi in enumerate(self.pieces):
            zi = pi.nodes()
            for j, pj in enumerate(self.pieces):
                if i == j:
                    continue
                gap = min(gap, min(pj.distance(z) for z in zi))
        return gap


def check_schwarz_symmetry(contour: Contour, tol: float = 1e-12) -> bool:
    """Point-set Schwarz test: conj of every node lies on the contour.

    Orientation-dependent jump relations are the symmetry validator's job;
    this only checks that the node set is closed under conjugation.
    """
    if not contour.pieces:
        return True
    s = max(contour.scale(), 1.0)
    for p in contour.pieces:
        for z in np.conj(p.nodes()):
            if contour.distance(z) > tol * s:
                return False
    return True


def mirror_map(contour: Contour, tol: float = 1e-9):
    """Index map i -> j with piece j tracing the conjugate locus of piece i.

    Returns None when some piece has no conjugate partner.
    """
    out = []
    for p in contour.pieces:
        target = p.conj_piece()
        hit = None
        for j, q in enumerate(contour.pieces):
            if q.same_locus(target, tol):
                hit = j
                break
        if hit is None:
            return None
        out.append(hit)
    return out


def neg_map(contour: Contour, tol: float = 1e-9):
    """Index map i -> j with piece j tracing the negated locus of piece i."""
    out = []
    for p in contour.pieces:
        target = p.neg_piece()
        hit = None
        for j, q in enumerate(contour.pieces):
            if q.same_locus(target, tol):
                hit = j
                break
        if hit is None:
            return None
        out.append(hit)
    return out
