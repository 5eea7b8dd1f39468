"""Closed-form Cauchy transforms for piecewise densities.

Segments carry Chebyshev expansions in one of three families:

* ``plain``  - T_j(x); transform via T_j(z) log((z-1)/(z+1)) plus a
  polynomial correction near the cut, and a convergent inverse-Joukowski
  series in the far field (the closed form loses digits there).
* ``chebt``  - T_j(x)/sqrt(1-x^2); transform i zeta^j / (2 sqrt(z^2-1)).
* ``chebu``  - sqrt(1-x^2) U_j(x); transform (i/2) zeta^{j+1}.

Closed curves carry Laurent/Fourier modes in the local variable
(z - center)/r for circles and the Joukowski parameter v for ellipses;
off-curve values split the mode sum exactly by residue calculus, so every
evaluation is spectrally accurate at any distance from the curve.

All boundary values are exact one-sided limits, so the Plemelj relation
C+ - C- = u holds to rounding on every piece.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import Circle, Contour, ContourPiece, Ellipse, Segment

PLUS = "plus"
MINUS = "minus"

# switch between the near-cut closed form and the far-field series for the
# plain T_j family; |zeta| = 1 on the cut and -> 0 at infinity
_PLAIN_SPLIT = 0.92


class CauchyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# density container


@dataclass
class Density:
    """Per-piece coefficient arrays; trailing shape () | (2,) | (2, 2)."""

    coeffs: list

    def __post_init__(self):
        self.coeffs = [np.asarray(c, dtype=complex) for c in self.coeffs]
        for c in self.coeffs:
            if not np.all(np.isfinite(c)):
                raise CauchyError("density coefficients must be finite")

    @property
    def comp(self) -> tuple:
        return self.coeffs[0].shape[1:] if self.coeffs else ()

    def validate(self, contour: Contour) -> None:
        if len(self.coeffs) != len(contour.pieces):
            raise CauchyError("density has wrong number of pieces")
        comp = self.comp
        for c, p in zip(self.coeffs, contour.pieces):
            if c.shape[0] != p.n:
                raise CauchyError("coefficient count does not match piece nodes")
            if c.shape[1:] != comp:
                raise CauchyError("inconsistent component shapes across pieces")


def density_zeros(contour: Contour, comp: tuple = ()) -> Density:
    return Density([np.zeros((p.n,) + comp, dtype=complex) for p in contour.pieces])


def density_from_values(contour: Contour, values: Sequence[np.ndarray]) -> Density:
    """Build a density by interpolating node values on each piece."""
    return Density([values_to_coeffs(p, np.asarray(v, dtype=complex))
                    for p, v in zip(contour.pieces, values)])


def density_from_function(contour: Contour, fn: Callable) -> Density:
    return density_from_values(contour, [fn(p.nodes()) for p in contour.pieces])


def density_values(contour: Contour, u: Density) -> list:
    return [coeffs_to_values(p, c) for p, c in zip(contour.pieces, u.coeffs)]


# ---------------------------------------------------------------------------
# reference-plane helpers


def _on_upper(m: np.ndarray) -> np.ndarray:
    # adding +0.0 flips a -0.0 imaginary part to +0.0 and keeps every
    # nonzero one; without this, m - 1 and m + 1 can land on opposite
    # sides of the real axis for points exactly on it, putting the two
    # square roots (and logs) on different branches
    return m + 0.0j


def _zeta(m: np.ndarray) -> np.ndarray:
    # inverse Joukowski, |zeta| <= 1, cut exactly on [-1, 1]; the reciprocal
    # form avoids the catastrophic cancellation of m - sqrt(m^2-1) far away
    return 1.0 / (m + _sqrt_cut(m))


def _sqrt_cut(m: np.ndarray) -> np.ndarray:
    # sqrt(m^2 - 1) with branch cut on [-1, 1]
    m = _on_upper(m)
    return np.sqrt(m - 1.0) * np.sqrt(m + 1.0)


def _cheb_t_all(m: np.ndarray, jmax: int) -> np.ndarray:
    # T_j(m) for j = 0..jmax, stacked on the last axis
    out = np.empty(m.shape + (jmax + 1,), dtype=complex)
    out[..., 0] = 1.0
    if jmax >= 1:
        out[..., 1] = m
    for j in range(1, jmax):
        out[..., j + 1] = 2.0 * m * out[..., j] - out[..., j - 1]
    return out


def _plain_pi_all(m: np.ndarray, jmax: int) -> np.ndarray:
    # polynomial parts pi_j with int T_j/(s-z) ds = T_j(z) L(z) + pi_j(z)
    out = np.empty(m.shape + (jmax + 1,), dtype=complex)
    out[..., 0] = 0.0
    if jmax >= 1:
        out[..., 1] = 2.0
    for j in range(1, jmax):
        out[..., j + 1] = 2.0 * m * out[..., j] - out[..., j - 1] + 2.0 * _plain_mu(j)
    return out


def _plain_mu(j: int) -> float:
    # mu_j = int_{-1}^{1} T_j dx
    if j == 0:
        return 2.0
    if j % 2 == 1:
        return 0.0
    return 2.0 / (1.0 - j * j)


_far_coeff_cache = {"C": np.zeros((0, 0))}


def _far_coeffs(terms: int, jcount: int) -> np.ndarray:
    # C[m'-1, j] = 4j/(j^2 - m'^2) for j + m' odd, else 0; j = m' has even
    # parity so the resonant division never survives the mask
    C = _far_coeff_cache["C"]
    if C.shape[0] < terms or C.shape[1] < jcount:
        T = max(terms, C.shape[0], 256)
        J = max(jcount, C.shape[1], 64)
        mm = np.arange(1, T + 1, dtype=float)[:, None]
        jv = np.arange(J, dtype=float)[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = 4.0 * jv / (jv * jv - mm * mm)
        vals[(jv + mm) % 2 == 0] = 0.0
        _far_coeff_cache["C"] = C = vals.astype(complex)
    return C[:terms, :jcount]


def _plain_far_rows(m: np.ndarray, nmodes: int) -> np.ndarray:
    """Rows of int T_j/(s-z) ds / (2 pi i) via the inverse-Joukowski series."""
    z = np.atleast_1d(m)
    zeta = _zeta(z)
    sq = _sqrt_cut(z)
    jmax = nmodes  # need S_j for j up to nmodes (I_j uses S_{j+1})
    # series length from |zeta|; guarded for points very close to the cut
    amax = float(np.max(np.abs(zeta)))
    amax = min(amax, 0.985)
    terms = int(np.ceil(np.log(1e-17) / np.log(amax))) + 4 if amax > 0 else 4
    pw = np.multiply.accumulate(np.repeat(zeta[:, None], terms, axis=1), axis=1)
    sums = pw @ _far_coeffs(terms, jmax + 2)
    const = np.array([(1.0 - (-1.0) ** j) / j if j > 0 else 0.0 for j in range(jmax + 2)])
    S = -(sums + const[None, :]) / sq[:, None]
    S[:, 0] = 0.0
    Sm1 = -S[:, 1]
    rows = np.empty((len(z), nmodes), dtype=complex)
    for j in range(nmodes):
        lower = Sm1 if j == 0 else S[:, j - 1]
        rows[:, j] = 0.5 * (S[:, j + 1] - lower)
    return rows / (2j * np.pi)


# ---------------------------------------------------------------------------
# per-piece operator blocks (coefficients -> values of C[u])


def coeffs_to_values(piece: ContourPiece, coeffs: np.ndarray) -> np.ndarray:
    c = np.asarray(coeffs, dtype=complex)
    if isinstance(piece, Segment):
        th = piece.ref_angles()
        j = np.arange(piece.n)
        if piece.family == "chebu":
            V = np.sin(np.outer(th, j + 1))
        elif piece.family == "chebt":
            V = np.cos(np.outer(th, j)) / np.sin(th)[:, None]
        else:
            V = np.cos(np.outer(th, j))
        return np.tensordot(V, c, axes=(1, 0))
    if isinstance(piece, Circle) or isinstance(piece, Ellipse):
        if piece.sign > 0:
            return piece.n * np.fft.ifft(c, axis=0)
        return np.fft.fft(c, axis=0)
    raise CauchyError(f"unknown piece kind {piece!r}")


def values_to_coeffs(piece: ContourPiece, values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=complex)
    if isinstance(piece, Segment):
        th = piece.ref_angles()
        j = np.arange(piece.n)
        if piece.family == "chebu":
            S = np.sin(np.outer(th, j + 1))
            return (2.0 / (piece.n + 1)) * np.tensordot(S, v, axes=(1, 0))
        M = np.cos(np.outer(th, j))
        rhs = v * np.sin(th).reshape((piece.n,) + (1,) * (v.ndim - 1)) if piece.family == "chebt" else v
        flat = rhs.reshape(piece.n, -1)
        sol = np.linalg.solve(M, flat)
        return sol.reshape(v.shape)
    if isinstance(piece, Circle) or isinstance(piece, Ellipse):
        if piece.sign > 0:
            return np.fft.fft(v, axis=0) / piece.n
        return np.fft.ifft(v, axis=0)
    raise CauchyError(f"unknown piece kind {piece!r}")


def _modes(n: int) -> np.ndarray:
    return np.rint(np.fft.fftfreq(n) * n).astype(int)


def _circrow(v: np.ndarray, modes: np.ndarray) -> np.ndarray:
    """Cauchy rows for mode functions on the ccw unit circle at points v."""
    v = np.atleast_1d(v)
    out = np.zeros((len(v), len(modes)), dtype=complex)
    inside = np.abs(v) < 1.0
    pos = modes >= 0
    if np.any(inside):
        out[np.ix_(inside, pos)] = v[inside, None] ** modes[pos][None, :]
    if np.any(~inside):
        out[np.ix_(~inside, ~pos)] = -(v[~inside, None] ** modes[~pos][None, :])
    return out


def _ellipse_roots(piece: Ellipse, pts: np.ndarray):
    A, B = piece.A, piece.B
    q = piece.center - pts
    disc = np.sqrt(q * q - 4.0 * A * B)
    r1 = (-q - disc) / (2.0 * A)
    r2 = (-q + disc) / (2.0 * A)
    take1 = np.abs(r1) >= np.abs(r2)
    v1 = np.where(take1, r1, r2)
    bad = np.abs(v1) < 1e-14
    if np.any(bad):
        raise CauchyError("ellipse transform degenerate at evaluation point")
    v2 = B / (A * v1)
    return v1, v2


def transform_block(piece: ContourPiece, pts: np.ndarray) -> np.ndarray:
    """Matrix of C[basis_j](pts) for points off the piece."""
    pts = np.atleast_1d(np.asarray(pts, dtype=complex))
    if isinstance(piece, Segment):
        m = (pts - piece.mid) / piece.half
        j = np.arange(piece.n)
        if piece.family == "chebu":
            zeta = _zeta(m)
            return 0.5j * zeta[:, None] ** (j + 1)[None, :]
        if piece.family == "chebt":
            zeta = _zeta(m)
            return 0.5j * zeta[:, None] ** j[None, :] / _sqrt_cut(m)[:, None]
        # plain family: hybrid closed form / series
        out = np.empty((len(pts), piece.n), dtype=complex)
        zeta = _zeta(m)
        near = np.abs(zeta) >= _PLAIN_SPLIT
        if np.any(near):
            mn = _on_upper(m[near])
            L = np.log(mn - 1.0) - np.log(mn + 1.0)
            T = _cheb_t_all(mn, piece.n - 1)
            P = _plain_pi_all(mn, piece.n - 1)
            out[near] = (T * L[:, None] + P) / (2j * np.pi)
        if np.any(~near):
            out[~near] = _plain_far_rows(m[~near], piece.n)
        return out
    if isinstance(piece, Circle):
        modes = _modes(piece.n)
        kap = (pts - piece.center) / piece.radius
        return piece.sign * _circrow(kap, modes)
    if isinstance(piece, Ellipse):
        modes = _modes(piece.n)
        if abs(piece.B) < 1e-13 * piece.A:
            kap = (pts - piece.center) / piece.A
            return piece.sign * _circrow(kap, modes)
        v1, v2 = _ellipse_roots(piece, pts)
        A, B = piece.A, piece.B
        b1 = (A * v1 * v1 - B) / (A * v1 * (v1 - v2))
        b2 = (A * v2 * v2 - B) / (A * v2 * (v2 - v1))
        rows = b1[:, None] * _circrow(v1, modes) + b2[:, None] * _circrow(v2, modes)
        rows[:, modes == 0] -= 1.0
        return piece.sign * rows
    raise CauchyError(f"unknown piece kind {piece!r}")


def _segment_boundary(piece: Segment, th: np.ndarray, side: str) -> np.ndarray:
    j = np.arange(piece.n)
    sgn = 1.0 if side == PLUS else -1.0
    if piece.family == "chebu":
        return 0.5j * np.exp(-1j * sgn * np.outer(th, j + 1))
    if piece.family == "chebt":
        return sgn * np.exp(-1j * sgn * np.outer(th, j)) / (2.0 * np.sin(th)[:, None])
    x = np.cos(th)
    L = np.log((1.0 - x) / (1.0 + x)) + sgn * 1j * np.pi
    T = _cheb_t_all(x.astype(complex), piece.n - 1)
    P = _plain_pi_all(x.astype(complex), piece.n - 1)
    return (T * L[:, None] + P) / (2j * np.pi)


def _closed_boundary(piece, v: np.ndarray, side: str) -> np.ndarray:
    modes = _modes(piece.n)
    pos = modes >= 0
    v = np.atleast_1d(v)
    inner = np.zeros((len(v), piece.n), dtype=complex)
    outer = np.zeros((len(v), piece.n), dtype=complex)
    inner[:, pos] = v[:, None] ** modes[pos][None, :]
    outer[:, ~pos] = -(v[:, None] ** modes[~pos][None, :])
    # 'plus' is the left of travel: the curve interior for positive orientation
    if (side == PLUS) == (piece.sign > 0):
        vlimit = inner
    else:
        vlimit = outer
    if isinstance(piece, Circle) or abs(piece.B) < 1e-13 * piece.A:
        return piece.sign * vlimit
    w2 = piece.B / (piece.A * v)
    rows = _circrow(w2, modes)
    rows[:, modes == 0] -= 1.0
    return piece.sign * (rows + vlimit)


def boundary_block(piece: ContourPiece, side: str, params: np.ndarray = None) -> np.ndarray:
    """One-sided boundary values of C[basis_j] on the piece itself.

    ``params`` selects evaluation points: reference angles for segments,
    curve parameters in [0, 1) for closed pieces; defaults to the nodes.
    """
    if side not in (PLUS, MINUS):
        raise CauchyError("side must be 'plus' or 'minus'")
    if isinstance(piece, Segment):
        th = piece.ref_angles() if params is None else np.asarray(params, dtype=float)
        return _segment_boundary(piece, th, side)
    if isinstance(piece, (Circle, Ellipse)):
        if params is None:
            v = piece.vnodes() if isinstance(piece, Ellipse) else np.exp(
                2j * np.pi * piece.sign * np.arange(piece.n) / piece.n)
        else:
            v = np.exp(2j * np.pi * piece.sign * np.asarray(params, dtype=float))
        return _closed_boundary(piece, v, side)
    raise CauchyError(f"unknown piece kind {piece!r}")


def integral_row(piece: ContourPiece) -> np.ndarray:
    """Row of oriented line integrals of the basis functions."""
    if isinstance(piece, Segment):
        row = np.zeros(piece.n, dtype=complex)
        if piece.family == "chebu":
            row[0] = np.pi / 2.0
        elif piece.family == "chebt":
            row[0] = np.pi
        else:
            for j in range(piece.n):
                row[j] = _plain_mu(j)
        return piece.half * row
    modes = _modes(piece.n)
    row = np.zeros(piece.n, dtype=complex)
    if isinstance(piece, Circle):
        row[modes == -1] = 2j * np.pi * piece.sign * piece.radius
        return row
    if isinstance(piece, Ellipse):
        row[modes == -1] = 2j * np.pi * piece.sign * piece.A
        row[modes == 1] = -2j * np.pi * piece.sign * piece.B
        return row
    raise CauchyError(f"unknown piece kind {piece!r}")


# ---------------------------------------------------------------------------
# public evaluation API


def cauchy_eval(u: Density, contour: Contour, k) -> np.ndarray:
    """C[u](k) for k strictly off the contour (scalar or array)."""
    u.validate(contour)
    ks = np.atleast_1d(np.asarray(k, dtype=complex))
    s = max(contour.scale(), 1.0)
    for z in ks:
        if contour.distance(z) < 1e-9 * s:
            raise CauchyError("evaluation point on or too near the contour; "
                              "use cauchy_boundary for boundary values")
    comp = u.comp
    out = np.zeros((len(ks),) + comp, dtype=complex)
    for piece, c in zip(contour.pieces, u.coeffs):
        out += np.tensordot(transform_block(piece, ks), c, axes=(1, 0))
    if np.isscalar(k) or np.asarray(k).ndim == 0:
        return out[0]
    return out


def cauchy_boundary(u: Density, contour: Contour, side: str) -> np.ndarray:
    """One-sided boundary values at every node, concatenated piece by piece."""
    u.validate(contour)
    comp = u.comp
    out = np.zeros((contour.total(),) + comp, dtype=complex)
    offs = contour.offsets()
    for i, piece in enumerate(contour.pieces):
        block = np.tensordot(boundary_block(piece, side), u.coeffs[i], axes=(1, 0))
        for j, other in enumerate(contour.pieces):
            if j == i:
                continue
            block += np.tensordot(transform_block(other, piece.nodes()),
                                  u.coeffs[j], axes=(1, 0))
        out[offs[i]:offs[i + 1]] = block
    return out


def first_moment(u: Density, contour: Contour) -> np.ndarray:
    """lim k C[u](k) = -(1/2 pi i) \\oint u dz, componentwise."""
    u.validate(contour)
    out = np.zeros(u.comp, dtype=complex)
    for piece, c in zip(contour.pieces, u.coeffs):
        out += np.tensordot(integral_row(piece), c, axes=(0, 0))
    return -out / (2j * np.pi)
