"""Reference solutions: linear contour integrals, exact N-soliton and
cnoidal waves.

Everything here is independent of the solver stack (no collocation, no
jump matrices), so these routines serve as ground truth for it: contour
integrals by composite Gauss-Legendre panels with doubling, solitons by a
stabilized tau-function subset sum, the cnoidal wave through the AGM
elliptic machinery in `special`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import geometry as geo
from .special import airy_ai, ellipk, jacobi_sn_cn_dn

QUAD_TOL = 1e-10

# an open endpoint is a truncation of an infinite tail unless another piece
# continues there; the integrand must have died off by then
_TAIL_RATIO = 1e-12

_MAX_PANELS = 1 << 14


class LinearQuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class EhrenpreisData:
    """Spectral density f and the contour it is integrated over."""

    f: Callable[[np.ndarray], np.ndarray]
    contour: tuple

    def __init__(self, f, contour):
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "contour", tuple(contour))
        if not self.contour:
            raise ValueError("empty contour")
        for p in self.contour:
            if not isinstance(p, geo.ContourPiece):
                raise TypeError("contour entries must be ContourPiece")


def _gl_rule(n: int, _cache={}):
    if n not in _cache:
        _cache[n] = np.polynomial.legendre.leggauss(n)
    return _cache[n]


def _piece_param(piece):
    """Return (s -> z, s -> dz/ds, closed) over s in [0, 1]."""
    if isinstance(piece, geo.Segment):
        span = piece.b - piece.a

        def dz_seg(s):
            return np.full(np.shape(np.asarray(s, float)), span, dtype=complex)
        return piece.point_at, dz_seg, False
    if isinstance(piece, geo.Circle):
        w = 2j * np.pi * piece.sign

        def dz(s):
            return w * piece.radius * np.exp(w * np.asarray(s, float))
        return piece.point_at, dz, True
    if isinstance(piece, geo.Ellipse):
        w = 2j * np.pi * piece.sign

        def dz(s):
            v = np.exp(w * np.asarray(s, float))
            return w * (piece.A * v - piece.B / v)
        return piece.point_at, dz, True
    raise TypeError(f"unsupported piece type {type(piece).__name__}")


def _free_ends(contour):
    """Segment endpoints not shared with any other piece endpoint."""
    ends = []
    for i, p in enumerate(contour):
        if isinstance(p, geo.Segment):
            ends.append((i, 0.0, p.a))
            ends.append((i, 1.0, p.b))
    out = []
    for i, s, z in ends:
        shared = any(abs(z - z2) < 1e-12 * max(1.0, abs(z), abs(z2))
                     for j, _, z2 in ends if j != i)
        if not shared:
            out.append((i, s, z))
    return out


def _integrand(data: EhrenpreisData, x: float, t: float):
    def g(k):
        k = np.asarray(k, dtype=complex)
        return np.asarray(data.f(k), dtype=complex) * np.exp(1j * k * x + 1j * k**3 * t)
    return g


def linear_solution(data: EhrenpreisData, x: float, t: float) -> complex:
    """Integrate f(k) e^{ikx + ik^3 t} over the contour to QUAD_TOL."""
    x = float(x)
    t = float(t)
    g = _integrand(data, x, t)

    # truncation-tail check: sample each piece, every free endpoint value
    # must be negligible against the piece peak
    peaks = []
    svals = np.linspace(0.0, 1.0, 257)
    for p in data.contour:
        zfun, _, _ = _piece_param(p)
        peaks.append(float(np.max(np.abs(g(zfun(svals))))))
    peak = max(max(peaks), 1e-300)
    for i, s, z in _free_ends(data.contour):
        mag = float(np.abs(g(np.asarray([z]))[0]))
        if mag > _TAIL_RATIO * peak:
            raise LinearQuadratureError(
                "tail not decaying at contour endpoint "
                f"{z:.6g} (|integrand| = {mag:.3e}, peak = {peak:.3e})")

    tol_piece = QUAD_TOL / (2.0 * len(data.contour))
    total = 0.0 + 0.0j
    for p in data.contour:
        zfun, dz, closed = _piece_param(p)
        if closed:
            n = 64
            prev = None
            val = None
            while n <= (_MAX_PANELS * 16):
                s = np.arange(n) / n
                val = complex(np.sum(g(zfun(s)) * dz(s)) / n)
                if prev is not None and abs(val - prev) < tol_piece:
                    break
                prev = val
                n *= 2
            else:
                raise LinearQuadratureError("contour quadrature did not converge on a closed piece")
            total += val
            continue

        s = np.linspace(0.0, 1.0, 257)
        ph = zfun(s) * x + zfun(s) ** 3 * t
        cycles = float(np.sum(np.abs(np.diff(ph)))) / (2.0 * np.pi)
        panels = max(4, int(np.ceil(cycles / 3.0)))
        xg, wg = _gl_rule(16)
        prev = None
        while panels <= _MAX_PANELS:
            edges = np.linspace(0.0, 1.0, panels + 1)
            mids = 0.5 * (edges[:-1] + edges[1:])
            half = 0.5 * (edges[1] - edges[0])
            ss = (mids[:, None] + half * xg[None, :]).ravel()
            ww = (half * np.broadcast_to(wg, (panels, len(wg)))).ravel()
            val = complex(np.sum(g(zfun(ss)) * dz(ss) * ww))
            if prev is not None and abs(val - prev) < tol_piece:
                break
            prev = val
            panels *= 2
        else:
            raise LinearQuadratureError(
                f"contour quadrature did not converge ({panels // 2} panels)")
        total += val
    return complex(total)


class AiryCheck(NamedTuple):
    quadrature: complex
    reference: float


def airy_identity(x: float, t: float) -> AiryCheck:
    """Evaluate the bare oscillatory integral on decay rays and compare it
    with its closed form 2 pi (3t)^{-1/3} Ai(x (3t)^{-1/3})."""
    x = float(x)
    t = float(t)
    if t <= 0.0:
        raise ValueError("airy_identity requires t > 0")
    # rays at angles pi/6 and 5 pi/6 turn e^{ik^3 t} into pure decay e^{-r^3 t};
    # pick the radius so the integrand is ~e^{-40} at the truncation
    R = (40.0 / t) ** (1.0 / 3.0)
    for _ in range(20):
        R = ((40.0 + 0.5 * abs(x) * R) / t) ** (1.0 / 3.0)
    ray_in = geo.make_segment(R * np.exp(5j * np.pi / 6.0), 0.0, 8)
    ray_out = geo.make_segment(0.0, R * np.exp(1j * np.pi / 6.0), 8)
    data = EhrenpreisData(lambda k: np.ones_like(k), (ray_in, ray_out))
    val = linear_solution(data, x, t)
    s = (3.0 * t) ** (-1.0 / 3.0)
    ref = 2.0 * np.pi * s * airy_ai(x * s)
    return AiryCheck(val, float(ref))


def _soliton_terms(kappas, phis, t: float):
    kap = np.asarray(kappas, dtype=float)
    phi = np.asarray(phis, dtype=float)
    if kap.ndim != 1 or kap.shape != phi.shape:
        raise ValueError("kappa and phase lists must match")
    if np.any(kap <= 0):
        raise ValueError("kappa must be positive")
    if np.any(np.diff(kap) <= 0):
        raise ValueError("kappa not increasing")
    n = len(kap)
    if n > 20:
        raise ValueError("too many solitons for the subset-sum route")
    pairln = np.zeros((n, n))
    for l in range(n):
        for j in range(l + 1, n):
            pairln[l, j] = 2.0 * np.log(abs((kap[l] - kap[j]) / (kap[l] + kap[j])))
    masks = np.arange(1 << n)
    members = (masks[:, None] >> np.arange(n)[None, :]) & 1  # (2^n, n)
    ksum = members @ kap
    base = np.einsum("sl,sj,lj->s", members, members, pairln)
    aoff = members @ (kap * (phi - 4.0 * kap**2 * t))
    return ksum, base, aoff


def nsoliton_exact(kappas: Sequence[float], phis: Sequence[float], x, t: float):
    """Exact N-soliton field from the tau-function determinant.

    tau = sum over index subsets S of exp(A_S), a sum of positive terms
    (Cauchy-determinant expansion), so q = 2 (log tau)_xx = 8 Var_p(K_S)
    under the softmax weights p_S; stable at any (x, t).
    """
    t = float(t)
    xa = np.asarray(x, dtype=float)
    scalar = xa.ndim == 0
    xv = np.atleast_1d(xa)
    if len(np.asarray(kappas)) == 0:
        out = np.zeros_like(xv)
        return float(out[0]) if scalar else out
    ksum, base, aoff = _soliton_terms(kappas, phis, t)
    A = base[None, :] - 2.0 * (aoff[None, :] + ksum[None, :] * xv[:, None])
    A -= A.max(axis=1, keepdims=True)
    w = np.exp(A)
    w /= w.sum(axis=1, keepdims=True)
    mean = w @ ksum
    second = w @ ksum**2
    q = 8.0 * (second - mean**2)
    return float(q[0]) if scalar else q


def cnoidal_exact(m: float, gamma: float, u0: float, x0: float, x, t: float):
    """Traveling cnoidal wave q = u0 + 2 m gamma^2 cn^2(gamma (x - v t - x0); m)
    with v = 6 u0 + 4 (2m - 1) gamma^2."""
    if not 0.0 <= m < 1.0:
        raise ValueError("cnoidal modulus must satisfy 0 <= m < 1")
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    v = 6.0 * u0 + 4.0 * (2.0 * m - 1.0) * gamma**2
    u = gamma * (np.asarray(x, dtype=float) - v * float(t) - x0)
    _, cn, _ = jacobi_sn_cn_dn(u, m)
    return u0 + 2.0 * m * gamma**2 * np.asarray(cn) ** 2 if np.ndim(x) else \
        float(u0 + 2.0 * m * gamma**2 * cn**2)


def cnoidal_from_band(a: float, b: float, omega: float = 0.0):
    """Cnoidal parameters (m, gamma, u0, x0) of the one-band background.

    A band [a, b] with 0 < a < b opens the spectral gap [a^2, b^2], whose
    one-gap wave has modulus m = 1 - (a/b)^2, wavenumber scale gamma = b and
    trough level u0 = a^2 - b^2 (so q oscillates between -+(b^2 - a^2) and
    the gap edge b^2 maps to the continuum edge).  The band phase advances
    the profile by omega/(2 pi) of a period from the omega = 0 crest at
    three quarters of a period.
    """
    if not 0.0 < a < b:
        raise ValueError("band must satisfy 0 < a < b")
    m = 1.0 - (a / b) ** 2
    gamma = b
    u0 = a * a - b * b
    period = 2.0 * ellipk(m) / gamma
    x0 = (0.75 + omega / (2.0 * np.pi)) * period
    return m, gamma, u0, x0
