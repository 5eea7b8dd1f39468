"""In-repo special functions: Airy Ai, elliptic integrals and Jacobi functions.

Everything here is real-argument and self-contained so that reference
solutions do not depend on library special functions. Accuracy targets are
set by the tests (scipy is used there as an independent oracle only).
"""

from __future__ import annotations

import numpy as np

# Ai(0) = 3^(-2/3)/Gamma(2/3), Ai'(0) = -3^(-1/3)/Gamma(1/3)
_AI0 = 0.3550280538878172392600631860041831763980
_AIP0 = 0.2588194037928067984051835601892039634793

# Maclaurin series up to these radii, Poincare asymptotics beyond; the two
# branches cross where their float64 error floors meet.  For z > 0 the series
# cancels like eps*exp(4/3 z^{3/2}) against a tiny result, so it must hand
# over early (both branches ~1e-8 relative, ~1e-12 absolute, near 5.9); for
# z < 0 the series only cancels like eps*exp(2/3 |z|^{3/2}) against an O(1)
# oscillation while the asymptotic floor exp(-4/3 |z|^{3/2}) needs |z| large,
# so the crossover sits near 8 (both ~1e-11 absolute there).
_AIRY_SWITCH_POS = 5.9
_AIRY_SWITCH_NEG = 8.0


def _ai_series(z: np.ndarray) -> np.ndarray:
    # Ai(z) = AI0 * f(z) - AIP0 * g(z), f and g the standard 3-term series
    z3 = z * z * z
    f_term = np.ones_like(z)
    g_term = z.copy()
    f_sum = f_term.copy()
    g_sum = g_term.copy()
    for k in range(90):
        f_term = f_term * z3 / ((3 * k + 2) * (3 * k + 3))
        g_term = g_term * z3 / ((3 * k + 3) * (3 * k + 4))
        f_sum += f_term
        g_sum += g_term
        if np.all(np.abs(f_term) + np.abs(g_term) < 1e-20 * (np.abs(f_sum) + np.abs(g_sum) + 1e-30)):
            break
    return _AI0 * f_sum - _AIP0 * g_sum


def _asym_u(count: int) -> np.ndarray:
    # u_0 = 1, u_{k+1} = u_k (6k+1)(6k+5) / (72 (k+1))
    u = np.empty(count)
    u[0] = 1.0
    for k in range(count - 1):
        u[k + 1] = u[k] * (6 * k + 1) * (6 * k + 5) / (72.0 * (k + 1))
    return u


_ASYM_U = _asym_u(26)


def _ai_asym_pos(z: np.ndarray) -> np.ndarray:
    zeta = (2.0 / 3.0) * z ** 1.5
    s = np.ones_like(z)
    term = np.ones_like(z)
    active = np.ones_like(z, dtype=bool)
    for k in range(1, len(_ASYM_U)):
        new_term = _ASYM_U[k] * (-1.0) ** k / zeta ** k
        # stop summing once terms start growing (optimal truncation)
        active &= np.abs(new_term) < np.abs(term) + 1e-300
        s = np.where(active, s + new_term, s)
        term = new_term
    return np.exp(-zeta) / (2.0 * np.sqrt(np.pi) * z ** 0.25) * s


def _ai_asym_neg(z: np.ndarray) -> np.ndarray:
    # z > 0 here, evaluates Ai(-z)
    zeta = (2.0 / 3.0) * z ** 1.5
    even = np.ones_like(z)
    odd = np.zeros_like(z)
    active = np.ones_like(z, dtype=bool)
    prev = np.ones_like(z)
    for k in range(1, len(_ASYM_U)):
        term = _ASYM_U[k] * (-1.0) ** (k // 2) / zeta ** k
        active &= np.abs(term) < np.abs(prev) + 1e-300
        if k % 2 == 0:
            even = np.where(active, even + term, even)
        else:
            odd = np.where(active, odd + term, odd)
        prev = term
    phase = zeta - np.pi / 4.0
    return (np.cos(phase) * even + np.sin(phase) * odd) / (np.sqrt(np.pi) * z ** 0.25)


def airy_ai(z):
    """Airy function Ai for real arguments (scalar or array)."""
    arr = np.asarray(z, dtype=float)
    scalar = arr.ndim == 0
    x = np.atleast_1d(arr).astype(float)
    out = np.empty_like(x)
    small = ((x >= 0) & (x <= _AIRY_SWITCH_POS)) | ((x < 0) & (x >= -_AIRY_SWITCH_NEG))
    if np.any(small):
        out[small] = _ai_series(x[small])
    big_pos = (~small) & (x > 0)
    if np.any(big_pos):
        out[big_pos] = _ai_asym_pos(x[big_pos])
    big_neg = (~small) & (x < 0)
    if np.any(big_neg):
        out[big_neg] = _ai_asym_neg(-x[big_neg])
    return float(out[0]) if scalar else out


def agm(a: float, b: float) -> float:
    """Arithmetic-geometric mean of two nonnegative numbers."""
    if a < 0 or b < 0:
        raise ValueError("agm requires nonnegative arguments")
    if a == 0 or b == 0:
        return 0.0
    for _ in range(64):
        an = 0.5 * (a + b)
        b = np.sqrt(a * b)
        a = an
        if abs(a - b) <= 4e-16 * abs(a):
            break
    return 0.5 * (a + b)


def ellipk(m: float) -> float:
    """Complete elliptic integral of the first kind, parameter m in [0, 1)."""
    if not 0.0 <= m < 1.0:
        raise ValueError("ellipk requires 0 <= m < 1")
    return np.pi / (2.0 * agm(1.0, np.sqrt(1.0 - m)))


def jacobi_sn_cn_dn(u, m: float):
    """Jacobi elliptic sn, cn, dn for real u and parameter m in [0, 1].

    Descending Landen (AGM) recursion; dn is recovered from sn to avoid the
    phase-difference formula's sign pitfalls.
    """
    if not 0.0 <= m <= 1.0:
        raise ValueError("jacobi functions require 0 <= m <= 1")
    arr = np.asarray(u, dtype=float)
    scalar = arr.ndim == 0
    x = np.atleast_1d(arr).astype(float)
    if m < 1e-14:
        sn, cn, dn = np.sin(x), np.cos(x), np.ones_like(x)
    elif m > 1.0 - 1e-14:
        sn, cn = np.tanh(x), 1.0 / np.cosh(x)
        dn = cn.copy()
    else:
        a = [1.0]
        c = [np.sqrt(m)]
        b = np.sqrt(1.0 - m)
        while c[-1] > 1e-17:
            a.append(0.5 * (a[-1] + b))
            c.append(0.5 * (a[-2] - b))
            b = np.sqrt(a[-2] * b)
            if len(a) > 32:
                break
        n = len(a) - 1
        phi = (2.0 ** n) * a[n] * x
        for i in range(n, 0, -1):
            s = np.clip(c[i] * np.sin(phi) / a[i], -1.0, 1.0)
            phi = 0.5 * (phi + np.arcsin(s))
        sn = np.sin(phi)
        cn = np.cos(phi)
        dn = np.sqrt(np.maximum(1.0 - m * sn * sn, 0.0))
    if scalar:
        return float(sn[0]), float(cn[0]), float(dn[0])
    return sn, cn, dn
