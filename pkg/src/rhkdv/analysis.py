"""Field sampling and the derived experiments: windowed region spectra,
nonlocality difference fields, soliton peak tracking against background
bounds, PDE residual and mass diagnostics.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import dressing, rh_solver as rh, scenario as sc
from .special import ellipk


@dataclass(frozen=True)
class SampledField:
    x: np.ndarray
    t: float
    q: np.ndarray
    provenance: str

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        q = np.asarray(self.q, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "q", q)
        if x.ndim != 1 or x.shape != q.shape:
            raise ValueError("x and q must be matching 1-d arrays")
        if len(x) >= 2:
            dx = np.diff(x)
            if np.max(np.abs(dx - dx[0])) > 1e-9 * max(abs(dx[0]), 1e-12):
                raise ValueError("x grid is not uniform")

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0]) if len(self.x) > 1 else 0.0

    def gap_count(self) -> int:
        return int(np.sum(~np.isfinite(self.q)))


def scenario_hash(scn: sc.Scenario, extra: Optional[dict] = None) -> str:
    payload = {"scenario": json.loads(sc.dumps_scenario(scn))}
    if extra:
        payload["params"] = extra
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _point_value(scn: sc.Scenario, x: float, t: float) -> float:
    try:
        return dressing.reconstruct_q(scn, x, t)
    except (rh.RHSolverError, sc.ScenarioError, ValueError):
        return float("nan")


def _grid_worker(args):
    scn, xs, t = args
    return [_point_value(scn, x, t) for x in xs]


def thread_count() -> int:
    raw = os.environ.get("RHKDV_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"RHKDV_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def sample_grid(scn: sc.Scenario, x_range, h: float, t: float) -> SampledField:
    """q(x, t) on the uniform grid; solver failures become NaN gaps, and more
    than 1% gaps is treated as systematic failure."""
    x0, x1 = float(x_range[0]), float(x_range[1])
    h = float(h)
    if h <= 0:
        raise ValueError("grid spacing must be positive")
    if x1 < x0:
        raise ValueError("empty x range")
    npts = int(np.floor((x1 - x0) / h + 0.5)) + 1
    xs = x0 + h * np.arange(npts)

    workers = thread_count()
    if workers == 1 or npts < 8:
        q = np.array([_point_value(scn, x, t) for x in xs])
    else:
        chunks = np.array_split(np.arange(npts), workers * 4)
        jobs = [(scn, [float(xs[i]) for i in ch], t) for ch in chunks if len(ch)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_grid_worker, jobs))
        q = np.array([v for part in parts for v in part])

    gaps = int(np.sum(~np.isfinite(q)))
    if gaps > 0.01 * npts:
        raise rh.RHSolverError(
            f"systematic solver failure: {gaps}/{npts} grid points failed "
            f"[t={t}, x in [{x0}, {x1}]]")
    prov = scenario_hash(scn, {"x0": x0, "x1": x1, "h": h, "t": float(t)})
    return SampledField(xs, float(t), q, prov)


def _background_wavelength(scn: sc.Scenario) -> float:
    # the spatial period of the dominant background component; for a band
    # [a, b] the one-gap wave has modulus m = 1 - (a/b)^2 and period
    # 2K(m)/b, and the band with the widest gap b^2 - a^2 carries the
    # largest amplitude.  Reflection support or soliton width otherwise.
    if scn.genus is not None and scn.genus.bands:
        a, b = max(scn.genus.bands, key=lambda ab: ab[1] ** 2 - ab[0] ** 2)
        return float(2.0 * ellipk(1.0 - (a / b) ** 2) / b)
    if scn.reflection is not None:
        return float(np.pi / scn.reflection.k_max())
    if scn.solitons.kappas:
        return float(1.0 / max(scn.solitons.kappas))
    return 1.0


def soliton_phases(scn: sc.Scenario) -> list:
    return [sc.phase_of(k, c) for k, c in zip(scn.solitons.kappas, scn.solitons.cs)]


def asymptotic_regions(scn: sc.Scenario, t: float, x_range) -> list:
    """The n+2 asymptotic windows at time t, for n solitons: left of the
    dispersive wedge (x < 0 side), between consecutive soliton trajectories
    x = 4 kappa^2 t - phi, and right of the fastest soliton.  Each window is
    pulled back from its separating features by three background
    wavelengths."""
    t = float(t)
    if t < 0:
        raise ValueError("asymptotic regions are defined for t >= 0")
    x0, x1 = float(x_range[0]), float(x_range[1])
    traj = sorted(4.0 * k**2 * t - phi
                  for k, phi in zip(scn.solitons.kappas, soliton_phases(scn)))
    features = [0.0] + traj
    if any(b - a < 1e-9 for a, b in zip(features, features[1:])):
        raise ValueError("asymptotic regions collapse: separating features "
                         f"coincide at t={t}; evaluate at larger t")
    margin = 3.0 * _background_wavelength(scn)
    edges = [x0] + features + [x1]
    windows = []
    for i in range(len(edges) - 1):
        lo = edges[i] + (margin if i > 0 else 0.0)
        hi = edges[i + 1] - (margin if i + 1 < len(edges) - 1 else 0.0)
        if hi - lo <= 0:
            raise ValueError(
                f"asymptotic regions collapse: window {i} is empty at t={t} "
                f"(features {edges[1:-1]}, margin {margin:.3g}); "
                "evaluate at larger t or widen the x range")
        windows.append((lo, hi))
    return windows


@dataclass(frozen=True)
class SpectrumReport:
    window: tuple
    freqs: np.ndarray
    amps: np.ndarray
    fundamentals: tuple
    fundamental_amps: tuple


def _is_lattice_point(f: float, basis, bin_w: float, order: int = 4) -> bool:
    """Is f an integer combination (coefficients up to |order|) of basis?"""
    if not basis:
        return False
    if len(basis) == 1:
        n = round(f / basis[0])
        return abs(n) <= 2 * order and abs(f - n * basis[0]) < bin_w
    for n1 in range(-order, order + 1):
        for n2 in range(-order, order + 1):
            if abs(f - (n1 * basis[0] + n2 * basis[1])) < bin_w:
                return True
    return False


def region_spectrum(fld: SampledField, window) -> SpectrumReport:
    lo, hi = float(window[0]), float(window[1])
    mask = (fld.x >= lo - 1e-12) & (fld.x <= hi + 1e-12)
    n = int(np.sum(mask))
    if n < 64:
        raise ValueError(f"window [{lo}, {hi}] holds {n} samples; need >= 64")
    q = fld.q[mask]
    if not np.all(np.isfinite(q)):
        raise ValueError("window contains failed grid points")
    taper = np.hanning(n)
    qw = (q - np.mean(q)) * taper
    amps = np.abs(np.fft.rfft(qw))
    freqs = np.fft.rfftfreq(n, d=fld.h)
    bin_w = freqs[1] if len(freqs) > 1 else 0.0

    floor = 10.0 * np.median(amps[1:]) if len(amps) > 2 else np.inf
    peaks = []
    for i in range(1, len(amps) - 1):
        if amps[i] > floor and amps[i] >= amps[i - 1] and amps[i] >= amps[i + 1]:
            peaks.append(i)
    # keep, in amplitude order, only peaks that are not integer combinations
    # of already-accepted fundamentals (combination lines of a quasi-periodic
    # background land on the frequency lattice of its base frequencies)
    order = sorted(peaks, key=lambda i: -amps[i])
    basis = []
    basis_amp = []
    for i in order:
        if len(basis) >= 2:
            break
        if _is_lattice_point(freqs[i], basis, 1.5 * bin_w):
            continue
        basis.append(float(freqs[i]))
        basis_amp.append(float(amps[i]))
    sel = np.argsort(basis)
    fund = tuple(basis[j] for j in sel)
    fund_amp = tuple(basis_amp[j] for j in sel)
    return SpectrumReport((lo, hi), freqs, amps, fund, fund_amp)


def nonlocality_diff(scn_full: sc.Scenario, scn_background: sc.Scenario,
                     t: float, x_range, h: float):
    """Difference field full - background with RMS of its outer 20% edges."""
    fld2 = sample_grid(scn_full, x_range, h, t)
    fld1 = sample_grid(scn_background, x_range, h, t)
    if fld1.x.shape != fld2.x.shape or np.max(np.abs(fld1.x - fld2.x)) > 1e-12:
        raise ValueError("grid mismatch between full and background fields")
    diff = fld2.q - fld1.q
    n = len(diff)
    edge = max(1, int(0.2 * n))
    left_rms = float(np.sqrt(np.mean(diff[:edge] ** 2)))
    right_rms = float(np.sqrt(np.mean(diff[n - edge:] ** 2)))
    return SampledField(fld1.x, float(t), diff, fld2.provenance), left_rms, right_rms


def shift_match(fld_full: SampledField, fld_bg: SampledField, window,
                max_shift: float = 6.0):
    """min over s of RMS(q2(x) - q1(x + s)) over the window, by grid shifts."""
    lo, hi = float(window[0]), float(window[1])
    h = fld_full.h
    mask = (fld_full.x >= lo) & (fld_full.x <= hi)
    idx = np.where(mask)[0]
    if len(idx) < 8:
        raise ValueError("shift-match window too small")
    kmax = int(max_shift / h)
    best = (np.inf, 0.0)
    for k in range(-kmax, kmax + 1):
        src = idx + k
        if src[0] < 0 or src[-1] >= len(fld_bg.q):
            continue
        r = float(np.sqrt(np.mean((fld_full.q[idx] - fld_bg.q[src]) ** 2)))
        if r < best[0]:
            best = (r, k * h)
    return best  # (rms, shift)


@dataclass(frozen=True)
class PeakTrack:
    t: np.ndarray
    center: np.ndarray
    max_full: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    boundary_flags: np.ndarray
    kappa_m: float
    phi_m: float

    def lower_fraction(self) -> float:
        ok = self.max_full >= self.lower - 1e-12
        return float(np.mean(ok))

    def upper_fraction(self) -> float:
        ok = self.max_full <= self.upper + 1e-12
        return float(np.mean(ok))

    def max_overshoot(self) -> float:
        return float(np.max(self.max_full - self.upper))


_INTERVAL = 0.8


def _golden_max(f, lo: float, hi: float, coarse: int = 9, iters: int = 12):
    xs = np.linspace(lo, hi, coarse)
    vals = np.array([f(x) for x in xs])
    i = int(np.argmax(vals))
    if i == 0 or i == coarse - 1:
        return float(xs[i]), float(vals[i]), True
    a, b = xs[i - 1], xs[i + 1]
    gr = 0.5 * (3.0 - np.sqrt(5.0))
    x1, x2 = a + gr * (b - a), b - gr * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = b - gr * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = a + gr * (b - a)
            f1 = f(x1)
    xm = 0.5 * (x1 + x2)
    return float(xm), float(max(f1, f2)), False


def measure_phase(scn_solitons: sc.Scenario, m: int, t_far: float = 12.0) -> float:
    """Locate the m-th soliton peak at large t in a solitons-only run and
    convert it to the trajectory offset phi with x_peak = 4 kappa^2 t - phi."""
    kap = scn_solitons.solitons.kappas[m]
    guess = 4.0 * kap**2 * t_far - sc.phase_of(kap, scn_solitons.solitons.cs[m])
    f = lambda x: _point_value(scn_solitons, x, t_far)
    x_pk, _, on_edge = _golden_max(f, guess - 1.5, guess + 1.5, coarse=13, iters=18)
    if on_edge:
        raise ValueError("soliton peak not found near its predicted trajectory")
    return 4.0 * kap**2 * t_far - x_pk


def peak_track(scn_full: sc.Scenario, t_grid) -> PeakTrack:
    """Track the fastest soliton's peak against the background bounds
    max/min over I_m(t) of q_fg + 2 kappa_m^2."""
    if not scn_full.solitons.kappas:
        raise ValueError("peak tracking requires at least one soliton")
    if scn_full.genus is None:
        raise ValueError("peak tracking requires a genus background")
    if scn_full.reflection is not None:
        raise ValueError("peak tracking requires the reflection removed")
    m = len(scn_full.solitons.kappas) - 1  # kappas increase
    kap = float(scn_full.solitons.kappas[m])

    scn_sol = sc.Scenario(solitons=scn_full.solitons, numerics=scn_full.numerics)
    phi_m = measure_phase(scn_sol, m)
    scn_bg = sc.Scenario(genus=scn_full.genus, numerics=scn_full.numerics)

    ts = np.asarray(t_grid, dtype=float)
    centers = np.empty_like(ts)
    max_full = np.empty_like(ts)
    upper = np.empty_like(ts)
    lower = np.empty_like(ts)
    flags = np.zeros(ts.shape, dtype=bool)
    for i, t in enumerate(ts):
        c = 4.0 * kap**2 * t - phi_m
        lo, hi = c - 0.5 * _INTERVAL, c + 0.5 * _INTERVAL
        centers[i] = c
        _, mf, on_edge = _golden_max(lambda x: _point_value(scn_full, x, t), lo, hi)
        max_full[i] = mf
        flags[i] = on_edge
        xs = np.linspace(lo, hi, 17)
        bg = np.array([_point_value(scn_bg, x, t) for x in xs])
        if not np.all(np.isfinite(bg)):
            raise rh.RHSolverError(f"background solve failed inside I_m at t={t}")
        upper[i] = float(np.max(bg)) + 2.0 * kap**2
        lower[i] = float(np.min(bg)) + 2.0 * kap**2
    return PeakTrack(ts, centers, max_full, upper, lower, flags, kap, phi_m)


def kdv_residual(fld_prev: SampledField, fld_mid: SampledField,
                 fld_next: SampledField) -> float:
    """max over interior points of |q_t + 6 q q_x + q_xxx|, 4th order in x,
    2nd order in t."""
    for f in (fld_prev, fld_next):
        if f.x.shape != fld_mid.x.shape or np.max(np.abs(f.x - fld_mid.x)) > 1e-12:
            raise ValueError("misaligned grids in kdv_residual")
    dt1 = fld_mid.t - fld_prev.t
    dt2 = fld_next.t - fld_mid.t
    if abs(dt1 - dt2) > 1e-12 * max(abs(dt1), 1e-12) or dt1 <= 0:
        raise ValueError("time stack must be equispaced and increasing")
    h = fld_mid.h
    q = fld_mid.q
    if len(q) < 7:
        raise ValueError("grid too short for the interior stencil")
    qt = (fld_next.q - fld_prev.q) / (2.0 * dt1)
    i = np.arange(3, len(q) - 3)
    qx = (q[i - 2] - 8 * q[i - 1] + 8 * q[i + 1] - q[i + 2]) / (12.0 * h)
    qxxx = (q[i - 3] - 8 * q[i - 2] + 13 * q[i - 1]
            - 13 * q[i + 1] + 8 * q[i + 2] - q[i + 3]) / (8.0 * h**3)
    r = qt[i] + 6.0 * q[i] * qx + qxxx
    if not np.all(np.isfinite(r)):
        raise ValueError("residual stencil hit failed grid points")
    return float(np.max(np.abs(r)))


def conserved_mass(fld: SampledField, tail_tol: float = 1e-4) -> float:
    """Trapezoidal integral of a decaying field."""
    if not np.all(np.isfinite(fld.q)):
        raise ValueError("field contains failed grid points")
    if abs(fld.q[0]) > tail_tol or abs(fld.q[-1]) > tail_tol:
        raise ValueError(
            f"non-decaying tails: |q| = {abs(fld.q[0]):.2e}, "
            f"{abs(fld.q[-1]):.2e} at the range ends")
    return float(np.trapezoid(fld.q, fld.x))
