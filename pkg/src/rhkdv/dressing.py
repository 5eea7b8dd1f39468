"""Phase, symmetry checks, field reconstruction and Lax-pair residuals.

The jump data is dressed with e^{-theta sigma3} (.) e^{theta sigma3} where
theta(k) = ikx + 4ik^3t. A jump family satisfying the three symmetry
conditions (unit determinant, Schwarz reflection, sigma2 involution)
produces a real field

    Q(x,t) = 2i lim k d/dx Phi(k) sigma3   (both entries agree)

and Phi satisfies a Lax pair in (x,t) whose residuals are checkable
numerically. Residuals can be formed two ways: central finite differences
of Phi in x and t (steps 1e-4), or re-solves of the differentiated jump
relation reusing the factorization (no step-size floor).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import cauchy_kernel as ck
from . import geometry as geo
from . import rh_solver as rh

SIGMA3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA2 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


def theta(k, x: float, t: float):
    """theta(k) = ikx + 4ik^3t."""
    k = np.asarray(k, dtype=complex)
    return 1j * k * x + 4j * k**3 * t


@dataclass(frozen=True)
class ThetaPhase:
    x: float
    t: float

    def __call__(self, k):
        return theta(k, self.x, self.t)

    def dk(self, k):
        k = np.asarray(k, dtype=complex)
        return 1j * self.x + 12j * k**2 * self.t

    def dx(self, k):
        return 1j * np.asarray(k, dtype=complex)

    def dt(self, k):
        k = np.asarray(k, dtype=complex)
        return 4j * k**3


@dataclass(frozen=True)
class PauliPair:
    sigma3: np.ndarray = None
    sigma2: np.ndarray = None

    def __post_init__(self):
        if self.sigma3 is None:
            object.__setattr__(self, "sigma3", SIGMA3.copy())
        if self.sigma2 is None:
            object.__setattr__(self, "sigma2", SIGMA2.copy())


def stationary_point(x: float, t: float) -> Optional[float]:
    """Real k0 >= 0 with theta'(k0) = 0, or None if none exists."""
    if t == 0.0:
        raise ValueError("stationary point undefined at t = 0")
    if x == 0.0:
        return 0.0
    if x / t < 0.0:
        return float(np.sqrt(-x / (12.0 * t)))
    return None


@dataclass
class SymmetryReport:
    det_deviation: float
    schwarz_deviation: float
    involution_deviation: float

    def max_deviation(self) -> float:
        return max(self.det_deviation, self.schwarz_deviation,
                   self.involution_deviation)

    def ok(self, tol: float = 1e-10) -> bool:
        return self.max_deviation() < tol


def validate_symmetries(problem: rh.RHProblem) -> SymmetryReport:
    """Deviations of det V = 1, conj(V(kbar)) = V(-k), V^-1 = s2 conj(V(kbar)) s2.

    Sampled at every node; the conjugate and negated points land on the
    partner pieces of a Schwarz- and negation-symmetric contour, where the
    partner's jump callable is evaluated directly.
    """
    contour = problem.contour
    if not contour.pieces:
        return SymmetryReport(0.0, 0.0, 0.0)
    mirror = geo.mirror_map(contour)
    neg = geo.neg_map(contour)
    if mirror is None or neg is None:
        raise ValueError("contour lacks conjugation or negation pairings")
    # Pieces carrying a conjugated encoding (band ellipses) certify the
    # conjugating family instead of the jump for the third relation; the
    # conjugator intertwines the involution without inversion, i.e.
    # W(k) = s2 conj(W(kbar)) s2, while its inverse is the actual jump.
    inv_spec = problem.meta.get("involution")
    dev_det = dev_schwarz = dev_inv = 0.0
    for i, piece in enumerate(contour.pieces):
        k = piece.nodes()
        V = np.asarray(problem.jumps[i](k), dtype=complex)
        det = V[:, 0, 0] * V[:, 1, 1] - V[:, 0, 1] * V[:, 1, 0]
        dev_det = max(dev_det, float(np.max(np.abs(det - 1.0))))
        Vc = np.asarray(problem.jumps[mirror[i]](np.conj(k)), dtype=complex)
        Vn = np.asarray(problem.jumps[neg[i]](-k), dtype=complex)
        dev_schwarz = max(dev_schwarz, float(np.max(np.abs(np.conj(Vc) - Vn))))
        if inv_spec is not None:
            kind, f = inv_spec[i]
            _, fc = inv_spec[mirror[i]]
            W = np.asarray(f(k), dtype=complex)
            Wc = np.asarray(fc(np.conj(k)), dtype=complex)
        else:
            kind, W, Wc = "jump", V, Vc
        rhs = np.einsum("ab,mbc,cd->mad", SIGMA2, np.conj(Wc), SIGMA2)
        if kind == "conjugator":
            dev_inv = max(dev_inv, float(np.max(np.abs(W - rhs))))
        else:
            detw = W[:, 0, 0] * W[:, 1, 1] - W[:, 0, 1] * W[:, 1, 0]
            Winv = np.empty_like(W)
            Winv[:, 0, 0] = W[:, 1, 1]
            Winv[:, 1, 1] = W[:, 0, 0]
            Winv[:, 0, 1] = -W[:, 0, 1]
            Winv[:, 1, 0] = -W[:, 1, 0]
            Winv /= detw[:, None, None]
            dev_inv = max(dev_inv, float(np.max(np.abs(Winv - rhs))))
    return SymmetryReport(dev_det, dev_schwarz, dev_inv)


def _compose(scenario, x: float, t: float) -> rh.RHProblem:
    from . import scenario as scenario_mod
    return scenario_mod.compose(scenario, x, t)


def _q_from_moment(s1x: np.ndarray) -> complex:
    # both entries of 2i k dPhi/dx sigma3 converge to Q; averaging them
    # cancels the component-symmetric part of the numerical error
    return 1j * (s1x[0] - s1x[1])


def reconstruct_q(scenario, x: float, t: float, *, imag_tol: float = 1e-8) -> float:
    """Field value Q(x,t) from the large-k moment of the x-derivative solve."""
    prob = _compose(scenario, x, t)
    if prob.contour.total() == 0:
        return 0.0
    sol = rh.solve(prob, fail_residual=prob.meta.get("tol", 1e-6))
    solx = rh.solve_x_derivative(sol, prob)
    s1x = rh.asymptotic_coefficient(solx, prob.contour)
    q = _q_from_moment(s1x)
    if abs(q.imag) > imag_tol:
        raise rh.RHSolverError(
            f"reconstructed field has imaginary part {q.imag:.3e}",
            x=x, t=t, residual=sol.residual, cond=sol.cond,
            piece_sizes=prob.contour.counts())
    return float(q.real)


def _solve_family(scenario, x: float, t: float):
    """Solution plus exact x-, xx- and t-derivative solves at one point."""
    prob = _compose(scenario, x, t)
    sol = rh.solve(prob, fail_residual=prob.meta.get("tol", 1e-6))
    solx = rh.solve_derivative(sol, prob, "x")
    solxx = rh.solve_derivative(sol, prob, "xx")
    solt = rh.solve_derivative(sol, prob, "t")
    return prob, sol, solx, solxx, solt


def _phi_at(sol, prob, k):
    return rh.evaluate_phi(sol, prob, k)


def _deriv_phi_at(dsol, prob, k):
    # derivative solutions have zero value at infinity
    if not dsol.density.coeffs:
        return np.zeros(2, dtype=complex)
    return ck.cauchy_eval(dsol.density, prob.contour, k)


def lax_residual(scenario, x: float, t: float, k: complex, *,
                 method: str = "fd", step: float = 1e-4):
    """Residual norms (r1, r2) of the two Lax equations at a point k off Gamma.

    method "fd" uses central differences of Phi in x and t with the given
    step; method "exact" re-solves the differentiated jump relations with
    the same factorization, which has no step-size error floor.
    """
    prob0 = _compose(scenario, x, t)
    if prob0.contour.total() > 0:
        d = prob0.contour.distance(complex(k))
        if d <= 0.1:
            raise ValueError(f"evaluation point too close to the contour ({d:.3g})")
    kk = complex(k)

    if method == "exact":
        prob, sol, solx, solxx, solt = _solve_family(scenario, x, t)
        phi = _phi_at(sol, prob, kk)
        phix = _deriv_phi_at(solx, prob, kk)
        phixx = _deriv_phi_at(solxx, prob, kk)
        phit = _deriv_phi_at(solt, prob, kk)
        s1x = rh.asymptotic_coefficient(solx, prob.contour) if solx.density.coeffs else np.zeros(2, complex)
        s1xx = rh.asymptotic_coefficient(solxx, prob.contour) if solxx.density.coeffs else np.zeros(2, complex)
        Q = _q_from_moment(s1x)
        Qx = _q_from_moment(s1xx)
    elif method == "fd":
        h = step

        def phi_of(xx, tt):
            p = _compose(scenario, xx, tt)
            s = rh.solve(p, fail_residual=p.meta.get("tol", 1e-6))
            return rh.evaluate_phi(s, p, kk)

        phi = phi_of(x, t)
        pxp = phi_of(x + h, t)
        pxm = phi_of(x - h, t)
        ptp = phi_of(x, t + h)
        ptm = phi_of(x, t - h)
        phix = (pxp - pxm) / (2 * h)
        phixx = (pxp - 2 * phi + pxm) / h**2
        phit = (ptp - ptm) / (2 * h)
        Q = complex(reconstruct_q(scenario, x, t))
        Qx = complex(reconstruct_q(scenario, x + h, t)
                     - reconstruct_q(scenario, x - h, t)) / (2 * h)
    else:
        raise ValueError("method must be 'fd' or 'exact'")

    # row-vector form of the Lax pair
    r1vec = -phixx + 2j * kk * (phix @ SIGMA3) - Q * phi
    r2vec = (-phit + 4j * kk**3 * (phi @ SIGMA3)
             - (2 * Q - 4 * kk**2) * (phix - 1j * kk * (phi @ SIGMA3))
             + Qx * phi)
    return float(np.linalg.norm(r1vec)), float(np.linalg.norm(r2vec))
