"""Shift-and-invert residual iteration baseline.

One LU factorization at the fixed shift serves every iteration. Each step
takes a scalar Newton update of the eigenvalue along the functional
g(mu) = c^H M(sigma)^{-1} M(mu) v (evaluated without further solves through
the precomputed adjoint vector M(sigma)^{-H} c), then one preconditioned
residual correction of the eigenvector, then a rescale to c^H v = 1.
Convergence is linear with a rate set by the shift-to-eigenvalue distance,
which is the plateau the quasi-Newton solvers are benchmarked against.
"""

import time
from dataclasses import dataclass

import numpy as np

from .broyden import BroydenBreakdown, SolverOptions
from .history import ConvergenceHistory
from .linalg import LuFactorization, eig_smallest


@dataclass
class ResinvState:
    v: np.ndarray
    lam: complex
    lu: LuFactorization
    ctilde: np.ndarray
    k: int = 0


def resinv_init(nep, c, sigma, v0, lam0=None, M_sigma=None):
    """Factor M(sigma) once and precompute the adjoint functional vector.

    Raises "singular matrix" when sigma hits an eigenvalue at working
    precision. v0 is rescaled to c^H v0 = 1.
    """
    m = nep.assemble(sigma) if M_sigma is None else M_sigma
    lu = LuFactorization(m)
    ctilde = lu.solve(np.asarray(c), adjoint=True)
    v0 = np.asarray(v0)
    alpha = np.vdot(c, v0)
    if abs(alpha) < 1e-12 * np.linalg.norm(v0):
        raise ValueError("normalization vector orthogonal to candidate")
    lam = sigma if lam0 is None else lam0
    return ResinvState(v=v0 / alpha, lam=complex(lam), lu=lu, ctilde=ctilde)


def resinv_step(state, nep, c, delta=None):
    """One eigenvalue Newton update plus one preconditioned vector correction.

    Costs one lu solve (two triangular solves) and four NEP actions: the
    functional value, its central-difference derivative, and the residual at
    the updated eigenvalue.
    """
    lam, v = state.lam, state.v
    if delta is None:
        delta = 1e-6 * (1.0 + abs(lam))
    g = np.vdot(state.ctilde, nep.apply(lam, v))
    gp = (np.vdot(state.ctilde, nep.apply(lam + delta, v))
          - np.vdot(state.ctilde, nep.apply(lam - delta, v))) / (2.0 * delta)
    if gp == 0 or not np.isfinite(gp):
        raise BroydenBreakdown("stagnant Rayleigh update")
    lam1 = lam - g / gp
    if not np.isfinite(lam1):
        raise BroydenBreakdown("stagnant Rayleigh update")
    v1 = v - state.lu.solve(nep.apply(lam1, v))
    alpha = np.vdot(c, v1)
    if abs(alpha) < 1e-12 * np.linalg.norm(v1):
        raise ValueError("normalization vector orthogonal to candidate")
    state.v = v1 / alpha
    state.lam = complex(lam1)
    state.k += 1
    return state


@dataclass
class ResinvResult:
    converged: bool
    v: np.ndarray
    lam: complex
    history: ConvergenceHistory
    iterations: int
    state: ResinvState


def resinv_solve(nep, c, sigma, v0=None, lam0=None, opts=None, M_sigma=None):
    """Iterate until ||M(lam) v|| <= tol or maxit steps.

    v0 defaults to the smallest-eigenvalue direction of M(sigma). The
    residual recorded each iteration costs one extra NEP action, keeping the
    per-iteration solve count at exactly one.
    """
    opts = opts or SolverOptions(sigma=sigma)
    m = nep.assemble(sigma) if M_sigma is None else M_sigma
    if v0 is None:
        _, v0 = eig_smallest(m)
    state = resinv_init(nep, c, sigma, v0, lam0, M_sigma=m)
    hist = ConvergenceHistory()
    t0 = time.perf_counter()
    res = np.linalg.norm(nep.apply(state.lam, state.v))
    converged = bool(res <= opts.tol)
    if converged:
        hist.record(0, res, state.lam, 0.0)
    while not converged and state.k < opts.maxit:
        resinv_step(state, nep, c, delta=opts.delta)
        res = np.linalg.norm(nep.apply(state.lam, state.v))
        hist.record(state.k, res, state.lam, time.perf_counter() - t0)
        if res <= opts.tol:
            converged = True
    return ResinvResult(converged, state.v, state.lam, hist, state.k, state)
