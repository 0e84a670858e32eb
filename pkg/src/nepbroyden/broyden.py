"""Damped rank-one quasi-Newton iteration on the augmented eigenvalue system.

Two interchangeable propagations of the same iteration: the J-version keeps
an approximate Jacobian and refactorizes it every step, the H-version keeps
the approximate inverse and never solves a linear system (the rank-one
change is folded in by the Sherman-Morrison identity). Started from the same
data they produce identical iterates in exact arithmetic. Both spend exactly
one F-evaluation per iteration; the step is capped so the eigenvalue
estimate never moves further than the damping threshold.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import DeflationContext, deflated_residual, nep_matrix
from .history import ConvergenceHistory
from .linalg import lu_solve


class BroydenBreakdown(RuntimeError):
    """A step solve or rank-one update degenerated beyond repair."""


@dataclass
class SolverOptions:
    """Knobs shared by all solver drivers.

    damping is the largest allowed step norm t (inf disables damping);
    delta is the central-difference step for derivative actions, None
    meaning 1e-6 * (1 + |lam|).
    """
    tol: float = 1e-10
    maxit: int = 200
    damping: float = 1.0
    sigma: complex = 0.0
    delta: float | None = None


@dataclass
class DampingRule:
    """Step cap gamma = min(1, t / ||dx||): a damped step moves at most t."""
    t: float = 1.0

    def gamma(self, dx):
        return damping_gamma(dx, self.t)

    def gamma_for_norm(self, step_norm):
        if self.t <= 0:
            raise ValueError("damping threshold must be positive")
        if step_norm == 0 or np.isinf(self.t):
            return 1.0
        return min(1.0, float(self.t / step_norm))


def damping_gamma(dx, t):
    """Damping factor min(1, t / ||dx||_2) in (0, 1]."""
    if t <= 0:
        raise ValueError("damping threshold must be positive")
    nrm = np.linalg.norm(dx)
    if nrm == 0 or np.isinf(t):
        return 1.0
    return min(1.0, float(t / nrm))


@dataclass
class GenericState:
    """Iterate of the generic propagations; exactly one of J/H is kept."""
    x: np.ndarray
    fx: np.ndarray
    k: int = 0
    J: np.ndarray | None = None
    H: np.ndarray | None = None
    converged: bool = False


def step_j(state, f, rule):
    """One damped step keeping the Jacobian approximation J.

    Solves J dx = -F(x) fresh each call, evaluates F once at the damped
    point, and folds the secant correction into J as a rank-one update.
    """
    if np.linalg.norm(state.fx) == 0:
        state.converged = True
        return state
    try:
        dx = -lu_solve(state.J, state.fx)
    except np.linalg.LinAlgError as e:
        raise BroydenBreakdown("Broyden breakdown: singular J") from e
    gamma = rule.gamma(dx)
    x1 = state.x + gamma * dx
    f1 = f(x1)  # the single F-evaluation of this step
    z = (f1 - (1.0 - gamma) * state.fx) / gamma
    state.J += np.outer(z, dx.conj()) / np.vdot(dx, dx).real
    state.x = x1
    state.fx = f1
    state.k += 1
    return state


def step_h(state, f, rule):
    """One damped step keeping the approximate inverse H: no linear solves.

    The rank-one Jacobian change becomes a rank-one inverse change by the
    Sherman-Morrison identity; H z is formed directly from H F(x1) so the
    whole step costs three matrix-vector products.
    """
    if np.linalg.norm(state.fx) == 0:
        state.converged = True
        return state
    dx = -(state.H @ state.fx)
    gamma = rule.gamma(dx)
    x1 = state.x + gamma * dx
    f1 = f(x1)  # the single F-evaluation of this step
    hz = (state.H @ f1 + (1.0 - gamma) * dx) / gamma
    nrm2 = np.vdot(dx, dx).real
    denom = nrm2 + np.vdot(dx, hz)
    if abs(denom) <= 1e-14 * nrm2:
        raise BroydenBreakdown("Broyden breakdown: vanishing update denominator")
    dxh = dx.conj() @ state.H
    state.H -= np.outer(hz, dxh) / denom
    state.x = x1
    state.fx = f1
    state.k += 1
    return state


class AugmentedSystem:
    """Residual map F(v, u, lam) = (deflated residual, constraint mismatch).

    The unknowns are stacked as x = (v, u, lam); F(x) costs one NEP action.
    C holds the constraint vectors as columns (locked basis plus the
    normalization vector), b2 the constraint right-hand side.
    """

    def __init__(self, nep, ctx, C, b2):
        self.nep = nep
        self.ctx = ctx
        self.C = np.asarray(C)
        if self.C.ndim == 1:
            self.C = self.C[:, None]
        self.b2 = np.asarray(b2)
        self.n = nep.n
        self.p = ctx.p
        self.dim = self.n + self.p + 1
        self.n_calls = 0

    def split(self, x):
        return x[:self.n], x[self.n:self.n + self.p], x[-1]

    def join(self, v, u, lam):
        v = np.asarray(v)
        return np.concatenate([v, np.asarray(u, dtype=v.dtype),
                               np.asarray([lam], dtype=v.dtype)])

    def __call__(self, x):
        self.n_calls += 1
        v, u, lam = self.split(x)
        r = deflated_residual(self.nep, self.ctx, lam, v, u)
        con = self.C.conj().T @ v - self.b2
        return np.concatenate([r, con])

    def jacobian(self, v, lam, u=None, delta=None):
        """Exact Jacobian at (v, u, lam), for initialization and tests.

        Top rows are [M(lam), U(lam), M'(lam) w - M(lam) X y2] with
        w = v + X y, y = (lam I - S)^{-1} u, y2 = (lam I - S)^{-1} y;
        bottom rows are the constant constraint block [C^H, 0].
        """
        nep, ctx = self.nep, self.ctx
        m = nep_matrix(nep, lam)
        jac = np.zeros((self.dim, self.dim), dtype=m.dtype)
        jac[:self.n, :self.n] = m
        if self.p:
            u = np.zeros(self.p, dtype=m.dtype) if u is None else np.asarray(u)
            eye_p = np.eye(self.p, dtype=m.dtype)
            res = scipy.linalg.solve_triangular(
                lam * eye_p - ctx.S, eye_p, check_finite=False)
            jac[:self.n, self.n:self.n + self.p] = m @ (ctx.X @ res)
            y = res @ u
            y2 = res @ y
            w = v + ctx.X @ y
            jac[:self.n, -1] = nep.deriv_action(lam, w, delta) - m @ (ctx.X @ y2)
        else:
            jac[:self.n, -1] = nep.deriv_action(lam, v, delta)
        jac[self.n:, :self.n] = self.C.conj().T
        return jac


def build_deflated_system(nep, ctx, C, b2):
    """Augmented residual map over (v, u, lam) for a deflated problem."""
    return AugmentedSystem(nep, ctx, C, b2)


def build_nep_system(nep, c):
    """Residual map F(v, lam) = (M(lam) v, c^H v - 1) over x = (v, lam).

    The returned object is callable, splits/joins the stacked unknowns, and
    exposes the exact Jacobian [[M(lam), M'(lam) v], [c^H, 0]].
    """
    c = np.asarray(c)
    ctx = DeflationContext(n=nep.n, dtype=nep.dtype)
    b2 = np.ones(1, dtype=c.dtype)
    return AugmentedSystem(nep, ctx, c, b2)


@dataclass
class GenericResult:
    converged: bool
    x: np.ndarray
    lam: complex
    history: ConvergenceHistory
    state: GenericState
    iterations: int = 0


def solve_generic(f, x0, J0=None, H0=None, opts=None, on_step=None):
    """Run the damped iteration from x0 until ||F|| <= tol or maxit steps.

    Exactly one of J0/H0 selects the propagation; the matrix is copied, not
    mutated in place on the caller. History gets one row per completed
    iteration, with lam read from the trailing component of x. on_step, if
    given, is called with the state at x0 and after every step (used by the
    tests to watch constraint drift).
    """
    opts = opts or SolverOptions()
    if (J0 is None) == (H0 is None):
        raise ValueError("pass exactly one of J0 or H0")
    x = np.array(x0, copy=True)
    state = GenericState(
        x=x, fx=f(x),
        J=None if J0 is None else np.array(J0, copy=True),
        H=None if H0 is None else np.array(H0, copy=True))
    rule = DampingRule(opts.damping)
    hist = ConvergenceHistory()
    t0 = time.perf_counter()
    res = np.linalg.norm(state.fx)
    if on_step is not None:
        on_step(state)
    if res <= opts.tol:
        hist.record(0, res, complex(state.x[-1]), 0.0)
        return GenericResult(True, state.x, complex(state.x[-1]), hist, state, 0)
    step = step_j if J0 is not None else step_h
    converged = False
    while state.k < opts.maxit:
        step(state, f, rule)
        res = np.linalg.norm(state.fx)
        hist.record(state.k, res, complex(state.x[-1]),
                    time.perf_counter() - t0)
        if on_step is not None:
            on_step(state)
        if state.converged or res <= opts.tol:
            converged = True
            break
    return GenericResult(converged, state.x, complex(state.x[-1]), hist,
                         state, state.k)
