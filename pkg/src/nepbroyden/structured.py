"""Structure-exploiting propagation of the damped rank-one iteration.

Instead of carrying one square matrix over the stacked unknowns (v, u, lam),
the iteration keeps T (an approximate inverse of the leading n x n block),
the skinny block W of the remaining columns, and the maintained product
Z = T W. The step solves only a (p+1)-square projected system; the rank-one
secant correction touches T, W and Z through a handful of level-2
operations. Each iteration costs exactly one NEP action, and every iterate
satisfies the constraint rows C^H v = b2 exactly (up to the linear-solve
round-off), because the step direction is constructed inside the constraint
null space.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .broyden import BroydenBreakdown, DampingRule, SolverOptions
from .core import deflated_residual
from .history import ConvergenceHistory


@dataclass
class StructuredState:
    """Iterate plus the factored Jacobian approximation (T, W, Z = T W)."""
    v: np.ndarray
    u: np.ndarray
    lam: complex
    T: np.ndarray
    W: np.ndarray
    Z: np.ndarray
    r: np.ndarray
    C: np.ndarray
    b2: np.ndarray
    k: int = 0
    converged: bool = False
    # last-step internals, kept for instrumented tests
    dv: np.ndarray | None = None
    du: np.ndarray | None = None
    dlam: complex = 0.0
    zt: np.ndarray | None = None
    gamma: float = 1.0


def init_structured(nep, ctx, v1, u1, lam1, T1, W1, C, b2):
    """Assemble the solver state and its first residual (one NEP action).

    The starting vector must already satisfy the constraints: the step
    construction preserves C^H v = b2 but never restores it.
    """
    v1 = np.array(v1, copy=True)
    u1 = np.array(u1, dtype=v1.dtype, copy=True)
    C = np.asarray(C)
    if C.ndim == 1:
        C = C[:, None]
    b2 = np.asarray(b2)
    mismatch = np.linalg.norm(C.conj().T @ v1 - b2)
    # admit construction round-off at the working precision, catch real misuse
    guard = np.sqrt(float(np.finfo(v1.dtype).eps))
    if mismatch > guard * max(1.0, float(np.linalg.norm(v1))):
        raise ValueError("input constraint violated")
    T1 = np.array(T1, copy=True)
    W1 = np.array(W1, copy=True)
    if W1.ndim == 1:
        W1 = W1[:, None]
    r1 = deflated_residual(nep, ctx, lam1, v1, u1)
    return StructuredState(v=v1, u=u1, lam=lam1, T=T1, W=W1, Z=T1 @ W1,
                           r=r1, C=C, b2=b2)


def step_structured(state, nep, ctx, rule):
    """One damped step updating (v, u, lam) and the factors T, W, Z in place.

    The projected (p+1)-square system determines (du, dlam); dv follows by
    back-substitution through T. After the single NEP action at the damped
    point, the secant correction enters T as a rank-one update and W gains a
    rank-one term in the step coefficients; Z absorbs both without being
    recomputed, using the pre-update T and W.
    """
    if np.linalg.norm(state.r) == 0:
        state.converged = True
        return state
    tr = state.T @ state.r
    ch = state.C.conj().T
    try:
        y = np.linalg.solve(ch @ state.Z, -(ch @ tr))
    except np.linalg.LinAlgError as e:
        raise BroydenBreakdown("structured breakdown: singular projected system") from e
    du = y[:-1]
    dlam = y[-1]
    dv = -(state.Z @ y) - tr
    s2 = np.vdot(dv, dv).real + np.vdot(du, du).real + abs(dlam) ** 2
    if s2 == 0:
        raise BroydenBreakdown("update breakdown: zero step with nonzero residual")
    gamma = rule.gamma_for_norm(math.sqrt(s2))
    state.v += gamma * dv
    state.u += gamma * du
    state.lam = state.lam + gamma * dlam
    r_new = deflated_residual(nep, ctx, state.lam, state.v, state.u)  # one action
    zt = (r_new - (1.0 - gamma) * state.r) / gamma
    tz = state.T @ zt
    vt = dv.conj() @ state.T
    denom = s2 + np.vdot(dv, tz)
    if abs(denom) <= 1e-14 * s2:
        raise BroydenBreakdown("update breakdown: vanishing denominator")
    ah = -vt / denom
    bh = np.empty(len(du) + 1, dtype=state.W.dtype)
    bh[:-1] = du.conj()
    bh[-1] = np.conj(dlam)
    bh /= s2
    roww = ah @ state.W           # pre-update W
    azt = ah @ zt
    state.Z += np.outer(tz, roww + (1.0 + azt) * bh)
    state.W += np.outer(zt, bh)
    state.T += np.outer(tz, ah)
    state.r = r_new
    state.k += 1
    state.dv, state.du, state.dlam = dv, du, dlam
    state.zt, state.gamma = zt, gamma
    return state


@dataclass
class StructuredResult:
    converged: bool
    v: np.ndarray
    u: np.ndarray
    lam: complex
    T: np.ndarray
    W: np.ndarray
    history: ConvergenceHistory
    iterations: int
    max_constraint_violation: float
    state: StructuredState


def solve_structured(state, nep, ctx, opts=None):
    """Iterate to tolerance on ||r||. Returns the final T, W for warm restarts.

    The maintained product Z is recomputed from T W every 50 iterations to
    arrest drift. Constraint violation ||C^H v - b2|| / ||v|| is tracked
    across all iterates and reported in the result.
    """
    opts = opts or SolverOptions()
    rule = DampingRule(opts.damping)
    hist = ConvergenceHistory()
    t0 = time.perf_counter()

    def violation():
        return float(np.linalg.norm(state.C.conj().T @ state.v - state.b2)
                     / np.linalg.norm(state.v))

    max_viol = violation()
    res = np.linalg.norm(state.r)
    converged = bool(res <= opts.tol)
    if converged:
        hist.record(0, res, complex(state.lam), 0.0)
    while not converged and state.k < opts.maxit:
        step_structured(state, nep, ctx, rule)
        if state.k % 50 == 0:
            state.Z = state.T @ state.W
        res = np.linalg.norm(state.r)
        max_viol = max(max_viol, violation())
        hist.record(state.k, res, complex(state.lam),
                    time.perf_counter() - t0)
        if state.converged or res <= opts.tol:
            converged = True
    return StructuredResult(converged, state.v, state.u, state.lam,
                            state.T, state.W, hist, state.k, max_viol, state)
