"""Locking converged eigenpairs and steering the solver to new ones.

Converged triplets (v, u, lam) accumulate into an orthonormal basis X and an
upper-triangular S whose diagonal carries the locked eigenvalues. Solving the
augmented problem of core.deflated_residual with the constraint X^H v = 0
cannot reconverge to a locked pair, so repeated restarts sweep out distinct
eigenvalues (counting multiplicity: a defective eigenvalue is found once per
Jordan chain step). Conjugate-symmetric problems get the conjugate copy of
each complex lock for free.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .broyden import BroydenBreakdown, SolverOptions
from .core import DeflationContext, deflated_residual
from .history import ConvergenceHistory
from .linalg import eig_smallest, gram_schmidt_append, lu_solve
from .structured import init_structured, solve_structured


class InvariantPair:
    """Orthonormal basis X and upper-triangular coupling S, one column per lock."""

    def __init__(self, n, dtype=np.complex128):
        self.X = np.zeros((n, 0), dtype=dtype)
        self.S = np.zeros((0, 0), dtype=dtype)
        self.meta = []

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def context(self, b1=None, b2=None):
        return DeflationContext(X=self.X, S=self.S, b1=b1, b2=b2)

    def eigenvalues(self):
        return np.diag(self.S).copy()

    def eigenvector(self, j):
        """Eigenvector of the underlying problem for the j-th locked value.

        Solves the leading triangular block of (S - lam I) y = 0 with
        y_j = 1; fails for a column whose eigenvalue repeats an earlier
        diagonal entry (defective chain): there the plain back-substitution
        is singular.
        """
        lam = self.S[j, j]
        y = np.zeros(self.p, dtype=self.S.dtype)
        y[j] = 1.0
        if j:
            a = self.S[:j, :j] - lam * np.eye(j, dtype=self.S.dtype)
            y[:j] = scipy.linalg.solve_triangular(a, -self.S[:j, j],
                                                  check_finite=False)
        w = self.X @ y
        return w / np.linalg.norm(w)

    def _append(self, q, col, lam, **meta):
        p = self.p
        s_new = np.zeros((p + 1, p + 1), dtype=self.S.dtype)
        s_new[:p, :p] = self.S
        s_new[:p, p] = col
        s_new[p, p] = lam
        self.X = np.column_stack([self.X, q])
        self.S = s_new
        self.meta.append(dict(lam=complex(lam), **meta))


def starting_triplet(nep, pair, sigma, c, M1, U1):
    """Initial (v, u, lam) for the next solve, from the augmented shift matrix.

    Takes the smallest-eigenvalue direction of [[M1, U1], [X^H, 0]], projects
    the leading block onto the orthogonal complement of the locked basis so
    the constraint holds exactly, and scales so c^H v = 1 (both blocks share
    the scale). lam starts at the shift.
    """
    p, n = pair.p, nep.n
    g = np.zeros((n + p, n + p), dtype=np.asarray(M1).dtype)
    g[:n, :n] = M1
    if p:
        g[:n, n:] = U1
        g[n:, :n] = pair.X.conj().T
    _, wvec = eig_smallest(g)
    wv, wu = wvec[:n], wvec[n:]
    v = wv - pair.X @ (pair.X.conj().T @ wv) if p else wv.copy()
    nrm = np.linalg.norm(v)
    alpha = np.vdot(c, v)
    if nrm == 0 or abs(alpha) < 1e-12 * nrm:
        raise ValueError("normalization vector orthogonal to candidate")
    return v / alpha, wu / alpha, complex(sigma)


def starting_f(nep, pair, sigma, v1, u1, U1, delta=None):
    """Derivative of the augmented residual in lam at the starting point.

    f1 = M'(sigma) (v1 + X y) - U1 y with y = (sigma I - S)^{-1} u1; this is
    the last column of the exact augmented Jacobian and seeds the evolving
    skinny block W.
    """
    if pair.p == 0:
        return nep.deriv_action(sigma, v1, delta)
    a = sigma * np.eye(pair.p, dtype=pair.S.dtype) - pair.S
    y = scipy.linalg.solve_triangular(a, u1, check_finite=False)
    return nep.deriv_action(sigma, v1 + pair.X @ y, delta) - U1 @ y


def coupling_at_shift(nep, pair, sigma):
    """Dense coupling block U(sigma), built one column at a time.

    Costs exactly p NEP actions: column j is M(sigma) applied to
    X (sigma I - S)^{-1} e_j.
    """
    p = pair.p
    if p == 0:
        return np.zeros((nep.n, 0), dtype=nep.dtype)
    eye_p = np.eye(p, dtype=pair.S.dtype)
    res = scipy.linalg.solve_triangular(sigma * eye_p - pair.S, eye_p,
                                        check_finite=False)
    y = pair.X @ res
    return np.column_stack([nep.apply(sigma, y[:, j]) for j in range(p)])


def extend_pair(pair, v, u, lam, **meta):
    """Append a locked triplet, rescaled so the new basis column has unit norm.

    Both v and u are divided by beta = ||v||: the basis gains v/beta and the
    new S column is (u/beta, lam). The solver's constraint keeps v orthogonal
    to the locked basis, which is checked, not re-enforced, here.
    """
    v = np.asarray(v)
    u = np.asarray(u)
    beta = np.linalg.norm(v)
    if beta < 1e-12:
        raise ValueError("trivial extension")
    if pair.p and np.linalg.norm(pair.X.conj().T @ v) > 1e-8 * beta:
        raise ValueError("input constraint violated")
    pair._append(v / beta, u / beta, lam, conjugate=False, **meta)
    return pair


def conjugate_extend(nep, pair, w, lam, **meta):
    """Append the complex-conjugate copy of a locked eigenpair.

    w is the locked eigenvector of the *underlying* problem (for the first
    lock this is the solver's v; later locks fold the coupling back in). A
    real eigenvalue is a no-op. conj(w) is orthonormalized against the basis
    and the Gram-Schmidt data (h, beta) enters the new S column as
    (conj(lam) I - S) h / beta, which keeps the extended pair invariant.
    """
    if not nep.conjugate_symmetric:
        raise ValueError("problem is not conjugate symmetric")
    if abs(lam.imag) <= 1e-10 * abs(lam):
        return pair
    try:
        q, h, beta = gram_schmidt_append(pair.X, np.conj(w))
    except ValueError:
        warnings.warn("conjugate vector already in locked span; skipping")
        return pair
    lam_c = np.conj(lam)
    col = (lam_c * h - pair.S @ h) / beta
    pair._append(q, col, lam_c, conjugate=True, **meta)
    return pair


def invariance_residual(nep, pair, collision_tol=1e-8):
    """Worst relative augmented residual over the locked columns.

    Each column j is validated against its leading sub-pair. Columns whose
    eigenvalue repeats an earlier diagonal entry (within collision_tol,
    relative) cannot use the plain resolvent solve; they are validated with
    the colliding columns excluded and reported separately. Returns the max
    over clean columns; see invariance_residual_detail for the rest.
    """
    clean, _, _ = invariance_residual_detail(nep, pair, collision_tol)
    return clean


def invariance_residual_detail(nep, pair, collision_tol=1e-8):
    """(clean_max, repeated_max, per_column) residuals of the locked pair."""
    diag = np.diag(pair.S)
    clean_max = 0.0
    repeated_max = 0.0
    per_column = []
    for j in range(pair.p):
        lam = diag[j]
        keep = [i for i in range(j)
                if abs(diag[i] - lam) > collision_tol * (1.0 + abs(lam))]
        collided = len(keep) < j
        ctx = DeflationContext(X=pair.X[:, keep],
                               S=pair.S[np.ix_(keep, keep)])
        r = deflated_residual(nep, ctx, lam, pair.X[:, j], pair.S[keep, j])
        val = float(np.linalg.norm(r))
        per_column.append((val, collided))
        if collided:
            repeated_max = max(repeated_max, val)
        else:
            clean_max = max(clean_max, val)
    return clean_max, repeated_max, per_column


@dataclass
class DeflationResult:
    converged: bool
    pair: InvariantPair
    histories: list
    sigma: complex
    retries: int = 0

    @property
    def eigenvalues(self):
        return self.pair.eigenvalues()

    def merged_history(self):
        merged = ConvergenceHistory()
        for h in self.histories:
            merged.extend(h)
        return merged


def deflated_broyden(nep, sigma, c, p_target, opts=None, M1=None, seed=0,
                     conjugate_copies=True, pair=None):
    """Lock p_target eigenpairs by repeated damped solves with restarts.

    M1 defaults to the problem's assembled matrix at sigma; pass a coarse
    surrogate (problems.approx_matrix) for action-only problems. Its exact
    inverse T1 is computed once and reused unchanged for every restart, while
    the coupling block U(sigma) is rebuilt from the grown pair (p actions).
    A restart that fails to converge is retried once from a perturbed start
    (1e-2 relative noise, reprojected onto the constraints); any second
    failure abandons the sweep and returns the partial pair with whatever
    history was collected. conjugate_copies locks the conjugate of each
    complex eigenvalue without a second solve; turn it off to revisit a
    multiple eigenvalue on a problem with little spare dimension, such as
    the double-eigenvalue benchmark. An existing pair warm-starts the run,
    so a caller can lock the first eigenpairs at one tolerance and continue
    at another.
    """
    opts = opts or SolverOptions(sigma=sigma)
    if M1 is None:
        M1 = nep.assemble(sigma)
    M1 = np.asarray(M1)
    n = nep.n
    T1 = lu_solve(M1, np.eye(n, dtype=M1.dtype))
    if pair is None:
        pair = InvariantPair(n, dtype=M1.dtype)
    histories = []
    rng = np.random.default_rng(seed)
    retries = 0

    def partial():
        return DeflationResult(False, pair, histories, complex(sigma), retries)

    while pair.p < p_target:
        p = pair.p
        ctx = pair.context()
        try:
            U1 = coupling_at_shift(nep, pair, sigma)
            v1, u1, lam1 = starting_triplet(nep, pair, sigma, c, M1, U1)
        except (ValueError, np.linalg.LinAlgError):
            return partial()
        C = np.column_stack([pair.X, np.asarray(c, dtype=pair.X.dtype)])
        b2 = np.zeros(p + 1, dtype=M1.dtype)
        b2[p] = 1.0
        result = None
        for attempt in range(2):
            try:
                f1 = starting_f(nep, pair, sigma, v1, u1, U1, delta=opts.delta)
                W1 = np.column_stack([U1, f1])
                state = init_structured(nep, ctx, v1, u1, lam1, T1, W1, C, b2)
                result = solve_structured(state, nep, ctx, opts)
                histories.append(result.history)
            except (BroydenBreakdown, ValueError, np.linalg.LinAlgError):
                result = None
            if result is not None and result.converged:
                break
            if attempt == 0:
                retries += 1
                noise = (rng.standard_normal(n)
                         + 1j * rng.standard_normal(n)).astype(v1.dtype)
                v1 = v1 + 1e-2 * np.linalg.norm(v1) / np.linalg.norm(noise) * noise
                if p:
                    v1 = v1 - pair.X @ (pair.X.conj().T @ v1)
                alpha = np.vdot(c, v1)
                if abs(alpha) < 1e-12 * np.linalg.norm(v1):
                    return partial()
                v1 = v1 / alpha
                u1 = u1 / alpha
        if result is None or not result.converged:
            return partial()
        # underlying eigenvector, reconstructed before the pair grows; used
        # only for the conjugate copy, so a defective repeat may safely fail
        w = None
        if conjugate_copies and nep.conjugate_symmetric and pair.p + 1 < p_target:
            try:
                if p:
                    a = result.lam * np.eye(p, dtype=pair.S.dtype) - pair.S
                    y = scipy.linalg.solve_triangular(a, result.u,
                                                      check_finite=False)
                    w = result.v + pair.X @ y
                else:
                    w = result.v.copy()
                if not np.all(np.isfinite(w)):
                    w = None
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
                w = None
        extend_pair(pair, result.v, result.u, result.lam,
                    iterations=result.iterations,
                    residual=float(np.linalg.norm(result.state.r)))
        if w is not None:
            conjugate_extend(nep, pair, w, result.lam, iterations=0, residual=None)
    return DeflationResult(True, pair, histories, complex(sigma), retries)
