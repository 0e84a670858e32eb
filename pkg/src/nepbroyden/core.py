"""Problem abstraction for nonlinear eigenvalue problems M(lam) v = 0.

A problem is defined by the action w -> M(lam) w; dense coefficients are
optional. Iterative solvers only ever need the action (one "NEP action" per
step), while shift-based initialization asks for an assembled matrix at a
single point. Deflation augments the residual with a low-rank coupling term
built from locked eigenpairs; everything here is arranged so that the
augmented residual still costs exactly one action.
"""

import numpy as np
import scipy.linalg


class NepProblem:
    """Nonlinear eigenvalue problem defined by its matrix action.

    Parameters
    ----------
    n : int
        Dimension of the problem.
    apply : callable
        apply(lam, w) -> M(lam) @ w for a scalar lam and an n-vector w.
        Must be linear in w.
    apply_deriv : callable, optional
        Action of the lam-derivative, apply_deriv(lam, w) -> M'(lam) @ w.
        When absent, derivative actions fall back to a central difference.
    assemble : callable, optional
        assemble(sigma) -> dense n x n matrix M(sigma). Only used to build
        starting data at a single shift.
    conjugate_symmetric : bool
        True when conj(M(lam) w) == M(conj(lam)) conj(w), i.e. eigenvalues
        come in conjugate pairs (real problem data).
    dtype : numpy dtype
        Working scalar type of the problem data (complex64 or complex128).
    name : str
        Identifier used in messages and output file names.

    The instance counts its apply() calls in ``actions`` so tests can pin
    per-iteration cost.
    """

    def __init__(self, n, apply, apply_deriv=None, assemble=None,
                 conjugate_symmetric=False, dtype=np.complex128, name=""):
        self.n = int(n)
        self._apply = apply
        self._apply_deriv = apply_deriv
        self._assemble = assemble
        self.conjugate_symmetric = bool(conjugate_symmetric)
        self.dtype = np.dtype(dtype)
        self.name = name
        self.actions = 0

    def apply(self, lam, w):
        self.actions += 1
        return self._apply(lam, w)

    @property
    def has_deriv(self):
        return self._apply_deriv is not None

    @property
    def has_assemble(self):
        return self._assemble is not None

    def deriv_action(self, lam, w, delta=None):
        """M'(lam) @ w, analytic when available, else by central difference."""
        if self._apply_deriv is not None:
            return self._apply_deriv(lam, w)
        return apply_deriv_fd(self, lam, w, delta)

    def assemble(self, sigma):
        if self._assemble is None:
            raise ValueError(
                f"problem {self.name!r} has no assembled form; "
                "build a surrogate with problems.approx_matrix")
        return self._assemble(sigma)


def apply_deriv_fd(nep, lam, w, delta=None):
    """Central-difference derivative action (M(lam+d) - M(lam-d)) w / (2 d).

    Costs two NEP actions. The default step scales with the shift:
    d = 1e-6 * (1 + |lam|).
    """
    if delta is None:
        delta = 1e-6 * (1.0 + abs(lam))
    return (nep.apply(lam + delta, w) - nep.apply(lam - delta, w)) / (2.0 * delta)


def nep_matrix(nep, lam):
    """Dense M(lam): assembled when possible, else built column by column."""
    if nep.has_assemble:
        return np.asarray(nep.assemble(lam))
    cols = np.eye(nep.n, dtype=nep.dtype)
    return np.column_stack([nep.apply(lam, cols[:, j]) for j in range(nep.n)])


class DeflationContext:
    """Locked invariant-pair data threaded through the deflated residual.

    X holds orthonormal columns (one per locked pair), S is upper triangular
    with the locked eigenvalues on its diagonal. b1 and b2 are the target
    vectors of the augmented system (zero residual target and constraint
    right-hand side); they default to 0 and the last unit vector.
    """

    def __init__(self, X=None, S=None, b1=None, b2=None, n=None,
                 dtype=np.complex128):
        if X is None:
            if n is None:
                raise ValueError("pass X or the dimension n")
            X = np.zeros((n, 0), dtype=dtype)
        X = np.asarray(X)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        p = X.shape[1]
        S = np.zeros((0, 0), dtype=X.dtype) if S is None else np.asarray(S)
        if S.shape != (p, p):
            raise ValueError("S must be p x p for the p columns of X")
        if p:
            gram = X.conj().T @ X
            if np.linalg.norm(gram - np.eye(p)) > 1e-10:
                raise ValueError("basis columns not orthonormal")
            if np.any(S[np.tril_indices(p, -1)] != 0):
                raise ValueError("coupling matrix not upper triangular")
        self.X = X
        self.S = S
        n = X.shape[0]
        self.b1 = np.zeros(n, dtype=X.dtype) if b1 is None else np.asarray(b1)
        if b2 is None:
            b2 = np.zeros(p + 1, dtype=X.dtype)
            b2[p] = 1.0
        self.b2 = np.asarray(b2)

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def n(self):
        return self.X.shape[0]

    def locked_eigenvalues(self):
        return np.diag(self.S).copy()


def _shift_gap(lam, ctx):
    """Distance from lam to the locked eigenvalues, with a collision guard."""
    gap = float(np.min(np.abs(lam - np.diag(ctx.S))))
    if gap <= 1e-14 * (1.0 + abs(lam)):
        raise ValueError("shift collides with deflated eigenvalue")
    return gap


def _resolvent_dir(ctx, lam, u):
    """(lam I - S)^{-1} u via one triangular solve."""
    p = ctx.p
    a = lam * np.eye(p, dtype=np.result_type(ctx.S.dtype, type(lam))) - ctx.S
    return scipy.linalg.solve_triangular(a, u, check_finite=False)


def u_apply(nep, ctx, lam, u):
    """Action of the deflation coupling U(lam) = M(lam) X (lam I - S)^{-1}.

    Exactly one NEP action. lam must keep clear of the locked eigenvalues on
    diag(S), where the resolvent factor degenerates.
    """
    if ctx.p == 0:
        return np.zeros(nep.n, dtype=nep.dtype)
    _shift_gap(lam, ctx)
    y = _resolvent_dir(ctx, lam, u)
    return nep.apply(lam, ctx.X @ y)


def u_contour_oracle(nep, ctx, lam, u, quad_points=64):
    """Contour-integral evaluation of U(lam) u, for cross-checking u_apply.

    Averages M(xi) X (xi I - S)^{-1} u over a circle centered at lam with
    radius half the distance to the nearest locked eigenvalue. The integrand
    is analytic inside the circle, so the trapezoid rule converges
    geometrically in quad_points. Costs quad_points NEP actions.
    """
    if ctx.p == 0:
        return np.zeros(nep.n, dtype=nep.dtype)
    rho = 0.5 * _shift_gap(lam, ctx)
    acc = np.zeros(nep.n, dtype=np.complex128)
    for j in range(quad_points):
        xi = lam + rho * np.exp(2j * np.pi * j / quad_points)
        y = _resolvent_dir(ctx, xi, u)
        acc = acc + nep.apply(xi, ctx.X @ y)
    return acc / quad_points


def deflated_residual(nep, ctx, lam, v, u):
    """Augmented residual M(lam) (v + X (lam I - S)^{-1} u) - b1.

    The coupling term is folded into the vector before the single NEP
    action, so the cost is one action regardless of how many pairs are
    locked.
    """
    if ctx.p == 0:
        w = v
    else:
        _shift_gap(lam, ctx)
        w = v + ctx.X @ _resolvent_dir(ctx, lam, u)
    return nep.apply(lam, w) - ctx.b1
