"""Dense complex linear algebra kernels shared by the eigensolvers.

Thin wrappers over LAPACK (via numpy/scipy) that pin down the behavior the
solvers rely on: hard failure on singular-to-working-precision factorizations,
deterministic tie-breaking in the smallest-eigenvalue pick, and an
orthonormalization that stays orthonormal under cancellation.
"""

import numpy as np
import scipy.linalg


class LuFactorization:
    """LU factorization with partial pivoting, reusable across solves.

    Keeps a solve counter so tests can assert that a factorization is being
    reused rather than recomputed.
    """

    def __init__(self, a):
        a = np.asarray(a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("expected a square matrix")
        self.n = a.shape[0]
        self._lu, self._piv = scipy.linalg.lu_factor(a, check_finite=False)
        if self.n:
            d = np.abs(np.diag(self._lu))
            tiny = self.n * np.finfo(self._lu.dtype).eps * d.max()
            if d.min() <= tiny:
                raise np.linalg.LinAlgError("singular matrix")
        self.n_solves = 0

    @property
    def dtype(self):
        return self._lu.dtype

    def solve(self, b, adjoint=False):
        """Solve a x = b (or a^H x = b with adjoint=True) for one or many columns."""
        self.n_solves += 1
        trans = 2 if adjoint else 0
        return scipy.linalg.lu_solve((self._lu, self._piv), b, trans=trans,
                                     check_finite=False)


def lu_solve(a, b):
    """Solve a x = b by LU with partial pivoting; b may hold many columns.

    Raises numpy.linalg.LinAlgError("singular matrix") when a is singular to
    working precision.
    """
    return LuFactorization(a).solve(b)


def eig_smallest(a):
    """Eigenpair of a square matrix with the smallest eigenvalue modulus.

    Ties resolve to the first occurrence in the dense eigensolver's output
    order. The eigenvector is returned with unit 2-norm.
    """
    w, v = np.linalg.eig(np.asarray(a))
    i = int(np.argmin(np.abs(w)))
    x = v[:, i]
    return w[i], x / np.linalg.norm(x)


def gram_schmidt_append(x, w):
    """Orthonormalize w against the orthonormal columns of x.

    Modified Gram-Schmidt with one reorthogonalization pass. Returns
    (q, h, beta) with w = x @ h + beta * q and ||q|| = 1. Raises ValueError
    when w is numerically in span(x) (beta below 1e-12 * ||w||).
    """
    x = np.asarray(x)
    w = np.asarray(w)
    nrm = np.linalg.norm(w)
    p = x.shape[1]
    h = np.zeros(p, dtype=np.result_type(x.dtype, w.dtype, np.complex64))
    y = w.astype(h.dtype, copy=True)
    for _ in range(2):  # second pass restores orthogonality lost to cancellation
        for j in range(p):
            c = np.vdot(x[:, j], y)
            h[j] += c
            y = y - c * x[:, j]
    beta = np.linalg.norm(y)
    if nrm == 0.0 or beta < 1e-12 * nrm:
        raise ValueError("vector in span")
    return y / beta, h, float(beta)
