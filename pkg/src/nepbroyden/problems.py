"""Benchmark problem gallery.

Dense polynomial and delay eigenproblems with closed-form actions, plus
matrix-free monodromy problems whose action integrates a periodic linear ODE
across one delay interval. The monodromy family is where quasi-Newton pays
off: each residual costs a full time march, so methods are ranked by how few
actions they spend.
"""

from dataclasses import dataclass, replace

import numpy as np

from .core import NepProblem
from .linalg import LuFactorization


def make_diag_toy(d=(2.0, 5.0), dtype=np.complex128):
    """Linear diagonal problem M(lam) = diag(d) - lam I; eigenvalues are d."""
    diag = np.asarray(d, dtype=dtype)
    n = diag.shape[0]
    return NepProblem(
        n,
        apply=lambda lam, w: diag * w - lam * w,
        apply_deriv=lambda lam, w: -np.asarray(w),
        assemble=lambda sigma: np.diag(diag) - sigma * np.eye(n, dtype=dtype),
        conjugate_symmetric=bool(np.all(diag.imag == 0)),
        dtype=dtype,
        name="diag-toy")


def make_random_qep(n=30, seed=0, dtype=np.complex128):
    """Quadratic problem M(lam) = A0 + lam A1 + lam^2 A2.

    Coefficients are i.i.d. standard complex normal (seeded); the spectrum is
    checked in tests against the companion linearization.
    """
    rng = np.random.default_rng(seed)

    def cnormal():
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        return (a / np.sqrt(2.0)).astype(dtype)

    a0, a1, a2 = cnormal(), cnormal(), cnormal()
    nep = NepProblem(
        n,
        apply=lambda lam, w: a0 @ w + lam * (a1 @ w) + lam * lam * (a2 @ w),
        apply_deriv=lambda lam, w: a1 @ w + 2.0 * lam * (a2 @ w),
        assemble=lambda s: a0 + s * a1 + s * s * a2,
        conjugate_symmetric=False,
        dtype=dtype,
        name=f"qep-n{n}-s{seed}")
    nep.coefficients = (a0, a1, a2)
    return nep


def make_qdep(n=40, seed=0, dtype=np.complex128):
    """Quadratic delay problem M(lam) = -lam^2 I + A0 + A1 exp(-lam).

    A0, A1 are seeded real Gaussian scaled by 1/sqrt(n) so the spectrum near
    the origin is O(1); real data makes the problem conjugate symmetric.
    """
    rng = np.random.default_rng(seed)
    real = np.float32 if np.dtype(dtype) == np.complex64 else np.float64
    a0 = (rng.standard_normal((n, n)) / np.sqrt(n)).astype(real)
    a1 = (rng.standard_normal((n, n)) / np.sqrt(n)).astype(real)
    eye = np.eye(n, dtype=dtype)
    nep = NepProblem(
        n,
        apply=lambda lam, w: -lam * lam * np.asarray(w)
        + a0 @ w + np.exp(-lam) * (a1 @ w),
        apply_deriv=lambda lam, w: -2.0 * lam * np.asarray(w)
        - np.exp(-lam) * (a1 @ w),
        assemble=lambda s: (-s * s * eye + a0 + np.exp(-s) * a1).astype(dtype),
        conjugate_symmetric=True,
        dtype=dtype,
        name=f"qdep-n{n}-s{seed}")
    nep.coefficients = (a0, a1)
    return nep


def make_dep_double(dtype=np.complex128):
    """Delay problem M(lam) = -lam I + A0 + A1 exp(-lam) with a double eigenvalue.

    Real 2x2 coefficients are constructed so lam* = 3*pi*i carries a Jordan
    chain of length two: B = A0 - A1 has eigenpair ((1, -i), 3*pi*i), and A1
    is read off from the chain condition M(lam*) v1 = -M'(lam*) v0 with
    v1 = (1, 0).
    """
    w = 3.0 * np.pi
    b = w * np.array([[0.0, -1.0], [1.0, 0.0]])
    v0 = np.array([1.0, -1.0j])
    v1 = np.array([1.0, 0.0])
    g = 1j * w * v1 + v0 - b @ v1
    a1 = np.column_stack([g.real, -g.imag])
    a0 = b + a1
    a0c = a0.astype(dtype)
    a1c = a1.astype(dtype)
    eye = np.eye(2, dtype=dtype)
    nep = NepProblem(
        2,
        apply=lambda lam, w_: -lam * np.asarray(w_)
        + a0c @ w_ + np.exp(-lam) * (a1c @ w_),
        apply_deriv=lambda lam, w_: -np.asarray(w_)
        - np.exp(-lam) * (a1c @ w_),
        assemble=lambda s: -s * eye + a0c + np.exp(-s) * a1c,
        conjugate_symmetric=True,
        dtype=dtype,
        name="dep-double")
    nep.coefficients = (a0, a1)
    nep.double_eigenvalue = 1j * w
    return nep


# ---------------------------------------------------------------------------
# Monodromy problems from time-periodic delay ODEs
# ---------------------------------------------------------------------------

SCHEMES = ("rk4", "implicit-euler", "trapezoidal")


@dataclass
class OdeNepConfig:
    """Time-stepper definition of a monodromy eigenproblem.

    The action marches dp/dt = (A(t) + B(t) exp(-lam*tau) - lam I) p from
    p(0) = v over [0, tau] in ``steps`` uniform steps and returns p(tau) - v.
    a_of_t / b_of_t return the (real) n x n coefficient matrices at a time.
    """
    n: int
    a_of_t: object
    b_of_t: object
    tau: float = 1.0
    steps: int = 100
    scheme: str = "trapezoidal"
    conjugate_symmetric: bool = True
    dtype: object = np.complex128

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")


class _Stepper:
    """Marches the shifted coefficient ODE; caches per-shift factorizations.

    For the implicit schemes every apply at a fixed lam reuses the same step
    matrices, so the factorizations (and, for the trapezoid rule, the
    explicit-side matrices) of the most recent lam are kept. This makes a
    column sweep at one shift cost one factorization set in total while each
    column still counts as its own NEP action.
    """

    def __init__(self, cfg):
        self.cfg = cfg
        self._cache_lam = None
        self._cache = None

    def _coeff(self, t, lam, ebt):
        cfg = self.cfg
        c = np.asarray(cfg.a_of_t(t)) + ebt * np.asarray(cfg.b_of_t(t))
        c = c.astype(np.result_type(c.dtype, cfg.dtype), copy=True)
        c[np.diag_indices(cfg.n)] -= lam
        return c

    def _implicit_factors(self, lam):
        if self._cache_lam is not None and lam == self._cache_lam:
            return self._cache
        cfg = self.cfg
        h = cfg.tau / cfg.steps
        ebt = np.exp(-lam * cfg.tau)
        eye = np.eye(cfg.n, dtype=np.result_type(cfg.dtype, type(lam)))
        factors = []
        for j in range(cfg.steps):
            t0, t1 = j * h, (j + 1) * h
            if cfg.scheme == "implicit-euler":
                lhs = eye - h * self._coeff(t1, lam, ebt)
                rhs = None
            else:  # trapezoidal
                lhs = eye - 0.5 * h * self._coeff(t1, lam, ebt)
                rhs = eye + 0.5 * h * self._coeff(t0, lam, ebt)
            factors.append((LuFactorization(lhs), rhs))
        self._cache_lam = lam
        self._cache = factors
        return factors

    def march(self, lam, v):
        cfg = self.cfg
        h = cfg.tau / cfg.steps
        p = np.asarray(v).astype(np.result_type(cfg.dtype, type(lam)), copy=True)
        if cfg.scheme == "rk4":
            ebt = np.exp(-lam * cfg.tau)
            for j in range(cfg.steps):
                t = j * h
                c0 = self._coeff(t, lam, ebt)
                cm = self._coeff(t + 0.5 * h, lam, ebt)
                c1 = self._coeff(t + h, lam, ebt)
                k1 = c0 @ p
                k2 = cm @ (p + 0.5 * h * k1)
                k3 = cm @ (p + 0.5 * h * k2)
                k4 = c1 @ (p + h * k3)
                p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            for lu, rhs in self._implicit_factors(lam):
                p = lu.solve(p if rhs is None else rhs @ p)
        return p


def make_tpdde(cfg):
    """Monodromy eigenproblem M(lam) v = p(tau; lam, v) - v from a stepper.

    Matrix-free: no assembled form (use approx_matrix for a coarse surrogate)
    and no analytic derivative (central differences apply).
    """
    stepper = _Stepper(cfg)
    nep = NepProblem(
        cfg.n,
        apply=lambda lam, v: stepper.march(lam, v) - np.asarray(
            v, dtype=np.result_type(cfg.dtype, type(lam))),
        conjugate_symmetric=cfg.conjugate_symmetric,
        dtype=cfg.dtype,
        name=f"tpdde-{cfg.scheme}-N{cfg.steps}")
    nep.ode_config = cfg
    return nep


def make_tpdde_scalar(a=1.0, b=0.0, tau=1.0, steps=100, scheme="rk4",
                      dtype=np.complex128):
    """Scalar constant-coefficient monodromy problem, with a closed form.

    For b = 0 the exact action is (exp((a - lam) tau) - 1) v, which pins the
    stepper's order of accuracy.
    """
    amat = np.array([[float(a)]])
    bmat = np.array([[float(b)]])
    cfg = OdeNepConfig(n=1, a_of_t=lambda t: amat, b_of_t=lambda t: bmat,
                       tau=tau, steps=steps, scheme=scheme, dtype=dtype)
    nep = make_tpdde(cfg)
    nep.name = f"tpdde-scalar-{scheme}-N{steps}"
    return nep


def approx_matrix(nep, sigma, n_coarse=7):
    """Coarse dense surrogate of M(sigma), assembled column by column.

    Clones the stepper at n_coarse time steps and spends exactly n coarse
    NEP actions (one per unit-vector column). Intended to seed the initial
    matrices, not to be spectrally accurate.
    """
    cfg = getattr(nep, "ode_config", None)
    if cfg is None:
        raise ValueError("problem has no time-stepper configuration")
    coarse = make_tpdde(replace(cfg, steps=int(n_coarse)))
    eye = np.eye(cfg.n, dtype=cfg.dtype)
    return np.column_stack(
        [coarse.apply(sigma, eye[:, j]) for j in range(cfg.n)])


# ---------------------------------------------------------------------------
# Milling stability benchmarks
# ---------------------------------------------------------------------------


@dataclass
class MillingConfig:
    """Parameters of the milling benchmarks.

    The oscillator fields apply to both variants; the spatial fields only to
    the PDE-coupled one. scheme = None picks the per-variant default (rk4 for
    the 2 x 2 oscillator, trapezoidal for the stiff PDE variant).
    """
    a_p: float = 1.0
    m: float = 1.0
    tau: float = 1.0
    omega0: float = 1.0
    zeta: float = 1.0
    k_r: float = 1.0
    k_t: float = 1.0
    steps: int = 100
    scheme: str | None = None
    # PDE-coupled variant
    n_space: int = 50
    eps: float = 1.0
    d: float = 1.0
    area: float = 1.0
    dxx_scale: str = "h"      # "h" -> (1/h) tridiag, "h2" -> (1/h^2) tridiag
    p_matrix: object = None   # optional mass operator; None means identity


def milling_w(t, cfg):
    """Cutting-force weight: engaged on the second half of the period.

    w(t) = H(t - tau/2) (sin(phi)^2 K_R + cos(phi) sin(phi) K_T) with
    phi = 2 pi t / tau and the right-continuous convention H(0) = 1.
    """
    if t - cfg.tau / 2.0 < 0.0:
        return 0.0
    phi = 2.0 * np.pi * t / cfg.tau
    s, c = np.sin(phi), np.cos(phi)
    return s * s * cfg.k_r + c * s * cfg.k_t


def make_milling_1dof(cfg=None):
    """Single-oscillator milling problem (dimension 2).

    State (x, xdot); the delayed term feeds the cutting force back through
    the position coordinate.
    """
    cfg = cfg or MillingConfig()
    w0, z0 = cfg.omega0, cfg.zeta

    def a_of_t(t):
        g = cfg.a_p * milling_w(t, cfg) / cfg.m
        return np.array([[0.0, 1.0], [-w0 * w0 - g, -2.0 * z0 * w0]])

    def b_of_t(t):
        g = cfg.a_p * milling_w(t, cfg) / cfg.m
        return np.array([[0.0, 0.0], [g, 0.0]])

    ode = OdeNepConfig(n=2, a_of_t=a_of_t, b_of_t=b_of_t, tau=cfg.tau,
                       steps=cfg.steps, scheme=cfg.scheme or "rk4")
    nep = make_tpdde(ode)
    nep.name = f"milling-1dof-N{cfg.steps}"
    nep.milling_config = cfg
    return nep


def make_milling_pde(cfg=None):
    """Milling oscillator coupled to a 1-d diffusion field (dimension 2N+2).

    State (q, x, qdot, xdot) with q the field on N interior nodes. The field
    couples to the oscillator through its last node. Stiff: explicit
    stepping is rejected; the trapezoid rule is the default.
    """
    cfg = cfg or MillingConfig()
    scheme = cfg.scheme or "trapezoidal"
    if scheme == "rk4":
        raise ValueError("explicit scheme rejected for stiff problem")
    nsp = cfg.n_space
    n = 2 * nsp + 2
    h = 1.0 / nsp
    if cfg.dxx_scale not in ("h", "h2"):
        raise ValueError(f"unknown dxx_scale {cfg.dxx_scale!r}")
    scale = 1.0 / h if cfg.dxx_scale == "h" else 1.0 / (h * h)
    dxx = scale * (np.diag(np.full(nsp - 1, 1.0), 1)
                   + np.diag(np.full(nsp, -2.0))
                   + np.diag(np.full(nsp - 1, 1.0), -1))
    p_op = np.eye(nsp) if cfg.p_matrix is None else np.asarray(cfg.p_matrix)
    pdxx = p_op @ dxx
    e_n = np.zeros(nsp)
    e_n[-1] = 1.0
    p_n = p_op @ e_n

    # index blocks: q = [0, nsp), x = nsp, qdot = [nsp+1, 2nsp+1), xdot = 2nsp+1
    iq = slice(0, nsp)
    ix = nsp
    iqd = slice(nsp + 1, 2 * nsp + 1)
    ixd = 2 * nsp + 1

    a_base = np.zeros((n, n))
    a_base[iq, iqd] = np.eye(nsp)
    a_base[ix, ixd] = 1.0
    a_base[iqd, iq] = -cfg.eps * pdxx
    a_base[iqd, iqd] = -cfg.d * pdxx
    a_base[ixd, ix] = -cfg.omega0 ** 2
    a_base[ixd, ixd] = -2.0 * cfg.zeta * cfg.omega0

    a_gain = np.zeros((n, n))
    a_gain[iqd, iq] = -np.outer(p_n, e_n) / cfg.area
    a_gain[iqd, ix] = -e_n / cfg.area
    a_gain[ixd, iq] = -e_n / cfg.m
    a_gain[ixd, ix] = -1.0 / cfg.m

    b_gain = np.zeros((n, n))
    b_gain[iqd, iq] = np.outer(p_n, e_n) / cfg.area
    b_gain[iqd, ix] = p_n / cfg.area
    b_gain[ixd, iq] = e_n / cfg.m
    b_gain[ixd, ix] = 1.0 / cfg.m

    def a_of_t(t):
        return a_base + (cfg.a_p * milling_w(t, cfg)) * a_gain

    def b_of_t(t):
        return (cfg.a_p * milling_w(t, cfg)) * b_gain

    ode = OdeNepConfig(n=n, a_of_t=a_of_t, b_of_t=b_of_t, tau=cfg.tau,
                       steps=cfg.steps, scheme=scheme)
    nep = make_tpdde(ode)
    nep.name = f"milling-pde-N{cfg.steps}-nx{nsp}"
    nep.milling_config = cfg
    return nep
