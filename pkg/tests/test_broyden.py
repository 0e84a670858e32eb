"""Generic damped rank-one iteration: both propagations and the system map."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nepbroyden.broyden import (AugmentedSystem, DampingRule, GenericState,
                                SolverOptions, build_deflated_system,
                                build_nep_system, damping_gamma, solve_generic,
                                step_h, step_j)
from nepbroyden.core import DeflationContext
from nepbroyden.linalg import lu_solve
from nepbroyden.problems import make_qdep, make_random_qep


def _start(nep, sigma, c):
    m1 = np.asarray(nep.assemble(sigma))
    w = np.linalg.eigvals(m1)
    v = np.linalg.eig(m1)[1][:, int(np.argmin(np.abs(w)))]
    v = v / np.vdot(c, v)
    j0 = np.zeros((nep.n + 1, nep.n + 1), dtype=m1.dtype)
    j0[:-1, :-1] = m1
    j0[:-1, -1] = nep.deriv_action(sigma, v)
    j0[-1, :-1] = np.conj(c)
    return v, j0


def test_damping_gamma():
    assert damping_gamma(np.zeros(3), 1.0) == 1.0
    assert damping_gamma(np.array([3.0, 4.0]), np.inf) == 1.0
    assert_allclose(damping_gamma(np.array([3.0, 4.0]), 1.0), 0.2)
    assert damping_gamma(np.array([0.1]), 1.0) == 1.0
    with pytest.raises(ValueError, match="damping threshold must be positive"):
        damping_gamma(np.ones(2), 0.0)
    rule = DampingRule(2.0)
    assert_allclose(rule.gamma_for_norm(10.0), 0.2)
    assert rule.gamma_for_norm(0.0) == 1.0


def test_step_j_secant_property():
    nep = make_qdep(n=9, seed=1)
    c = np.ones(9, dtype=complex) / 3.0
    sys_f = build_nep_system(nep, c)
    v, j0 = _start(nep, 0.2, c)
    x0 = sys_f.join(v, np.zeros(0, dtype=v.dtype), 0.2)
    state = GenericState(x=x0.copy(), fx=sys_f(x0), J=j0.copy())
    f0 = state.fx.copy()
    step_j(state, sys_f, DampingRule(0.05))   # force a damped step
    dx_taken = state.x - x0
    assert np.linalg.norm(dx_taken) <= 0.05 * (1 + 1e-12)
    # rank-one update satisfies the secant condition on the step taken
    assert_allclose(state.J @ dx_taken, state.fx - f0, rtol=1e-9, atol=1e-12)


def test_step_h_inverse_secant_property():
    nep = make_qdep(n=9, seed=2)
    c = np.ones(9, dtype=complex) / 3.0
    sys_f = build_nep_system(nep, c)
    v, j0 = _start(nep, 0.2, c)
    h0 = lu_solve(j0, np.eye(10, dtype=j0.dtype))
    x0 = sys_f.join(v, np.zeros(0, dtype=v.dtype), 0.2)
    state = GenericState(x=x0.copy(), fx=sys_f(x0), H=h0)
    f0 = state.fx.copy()
    step_h(state, sys_f, DampingRule(0.05))
    dx_taken = state.x - x0
    assert_allclose(state.H @ (state.fx - f0), dx_taken, rtol=1e-9, atol=1e-12)


def test_j_and_h_produce_identical_iterates():
    nep_a = make_qdep(n=12, seed=3)
    nep_b = make_qdep(n=12, seed=3)
    c = np.ones(12, dtype=complex) / np.sqrt(12)
    opts = SolverOptions(tol=0.0, maxit=20, sigma=0.1)
    v, j0 = _start(nep_a, 0.1, c)
    x0 = np.concatenate([v, [0.1]])
    rj = solve_generic(build_nep_system(nep_a, c), x0, J0=j0, opts=opts)
    h0 = lu_solve(j0, np.eye(13, dtype=j0.dtype))
    rh = solve_generic(build_nep_system(nep_b, c), x0, H0=h0, opts=opts)
    lam_j = np.asarray(rj.history.lam)
    lam_h = np.asarray(rh.history.lam)
    assert_allclose(lam_h, lam_j, rtol=1e-6, atol=1e-9)


def test_solve_generic_needs_exactly_one_matrix():
    nep = make_qdep(n=5, seed=0)
    c = np.ones(5, dtype=complex)
    sys_f = build_nep_system(nep, c)
    x0 = np.zeros(6, dtype=complex)
    with pytest.raises(ValueError, match="pass exactly one of J0 or H0"):
        solve_generic(sys_f, x0)
    with pytest.raises(ValueError, match="pass exactly one of J0 or H0"):
        solve_generic(sys_f, x0, J0=np.eye(6), H0=np.eye(6))


def _fd_jacobian(f, x, h=1e-7):
    n = len(x)
    jac = np.zeros((len(f(x)), n), dtype=complex)
    for j in range(n):
        e = np.zeros(n, dtype=complex)
        e[j] = h
        jac[:, j] = (f(x + e) - f(x - e)) / (2 * h)
    return jac


def test_exact_jacobian_matches_finite_differences():
    rng = np.random.default_rng(4)
    nep = make_random_qep(n=5, seed=4)
    c = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    sys_f = build_nep_system(nep, c)
    v = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    lam = 0.3 - 0.2j
    x = sys_f.join(v, np.zeros(0, dtype=complex), lam)
    jac = sys_f.jacobian(v, lam)
    fd = _fd_jacobian(sys_f, x)
    # holomorphic residual: complex central differences see the true Jacobian
    assert_allclose(jac, fd, rtol=5e-6, atol=5e-6)


def test_deflated_jacobian_matches_finite_differences():
    rng = np.random.default_rng(5)
    nep = make_random_qep(n=6, seed=5)
    x_basis, _ = np.linalg.qr(rng.standard_normal((6, 2))
                              + 1j * rng.standard_normal((6, 2)))
    s = np.array([[0.5, 0.2], [0.0, -0.3 + 0.1j]])
    ctx = DeflationContext(X=x_basis, S=s)
    c = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    C = np.column_stack([x_basis, c])
    b2 = np.array([0, 0, 1], dtype=complex)
    sys_f = build_deflated_system(nep, ctx, C, b2)
    v = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    u = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    lam = 1.2 + 0.4j
    x = sys_f.join(v, u, lam)
    jac = sys_f.jacobian(v, lam, u=u)
    fd = _fd_jacobian(sys_f, x)
    scale = np.linalg.norm(fd)
    assert_allclose(jac, fd, rtol=1e-5, atol=1e-5 * scale)


def test_augmented_system_split_join_and_counter():
    nep = make_qdep(n=4, seed=0)
    c = np.ones(4, dtype=complex) / 2.0
    sys_f = build_nep_system(nep, c)
    v = np.arange(4, dtype=complex)
    x = sys_f.join(v, np.zeros(0, dtype=complex), 0.5 + 1j)
    v2, u2, lam2 = sys_f.split(x)
    assert_allclose(v2, v)
    assert u2.shape == (0,)
    assert lam2 == 0.5 + 1j
    assert sys_f.n_calls == 0
    fx = sys_f(x)
    assert sys_f.n_calls == 1
    # residual stacks the NEP action and the normalization mismatch
    a0, a1 = nep.coefficients
    m = -x[-1] ** 2 * np.eye(4) + a0 + np.exp(-x[-1]) * a1
    assert_allclose(fx[:4], m @ v, rtol=1e-12)
    assert_allclose(fx[4], np.vdot(c, v) - 1.0, rtol=1e-12)


def test_on_step_observer_sees_every_state():
    nep = make_qdep(n=8, seed=6)
    c = np.ones(8, dtype=complex) / np.sqrt(8)
    v, j0 = _start(nep, 0.1, c)
    x0 = np.concatenate([v, [0.1]])
    seen = []
    result = solve_generic(build_nep_system(nep, c), x0, J0=j0,
                           opts=SolverOptions(tol=1e-10, maxit=60),
                           on_step=lambda st: seen.append(st.x.copy()))
    assert result.converged
    assert len(seen) == len(result.history) + 1   # initial state included
    assert_allclose(seen[0], x0)
    assert_allclose(seen[-1], result.x)


def test_history_rows_track_lambda_and_residual():
    nep = make_qdep(n=8, seed=7)
    c = np.ones(8, dtype=complex) / np.sqrt(8)
    v, j0 = _start(nep, 0.0, c)
    x0 = np.concatenate([v, [0.0]])
    r = solve_generic(build_nep_system(nep, c), x0, J0=j0,
                      opts=SolverOptions(tol=1e-10, maxit=80))
    assert r.converged
    h = r.history
    assert h.k == list(range(1, len(h) + 1))
    assert h.residual[-1] <= 1e-10
    assert_allclose(h.lam[-1], r.lam)
    assert r.iterations == h.k[-1]
