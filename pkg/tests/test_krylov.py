import json

import numpy as np
import scipy.sparse as sp

from hdgstokes import krylov


def _spd(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    return A @ A.T + n * np.eye(n)


def test_minres_solves_spd():
    A = _spd(40, 0)
    b = np.arange(1.0, 41.0)
    rep = krylov.minres(A, b, tol=1e-10, maxiter=200)
    assert rep.converged
    x_ref = np.linalg.solve(A, b)
    assert np.linalg.norm(rep.x - x_ref) < 1e-8 * np.linalg.norm(x_ref)
    assert np.linalg.norm(b - A @ rep.x) <= 1e-10 * np.linalg.norm(b)


def test_minres_solves_symmetric_indefinite():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.standard_normal((50, 50)))
    lam = np.concatenate([np.linspace(1, 5, 25), -np.linspace(1, 5, 25)])
    A = (Q * lam) @ Q.T
    b = rng.standard_normal(50)
    rep = krylov.minres(A, b, tol=1e-10, maxiter=300)
    assert rep.converged
    assert np.linalg.norm(b - A @ rep.x) <= 1e-10 * np.linalg.norm(b)


def test_minres_exact_preconditioner_one_step():
    A = _spd(30, 2)
    Ainv = np.linalg.inv(A)
    b = np.ones(30)
    rep = krylov.minres(A, b, pc=lambda r: Ainv @ r, tol=1e-12, maxiter=50)
    assert rep.converged and rep.iterations <= 2


def test_minres_reports_indefinite_preconditioner():
    A = _spd(20, 3)
    b = np.ones(20)
    rep = krylov.minres(A, b, pc=lambda r: -r, tol=1e-10, maxiter=50)
    assert not rep.converged
    assert rep.breakdown is not None
    assert "indefinite" in rep.breakdown


def test_minres_preconditioned_residual_monotone():
    A = _spd(60, 4)
    M = np.diag(1.0 / np.diag(A))
    b = np.sin(np.arange(60.0))
    rep = krylov.minres(A, b, pc=lambda r: M @ r, tol=1e-12, maxiter=200)
    hist = np.array(rep.pc_residuals)
    assert np.all(np.diff(hist) <= 1e-12 * hist[0])


def test_minres_nullspace_projection():
    # 1D path-graph Laplacian: kernel = constants, rhs in the range
    n = 25
    main = 2.0 * np.ones(n)
    main[0] = main[-1] = 1.0
    A = sp.diags([main, -np.ones(n - 1), -np.ones(n - 1)], [0, -1, 1]).tocsr()
    nv = np.ones(n) / np.sqrt(n)
    rng = np.random.default_rng(5)
    b = A @ rng.standard_normal(n)
    rep = krylov.minres(A, b, tol=1e-10, maxiter=200, nullspace=nv)
    assert rep.converged
    assert abs(rep.x @ nv) < 1e-10 * np.linalg.norm(rep.x)
    assert rep.nullspace_residual < 1e-10


def test_minres_maxiter_exhaustion():
    A = _spd(50, 6)
    b = np.ones(50)
    rep = krylov.minres(A, b, tol=1e-14, maxiter=3)
    assert not rep.converged
    assert rep.iterations == 3


def test_gmres_solves_nonsymmetric():
    # small perturbation keeps the field of values away from zero
    rng = np.random.default_rng(7)
    A = np.eye(40) + 0.05 * rng.standard_normal((40, 40))
    b = rng.standard_normal(40)
    rep = krylov.gmres(A, b, tol=1e-10, maxiter=200, restart=20)
    assert rep.converged
    assert np.linalg.norm(b - A @ rep.x) <= 1e-9 * np.linalg.norm(b)
    assert np.abs(A @ rep.x - b).max() < 1e-9


def test_gmres_right_preconditioning_one_step():
    A = _spd(30, 8)
    Ainv = np.linalg.inv(A)
    b = np.ones(30)
    rep = krylov.gmres(A, b, pc=lambda r: Ainv @ r, tol=1e-12, maxiter=50)
    assert rep.converged and rep.iterations <= 2


def test_gmres_restart_cycles():
    rng = np.random.default_rng(9)
    A = np.eye(60) + 0.05 * rng.standard_normal((60, 60))
    b = rng.standard_normal(60)
    rep = krylov.gmres(A, b, tol=1e-9, maxiter=400, restart=5)
    assert rep.converged
    assert rep.iterations > 5  # must have crossed a restart boundary
    assert np.linalg.norm(b - A @ rep.x) <= 1e-8 * np.linalg.norm(b)


def test_gmres_nullspace_projection():
    n = 25
    main = 2.0 * np.ones(n)
    main[0] = main[-1] = 1.0
    A = sp.diags([main, -np.ones(n - 1), -np.ones(n - 1)], [0, -1, 1]).tocsr()
    nv = np.ones(n) / np.sqrt(n)
    b = A @ np.sin(np.arange(n, dtype=float))
    rep = krylov.gmres(A, b, tol=1e-10, maxiter=200, nullspace=nv)
    assert rep.converged
    assert abs(rep.x @ nv) < 1e-10 * np.linalg.norm(rep.x)


def test_report_serializes():
    A = _spd(10, 10)
    rep = krylov.minres(A, np.ones(10), tol=1e-8, maxiter=50, label="PM")
    d = rep.to_dict()
    text = json.dumps(d)
    back = json.loads(text)
    assert back["method"] == "minres"
    assert back["preconditioner"] == "PM"
    assert back["converged"] is True
    assert isinstance(back["residuals"], list)
