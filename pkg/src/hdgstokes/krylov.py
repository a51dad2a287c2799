"""Preconditioned Krylov solvers for the condensed saddle-point system.

minres is the Paige-Saunders recurrence with a symmetric (positive or
indefinite) preconditioner applied on the left; convergence is judged
on the recomputed unpreconditioned residual, not the recurrence
estimate.  The estimate (preconditioner-norm residual) is monotone and
kept in the report for diagnostics.

gmres is restarted GMRES with the preconditioner applied on the right,
so its recurrence estimate *is* the true residual norm; it tolerates
indefinite preconditioners by construction.

Both solvers optionally project against a one-dimensional kernel (the
constant-pressure representation): the operator is symmetric, so its
range is the Euclidean orthogonal complement of the kernel, and
projecting the residual and every preconditioned vector keeps all
iterates in that complement.
"""

import time

import numpy as np


class SolverReport:
    """Iteration record of one Krylov solve."""

    def __init__(self, method, preconditioner, iterations, converged,
                 residuals, pc_residuals=None, wall_time=0.0,
                 breakdown=None, tol=0.0, nullspace_residual=0.0):
        self.method = method
        self.preconditioner = preconditioner
        self.iterations = iterations
        self.converged = converged
        self.residuals = residuals
        self.pc_residuals = pc_residuals or []
        self.wall_time = wall_time
        self.breakdown = breakdown
        self.tol = tol
        self.nullspace_residual = nullspace_residual

    def to_dict(self):
        # wall_time stays off the record: serialized reports must be
        # identical across repeated runs of the same configuration
        return {
            "method": self.method,
            "preconditioner": self.preconditioner,
            "iterations": self.iterations,
            "converged": bool(self.converged),
            "residuals": [float(r) for r in self.residuals],
            "pc_residuals": [float(r) for r in self.pc_residuals],
            "breakdown": self.breakdown,
            "tol": float(self.tol),
            "nullspace_residual": float(self.nullspace_residual),
        }


def _as_matvec(A):
    return A if callable(A) else lambda x: A @ x


def _projector(nullspace):
    if nullspace is None:
        return lambda v: v
    n = nullspace / np.linalg.norm(nullspace)
    return lambda v: v - n * (n @ v)


def minres(A, b, pc=None, tol=1e-8, maxiter=1000, nullspace=None,
           stride=1, label=""):
    """Left-preconditioned MINRES.

    pc applies the inverse of the preconditioner.  Breakdown of the
    Lanczos inner product (r, pc r) <= 0 - possible when pc is
    indefinite - is reported, never silently ignored.
    """
    t0 = time.perf_counter()
    matvec = _as_matvec(A)
    apply_pc = pc if pc is not None else (lambda x: x.copy())
    proj = _projector(nullspace)

    b = proj(np.asarray(b, dtype=float))
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    residuals, pc_residuals = [], []

    def report(itn, conv, breakdown=None):
        nres = 0.0
        if nullspace is not None and np.linalg.norm(x) > 0:
            n = nullspace / np.linalg.norm(nullspace)
            nres = abs(n @ x) / np.linalg.norm(x)
        return SolverReport("minres", label, itn, conv, residuals,
                            pc_residuals, time.perf_counter() - t0,
                            breakdown, tol, nres)

    if bnorm == 0.0:
        return report(0, True)

    r1 = b.copy()
    y = proj(apply_pc(r1))
    beta1 = r1 @ y
    if beta1 <= 0.0:
        if beta1 < 0.0:
            return report(0, False, "indefinite preconditioner: (r, z) < 0")
        return report(0, True)
    beta1 = np.sqrt(beta1)

    oldb, beta = 0.0, beta1
    dbar = epsln = sn = 0.0
    cs = -1.0
    phibar = beta1
    w = np.zeros_like(b)
    w2 = np.zeros_like(b)
    r2 = r1

    itn = 0
    converged = False
    breakdown = None
    while itn < maxiter:
        itn += 1
        v = y / beta
        y = proj(matvec(v))
        if itn >= 2:
            y -= (beta / oldb) * r1
        alfa = v @ y
        y -= (alfa / beta) * r2
        r1 = r2
        r2 = y
        y = proj(apply_pc(r2))
        oldb = beta
        beta = r2 @ y
        if beta < 0.0:
            breakdown = "indefinite preconditioner: (r, z) < 0 at iteration %d" % itn
            break
        beta = np.sqrt(beta)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), np.finfo(float).tiny)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        pc_residuals.append(phibar)

        if itn % stride == 0 or phibar <= tol * bnorm or beta == 0.0:
            relres = np.linalg.norm(b - matvec(x)) / bnorm
            residuals.append(relres)
            if relres <= tol:
                converged = True
                break
        if beta == 0.0:
            breakdown = "Lanczos subspace exhausted at iteration %d" % itn
            break

    x = proj(x)
    rep = report(itn, converged, breakdown)
    rep.x = x
    return rep


def gmres(A, b, pc=None, tol=1e-8, maxiter=1000, restart=50,
          nullspace=None, label=""):
    """Right-preconditioned restarted GMRES (modified Gram-Schmidt with
    a second orthogonalization pass)."""
    t0 = time.perf_counter()
    matvec = _as_matvec(A)
    apply_pc = pc if pc is not None else (lambda x: x.copy())
    proj = _projector(nullspace)

    b = proj(np.asarray(b, dtype=float))
    bnorm = np.linalg.norm(b)
    n = len(b)
    x = np.zeros(n)
    residuals = []
    total = 0
    converged = False

    if bnorm == 0.0:
        rep = SolverReport("gmres", label, 0, True, residuals, [],
                           time.perf_counter() - t0, None, tol, 0.0)
        rep.x = x
        return rep

    while total < maxiter and not converged:
        r = proj(b - matvec(x))
        beta = np.linalg.norm(r)
        if beta / bnorm <= tol:
            converged = True
            break
        m = min(restart, maxiter - total)
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j = -1
        for j in range(m):
            total += 1
            w = proj(matvec(apply_pc(V[j])))
            for _ in range(2):
                for i in range(j + 1):
                    h = V[i] @ w
                    H[i, j] += h
                    w -= h * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j] = H[j, j] / denom
            sn[j] = H[j + 1, j] / denom
            H[j, j] = denom
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            res = abs(g[j + 1]) / bnorm
            residuals.append(res)
            if H[j + 1, j] == 0.0 or res <= tol:
                break
            V[j + 1] = w / H[j + 1, j]
        y = np.linalg.solve(np.triu(H[:j + 1, :j + 1]), g[:j + 1])
        x = x + apply_pc(V[:j + 1].T @ y)
        relres = np.linalg.norm(b - matvec(x)) / bnorm
        if relres <= tol:
            converged = True
            residuals[-1] = relres

    x = proj(x)
    nres = 0.0
    if nullspace is not None and np.linalg.norm(x) > 0:
        nv = nullspace / np.linalg.norm(nullspace)
        nres = abs(nv @ x) / np.linalg.norm(x)
    rep = SolverReport("gmres", label, total, converged, residuals, [],
                       time.perf_counter() - t0, None, tol, nres)
    rep.x = x
    return rep
