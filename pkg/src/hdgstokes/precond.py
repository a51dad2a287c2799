"""Block preconditioners for the condensed saddle-point system.

Four kinds, all symmetric:

  PM      bdiag(Rbar, M_p, M_s)            positive definite
  PC      bdiag(Rbar, -C_pp, -C_ss)        positive definite
  PM-SGS  symmetric block Gauss-Seidel around bdiag(Rbar, -M_p, -M_s)
  PC-SGS  symmetric block Gauss-Seidel around bdiag(Rbar, C_pp, C_ss)

Rbar approximates the inverse of the condensed velocity block: an
exact sparse factorization, or a fixed number of smoothed-aggregation
V(1,1) cycles with the constant trace fields as near-nullspace.

The SGS kinds compose (P_L + P_D) P_D^-1 (P_D + P_L^T) with P_L the
strictly lower block triangle of the condensed operator.  They are
congruent to their indefinite diagonal, hence symmetric *indefinite*;
MINRES can still run on them in practice, and the solver reports a
breakdown honestly if the Lanczos inner product loses positivity.
The inverse application below never multiplies by Rbar itself, so the
multigrid mode (where only the inverse action exists) works unchanged.
"""

import numpy as np
import scipy.sparse.linalg as spla
from scipy.linalg import eigh_tridiagonal

from . import spaces as _spaces
from .amg import SmoothedAggregation

KINDS = ("PM", "PC", "PM-SGS", "PC-SGS")


class OperatorApprox:
    """Approximate inverse of an SPD matrix: 'exact' (sparse LU) or
    'multigrid' (fixed V-cycle count).  Tiny problems silently degrade
    multigrid to the exact mode; `degraded` records that."""

    def __init__(self, A, mode="exact", cycles=4, near_null=None,
                 coarse_size=60):
        if mode not in ("exact", "multigrid"):
            raise ValueError("mode must be 'exact' or 'multigrid'")
        self.shape = A.shape
        self.cycles = cycles
        self.degraded = False
        if mode == "multigrid" and A.shape[0] <= 4 * coarse_size:
            mode = "exact"
            self.degraded = True
        self.mode = mode
        if mode == "exact":
            self.lu = spla.splu(A.tocsc())
            self.amg = None
        else:
            self.amg = SmoothedAggregation(A, near_null,
                                           coarse_size=coarse_size)

    def apply(self, r):
        if self.mode == "exact":
            return self.lu.solve(r)
        return self.amg.solve(r, cycles=self.cycles)


def generalized_extremes(A, apply_inv, iters=30, seed=11):
    """Extreme generalized eigenvalues of (A, R) from `iters` steps of
    preconditioned Lanczos, given the action r -> R^-1 r.

    Works in residual space: vectors r_j with q_j = R^-1 r_j form a
    basis orthonormal in the R^-1 inner product; the tridiagonal Ritz
    values approximate the spectrum of R^-1 A.
    """
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    r = rng.standard_normal(n)
    q = apply_inv(r)
    b = np.sqrt(r @ q)
    r, q = r / b, q / b
    rs, qs = [r], [q]
    alphas, betas = [], []
    r_prev = np.zeros(n)
    beta_prev = 0.0
    for _ in range(iters):
        s = A @ q - beta_prev * r_prev
        a = q @ s
        alphas.append(a)
        s = s - a * r
        # full reorthogonalization in the R^-1 inner product
        for ri, qi in zip(rs, qs):
            s = s - (qi @ s) * ri
        qn = apply_inv(s)
        b2 = s @ qn
        if b2 <= 0.0:
            break
        beta_prev = np.sqrt(b2)
        betas.append(beta_prev)
        r_prev = r
        r, q = s / beta_prev, qn / beta_prev
        rs.append(r)
        qs.append(q)
    alphas = np.array(alphas)
    betas = np.array(betas[:len(alphas) - 1])
    w = eigh_tridiagonal(alphas, betas, eigvals_only=True)
    return float(w[0]), float(w[-1])


class Preconditioner:
    """One of the four block preconditioners; `apply` maps a condensed
    residual to the preconditioned vector."""

    def __init__(self, cs, kind, rbar, solve2, solve3, sgs_sign):
        self.cs = cs
        self.kind = kind
        self.rbar = rbar
        self._solve2 = solve2
        self._solve3 = solve3
        self._sgs_sign = sgs_sign
        self.is_sgs = kind.endswith("SGS")
        if self.is_sgs:
            self.Bp = cs.Bbar_p
            self.Bs = cs.Bbar_s
            self.Csp = cs.C_ps.T.tocsr()
            self.Cps = cs.C_ps

    def apply(self, r):
        r1, r2, r3 = self.cs.split(r)
        if not self.is_sgs:
            return np.concatenate([self.rbar.apply(r1),
                                   self._solve2(r2),
                                   self._solve3(r3)])
        s = self._sgs_sign
        d2 = lambda v: s * self._solve2(v)
        d3 = lambda v: s * self._solve3(v)
        y1 = self.rbar.apply(r1)
        y2 = d2(r2 - self.Bp @ y1)
        y3 = d3(r3 - self.Bs @ y1 - self.Csp @ y2)
        z3 = y3
        z2 = y2 - d2(self.Cps @ z3)
        z1 = y1 - self.rbar.apply(self.Bp.T @ z2 + self.Bs.T @ z3)
        return np.concatenate([z1, z2, z3])


def build_preconditioner(cs, M_p, M_s, kind="PM", rbar_mode="exact",
                         cycles=4):
    """Assemble one of the four preconditioners for a condensed system.

    M_p, M_s are the assembled pressure mass blocks.  The velocity
    block approximation uses the constant trace fields (zeroed on
    constrained DOFs) as multigrid near-nullspace.
    """
    if kind not in KINDS:
        raise ValueError("unknown preconditioner kind %r; expected one of %s"
                         % (kind, ", ".join(KINDS)))
    sp_ = cs.spaces
    near = _spaces.constant_facet_velocity_fields(sp_).copy()
    near[sp_.constrained_facet_velocity_dofs] = 0.0
    rbar = OperatorApprox(cs.Abar, mode=rbar_mode, cycles=cycles,
                          near_null=near)

    if kind.startswith("PM"):
        lu2 = spla.splu(M_p.tocsc())
        lu3 = spla.splu(M_s.tocsc())
    else:
        lu2 = spla.splu((-cs.C_pp).tocsc())
        lu3 = spla.splu((-cs.C_ss).tocsc())
    # The sweep diagonal takes the positive-definite block variants so
    # the composed operator (P_L + P_D) P_D^-1 (P_L^T + P_D) is SPD,
    # which MINRES requires.
    return Preconditioner(cs, kind, rbar, lu2.solve, lu3.solve, 1.0)
