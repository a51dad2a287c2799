"""Cell-wise static condensation onto facet unknowns and pressures.

Only the interior velocity is eliminated.  With the block layout
(t, p, s) = (facet velocity, cell pressure, facet pressure) and the
per-cell coupling stack R_K = [A_tu; B_pu; B_su]|_K, the condensed
operator is

    [[Abar, Bbar^T], [Bbar, C]]
      Abar = A_tt - sum_K A_tu A_uu^-1 A_tu^T
      Bbar = -[B_pu; B_su] A_uu^-1 A_tu^T
      C    = -[B_pu; B_su] A_uu^-1 [B_pu; B_su]^T

computed per cell as R_K A_uu^-1 R_K^T = W^T W with W = L^-1 R_K^T,
which keeps the scattered matrix exactly symmetric.  The identity
Bbar Abar^-1 Bbar^T - C = B A^-1 B^T holds as exact block algebra and
is verified, not assumed, by the spectra module.

Constrained facet-velocity rows pass through condensation as identity
rows because their coupling columns were cleared during elimination.
"""

import numpy as np
import scipy.sparse as sp

from . import spaces as _spaces
from . import assembly as _assembly


class CondensedSystem:
    """Condensed operator, right-hand side and recovery data.

    Attributes
    ----------
    Abar : (n_ubar, n_ubar) csr, SPD on the free facet-velocity DOFs.
    Bbar_p, Bbar_s : pressure rows of the condensed constraint.
    C_pp, C_ps, C_ss : blocks of the negative-semidefinite pressure
        coupling C.
    rhs : full condensed right-hand side (t, p, s ordering).
    """

    def __init__(self, spaces):
        self.spaces = spaces
        self.n_t = spaces.n_ubar
        self.n_p = spaces.n_p
        self.n_s = spaces.n_pbar
        self.size = self.n_t + self.n_p + self.n_s

    def matrix(self):
        return self.K

    def split(self, x):
        return (x[:self.n_t],
                x[self.n_t:self.n_t + self.n_p],
                x[self.n_t + self.n_p:])

    def nullspace_vector(self):
        """Representation of the constant pressure; kernel of K."""
        return np.concatenate([np.zeros(self.n_t),
                               _spaces.constant_pressure_vector(self.spaces)])


def condense(bs):
    """Eliminate interior velocities from an assembled BlockSystem."""
    sp_ = bs.spaces
    nc = sp_.mesh.num_cells
    cs = CondensedSystem(sp_)

    L = np.linalg.cholesky(bs.local_auu)
    W = np.linalg.solve(L, bs.local_coupling.transpose(0, 2, 1))
    S = np.einsum("cnm,cnk->cmk", W, W, optimize=True)

    N = cs.size
    rows = bs.local_rows
    schur = _assembly._scatter(rows, rows, -S, (N, N))
    K = (sp.bmat([[bs.A_tt, None], [None, sp.csr_matrix(
        (cs.n_p + cs.n_s, cs.n_p + cs.n_s))]], format="csr") + schur)
    K.sum_duplicates()
    cs.K = K.tocsr()

    nt, np_ = cs.n_t, cs.n_p
    cs.Abar = cs.K[:nt, :nt]
    cs.Bbar_p = cs.K[nt:nt + np_, :nt]
    cs.Bbar_s = cs.K[nt + np_:, :nt]
    cs.C_pp = cs.K[nt:nt + np_, nt:nt + np_]
    cs.C_ps = cs.K[nt:nt + np_, nt + np_:]
    cs.C_ss = cs.K[nt + np_:, nt + np_:]

    # rhs: [L_t; 0; 0] - R A_uu^-1 L_u
    f_loc = bs.L_u.reshape(nc, -1)
    wf = np.linalg.solve(L, f_loc[..., None])[..., 0]
    corr = np.einsum("cnm,cn->cm", W, wf, optimize=True)
    rhs = np.concatenate([bs.L_t, np.zeros(cs.n_p + cs.n_s)])
    np.add.at(rhs, rows.ravel(), -corr.ravel())
    cs.rhs = rhs

    cs.chol = L
    cs.local_rows = rows
    cs.local_coupling = bs.local_coupling
    cs.L_u = bs.L_u.copy()
    return cs


def recover_velocity(cs, ubar, p, pbar, L_u=None):
    """Interior velocity from the condensed solution:
    u = A_uu^-1 (L_u - A_tu^T ubar - B_pu^T p - B_su^T pbar), per cell."""
    nc = cs.spaces.mesh.num_cells
    y = np.concatenate([ubar, p, pbar])
    yl = y[cs.local_rows]
    f = (cs.L_u if L_u is None else L_u).reshape(nc, -1)
    rhs = f - np.einsum("cmn,cm->cn", cs.local_coupling, yl, optimize=True)
    z = np.linalg.solve(cs.chol, rhs[..., None])
    u = np.linalg.solve(cs.chol.transpose(0, 2, 1), z)[..., 0]
    return u.ravel()


def lift_traces(cs, ubar):
    """Velocity lifting of a facet field: the cell-local solve with the
    facet datum as the only source.  Reproduces componentwise-harmonic
    polynomials given their own traces (and only those; generic
    polynomials acquire a discrete residual)."""
    zero_u = np.zeros_like(cs.L_u)
    return recover_velocity(cs, ubar, np.zeros(cs.n_p),
                            np.zeros(cs.n_s), L_u=zero_u)


def trace_form_value(cs, alpha, vbar, wbar):
    """Condensed velocity form evaluated by the variational route:
    lift both facet fields, then evaluate the velocity form term by
    term with quadrature.  Independent of the assembled Abar."""
    lv = lift_traces(cs, vbar)
    lw = lift_traces(cs, wbar)
    return _assembly.a_form_value(cs.spaces, alpha, lv, vbar, lw, wbar)
