"""Spectral probes for the discrete stability claims.

Everything here measures; nothing assumes.  The probes compute, with
dense eigensolvers on desk-scale meshes:

* extreme generalized eigenvalues of the pressure Schur complement
  against the pressure mass, full and condensed, with the constant
  pressure deflated;
* coercivity and boundedness constants of the velocity form against
  the velocity pair norm, with the two constant fields deflated;
* per-cell divergence inf-sup constants (no deflation: the local
  bound covers constant pressures, since cell velocities carry no
  boundary condition);
* a facet-pressure inf-sup proxy against the cell-velocity DG norm;
* pointwise divergence and interelement normal-flux checks of a
  computed velocity (exactly zero, up to roundoff, on triangles).

Deflation is done by restricting a pencil to the subspace orthogonal
to given vectors, parameterized by eliminating one coordinate per
constraint; restricted eigenvalues do not depend on that choice.
"""

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly as _assembly
from . import spaces as _spaces


# -- norm matrices ----------------------------------------------------

def velocity_dg_norm_matrix(sp_, alpha):
    """Broken H1 norm with boundary penalty on cell velocities:
    sum_K |grad v|^2 + alpha/h |v|^2_dK."""
    dm = _assembly._dof_maps(sp_)
    loc = (_assembly.scalar_stiffness(sp_)
           + _assembly.scalar_dg_penalty(sp_, alpha))
    shape = (sp_.n_u, sp_.n_u)
    return (_assembly._scatter(dm["u0"], dm["u0"], loc, shape)
            + _assembly._scatter(dm["u1"], dm["u1"], loc, shape))


def velocity_pair_norm_matrix(sp_, alpha):
    """Norm of the (cell, facet) velocity pair:
    sum_K |grad v|^2 + alpha/h |vbar - v|^2_dK."""
    mesh = sp_.mesh
    dm = _assembly._dof_maps(sp_)
    pen = alpha / mesh.h
    uu = _assembly.scalar_stiffness(sp_)
    tu, tt = [], []
    for e in range(sp_.nsides):
        f = mesh.cell_facets[:, e]
        w = _assembly._side_weights(sp_, e)
        wpen = w * pen[:, None]
        ph = sp_.phi_f[:, e]
        psib = sp_.psibar[f]
        uu += _assembly._sym(np.einsum("cqi,cq,cqj->cij", ph, wpen, ph,
                                       optimize=True))
        tu.append((f, -np.einsum("cqi,cq,cqj->cij", psib, wpen, ph,
                                 optimize=True)))
        tt.append((f, _assembly._sym(
            np.einsum("cqi,cq,cqj->cij", psib, wpen, psib, optimize=True))))
    su, st = (sp_.n_u, sp_.n_u), (sp_.n_ubar, sp_.n_u)
    stt = (sp_.n_ubar, sp_.n_ubar)
    N_uu = (_assembly._scatter(dm["u0"], dm["u0"], uu, su)
            + _assembly._scatter(dm["u1"], dm["u1"], uu, su))
    N_tu = sum(_assembly._scatter(dm[tk][f], dm[uk], v, st)
               for f, v in tu for tk, uk in (("t0", "u0"), ("t1", "u1")))
    N_tt = sum(_assembly._scatter(dm[tk][f], dm[tk][f], v, stt)
               for f, v in tt for tk in ("t0", "t1"))
    return sp.bmat([[N_uu, N_tu.T], [N_tu, N_tt]], format="csr")


def trace_seminorm_matrix(sp_):
    """Mean-deflated trace seminorm on facet velocities:
    sum_K h_K^-1 |vbar - m_K(vbar)|^2_dK with the boundary mean m_K."""
    mesh = sp_.mesh
    nbf, ns = sp_.nbf, sp_.nsides
    mass = _assembly._sym(np.einsum("fqi,fq,fqj->fij", sp_.psibar,
                                    sp_.facet_qw, sp_.psibar, optimize=True))
    ints = np.einsum("fq,fqi->fi", sp_.facet_qw, sp_.psibar, optimize=True)
    perim = mesh.facet_lengths[mesh.cell_facets].sum(axis=1)

    nc = mesh.num_cells
    m = ns * nbf
    loc = np.zeros((nc, m, m))
    b = np.zeros((nc, m))
    for e in range(ns):
        f = mesh.cell_facets[:, e]
        loc[:, e * nbf:(e + 1) * nbf, e * nbf:(e + 1) * nbf] = mass[f]
        b[:, e * nbf:(e + 1) * nbf] = ints[f]
    loc -= b[:, :, None] * b[:, None, :] / perim[:, None, None]
    loc /= mesh.h[:, None, None]

    rows = np.empty((nc, m), dtype=np.int64)
    dm = _assembly._dof_maps(sp_)
    out = sp.csr_matrix((sp_.n_ubar, sp_.n_ubar))
    for key in ("t0", "t1"):
        for e in range(ns):
            rows[:, e * nbf:(e + 1) * nbf] = dm[key][mesh.cell_facets[:, e]]
        out = out + _assembly._scatter(rows, rows, loc,
                                       (sp_.n_ubar, sp_.n_ubar))
    return out


# -- pencil utilities -------------------------------------------------

def _restricted_pencil(S, M, constraints):
    """Project the pencil (S, M) onto {x : constraints^T x = 0}.

    The subspace is parameterized by eliminating one well-conditioned
    coordinate per constraint; eigenvalues of the restricted pencil do
    not depend on the parameterization.
    """
    C = np.atleast_2d(np.asarray(constraints, dtype=float))
    if C.shape[0] == S.shape[0]:
        C = C.T                          # (k, n)
    k, n = C.shape
    _, _, piv = sla.qr(C, pivoting=True)
    pivots = np.sort(piv[:k])
    free = np.setdiff1d(np.arange(n), pivots)
    # x_piv = Z x_free with Z = -C_piv^-1 C_free
    Z = -np.linalg.solve(C[:, pivots], C[:, free])   # (k, nfree)

    def restrict(A):
        A = np.asarray(A)
        AFF = A[np.ix_(free, free)]
        AFP = A[np.ix_(free, pivots)]
        APP = A[np.ix_(pivots, pivots)]
        return AFF + AFP @ Z + Z.T @ AFP.T + Z.T @ APP @ Z

    return restrict(S), restrict(M)


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def _schur_dense(A, B):
    """B A^-1 B^T with a sparse factorization of A, dense result."""
    lu = spla.splu(sp.csc_matrix(A))
    m = B.shape[0]
    S = np.empty((m, m))
    step = 512
    for j in range(0, m, step):
        cols = B[j:j + step].toarray().T
        S[:, j:j + step] = B @ lu.solve(cols)
    return 0.5 * (S + S.T)


# -- probes -----------------------------------------------------------

def schur_spectrum(bs, deflate=True):
    """Extreme generalized eigenvalues of (B A^-1 B^T, M) with the
    constant pressure deflated; returns (lmin, lmax)."""
    A = bs.velocity_matrix()
    B = bs.divergence_matrix().tocsr()
    S = _schur_dense(A, B)
    M = _dense(bs.pressure_mass())
    if deflate:
        c = _spaces.constant_pressure_vector(bs.spaces)
        S, M = _restricted_pencil(S, M, M @ c)
    w = sla.eigh(S, M, eigvals_only=True)
    return float(w[0]), float(w[-1])


def element_block_spectrum(cs, M_p, M_s, deflate=False):
    """Extreme generalized eigenvalues of (bdiag(-C_pp, -C_ss), M).

    The element-matrix preconditioner blocks are the cell and facet
    pressure Schur pieces B_pu A_uu^-1 B_pu^T and B_su A_uu^-1 B_su^T;
    both are positive definite (divergence maps onto the cell pressure
    space and the facet normal-flux coupling has trivial kernel), so
    by default nothing is deflated and the block-diagonal pencil
    reduces to the envelope of the two sub-pencils.  With deflate=True
    the joint constant-pressure direction is removed first, matching
    the protocol used for the full Schur pencil; that couples the
    blocks, so the restricted pencil is solved as one problem."""
    if deflate:
        C = sla.block_diag(_dense(-cs.C_pp), _dense(-cs.C_ss))
        M = sla.block_diag(_dense(M_p), _dense(M_s))
        c = _spaces.constant_pressure_vector(cs.spaces)
        Cr, Mr = _restricted_pencil(C, M, M @ c)
        w = sla.eigh(Cr, Mr, eigvals_only=True)
        return float(w[0]), float(w[-1])
    wp = sla.eigh(_dense(-cs.C_pp), _dense(M_p), eigvals_only=True)
    ws = sla.eigh(_dense(-cs.C_ss), _dense(M_s), eigvals_only=True)
    return (float(min(wp[0], ws[0])), float(max(wp[-1], ws[-1])))


def condensed_schur_identity(bs, cs):
    """Max-norm residual of the algebraic identity
    Bbar Abar^-1 Bbar^T - C = B A^-1 B^T."""
    A = bs.velocity_matrix()
    B = bs.divergence_matrix().tocsr()
    S_full = _schur_dense(A, B)
    Bbar = sp.vstack([cs.Bbar_p, cs.Bbar_s]).tocsr()
    C = sp.bmat([[cs.C_pp, cs.C_ps], [cs.C_ps.T, cs.C_ss]]).toarray()
    S_cond = _schur_dense(cs.Abar, Bbar) - C
    return float(np.abs(S_full - S_cond).max())


def coercivity_bounds(bs, alpha=None):
    """Extreme eigenvalues of the velocity form against the pair norm,
    on the complement of the two constant fields.

    Call with an *unconstrained* system (bcs=False): the claim is
    about the bilinear form itself.  Returns (c_lower, c_upper); a
    nonpositive lower value flags a coercivity failure (expected for
    insufficient stabilization)."""
    sp_ = bs.spaces
    if alpha is None:
        alpha = bs.alpha
    A = _dense(bs.velocity_matrix())
    N = _dense(velocity_pair_norm_matrix(sp_, alpha))
    consts = []
    for d in range(2):
        fn = (lambda x, y: (np.ones_like(x), np.zeros_like(x))) if d == 0 \
            else (lambda x, y: (np.zeros_like(x), np.ones_like(x)))
        consts.append(np.concatenate([
            _spaces.project_velocity(sp_, fn),
            _spaces.project_facet_velocity(sp_, fn)]))
    Ar, Nr = _restricted_pencil(A, N, np.column_stack(consts))
    w = sla.eigh(Ar, Nr, eigvals_only=True)
    return float(w[0]), float(w[-1])


def cell_infsup(sp_, alpha):
    """Per-cell inf-sup constants of the divergence coupling against
    the cell DG norm; returns one beta per cell (no deflation)."""
    S1 = (_assembly.scalar_stiffness(sp_)
          + _assembly.scalar_dg_penalty(sp_, alpha))
    nc, nb = sp_.mesh.num_cells, sp_.nb
    N = np.zeros((nc, 2 * nb, 2 * nb))
    N[:, :nb, :nb] = S1
    N[:, nb:, nb:] = S1
    D = _assembly.local_divergence(sp_)
    L = np.linalg.cholesky(N)
    W = np.linalg.solve(L, D.transpose(0, 2, 1))
    G = np.einsum("cnm,cnk->cmk", W, W, optimize=True)
    # transform by the (near-identity) local pressure mass
    Mloc = _assembly._sym(np.einsum("cqi,cq,cqj->cij", sp_.psi,
                                    sp_.cell_qw, sp_.psi, optimize=True))
    Lm = np.linalg.cholesky(Mloc)
    Y = np.linalg.solve(Lm, G)
    G = np.linalg.solve(Lm, Y.transpose(0, 2, 1)).transpose(0, 2, 1)
    G = 0.5 * (G + G.transpose(0, 2, 1))
    w = np.linalg.eigvalsh(G)
    return np.sqrt(np.maximum(w[:, 0], 0.0))


def facet_infsup(bs):
    """Inf-sup proxy of the facet-pressure rows against the cell DG
    norm: sqrt of the smallest eigenvalue of
    (B_su N_dg^-1 B_su^T, M_s)."""
    sp_ = bs.spaces
    S1 = (_assembly.scalar_stiffness(sp_)
          + _assembly.scalar_dg_penalty(sp_, bs.alpha))
    nc, nb = sp_.mesh.num_cells, sp_.nb
    N = np.zeros((nc, 2 * nb, 2 * nb))
    N[:, :nb, :nb] = S1
    N[:, nb:, nb:] = S1
    off = sp_.nsides * 2 * sp_.nbf + sp_.np_cell
    Bs = bs.local_coupling[:, off:, :]
    rows = bs.local_rows[:, off:] - sp_.n_ubar - sp_.n_p
    L = np.linalg.cholesky(N)
    W = np.linalg.solve(L, Bs.transpose(0, 2, 1))
    G = np.einsum("cnm,cnk->cmk", W, W, optimize=True)
    Gs = _assembly._scatter(rows, rows, G, (sp_.n_pbar, sp_.n_pbar))
    w = sla.eigh(_dense(Gs), _dense(bs.M_s), eigvals_only=True)
    return float(np.sqrt(max(w[0], 0.0)))


def trace_form_ratios(cs, alpha, n_samples=50, seed=3):
    """Rayleigh ratios of the condensed velocity form (variational
    route: lift, then evaluate the form by quadrature) against the
    mean-deflated trace seminorm, over random facet fields vanishing
    on the boundary."""
    from . import condense as _condense
    sp_ = cs.spaces
    Nh = trace_seminorm_matrix(sp_)
    rng = np.random.default_rng(seed)
    free = np.setdiff1d(np.arange(sp_.n_ubar),
                        sp_.constrained_facet_velocity_dofs)
    ratios = []
    for _ in range(n_samples):
        w = np.zeros(sp_.n_ubar)
        w[free] = rng.standard_normal(free.size)
        num = _condense.trace_form_value(cs, alpha, w, w)
        den = w @ (Nh @ w)
        ratios.append(num / den)
    return np.array(ratios)


def field_checks(sp_, u):
    """Pointwise divergence and interelement normal-flux jump maxima
    of a cell velocity, plus the velocity scale for normalization.

    On triangles both maxima vanish to roundoff for a converged
    solution: the divergence of a P_k velocity lies in the pressure
    space and the normal trace jump in the facet pressure space.  On
    physical quadrilaterals neither containment holds, so only
    smallness, not exactness, can be expected."""
    g = sp_.velocity_grad_at_cell_qp(u)
    div = g[..., 0, 0] + g[..., 1, 1]
    vals = sp_.velocity_at_cell_qp(u)
    scale = float(np.sqrt((vals ** 2).sum(-1)).max())

    mesh = sp_.mesh
    jump = np.zeros((mesh.num_facets, sp_.facet_qp.shape[1]))
    for e in range(sp_.nsides):
        f = mesh.cell_facets[:, e]
        tr = sp_.velocity_trace_at_facet_qp(u, e)
        vn = np.einsum("cqd,cd->cq", tr, mesh.facet_normals[f],
                       optimize=True)
        np.add.at(jump, f, mesh.cell_facet_sign[:, e, None] * vn)
    interior = ~mesh.boundary_mask
    return {
        "max_divergence": float(np.abs(div).max()),
        "max_normal_jump": float(np.abs(jump[interior]).max())
        if interior.any() else 0.0,
        "velocity_scale": scale,
    }


class SpectraReport:
    """Loose bag of measured quantities with JSON serialization."""

    def __init__(self, **entries):
        self.__dict__.update(entries)

    def to_dict(self):
        def conv(v):
            if isinstance(v, np.ndarray):
                return [float(x) for x in v]
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, dict):
                return {k: conv(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [conv(x) for x in v]
            return v
        return {k: conv(v) for k, v in self.__dict__.items()}
