"""Assembly of the hybridized Stokes saddle-point system.

Velocity block (per cell K, both components identically):

    a(w, v) = (grad w, grad v)_K
            + alpha/h_K <w - wbar, v - vbar>_dK
            - <w - wbar, dn v>_dK - <dn w, v - vbar>_dK

Divergence coupling:

    b((q, qbar), v) = -(q, div v)_K + <v.n, qbar>_dK

so the facet-velocity column of B is structurally zero.  Blocks are
indexed u (cell velocity), t (facet velocity trace), p (cell
pressure), s (facet pressure):

    A = [[A_uu, A_tu^T], [A_tu, A_tt]],   B = [[B_pu, 0], [B_su, 0]]

Pressure masses: M_p is the plain cell mass (identity in the modal
basis); M_s carries the facet weight h_K+ + h_K- (interior) or h_K
(boundary).

Dirichlet data on the facet velocity is eliminated symmetrically:
constrained rows/columns of A are cleared, the diagonal is set to one,
and the coupling moves to the right-hand side.  Pressure rows never
see the boundary datum, which is consistent only for data with zero
normal flux per facet.
"""

import numpy as np
import scipy.sparse as sp

from . import spaces as _spaces


def _sym(batch):
    """Round a batch of symmetric-by-definition blocks to exact
    symmetry; the unsymmetrized einsum differs by rounding only."""
    return 0.5 * (batch + batch.transpose(0, 2, 1))


def _scatter(rows, cols, vals, shape):
    """Accumulate batched dense blocks into CSR.

    rows (m, r), cols (m, c), vals (m, r, c); duplicate index pairs
    are summed.
    """
    m, r = rows.shape
    c = cols.shape[1]
    i = np.broadcast_to(rows[:, :, None], (m, r, c)).ravel()
    j = np.broadcast_to(cols[:, None, :], (m, r, c)).ravel()
    return sp.coo_matrix((vals.ravel(), (i, j)), shape=shape).tocsr()


def _dof_maps(sp_):
    nc, nf = sp_.mesh.num_cells, sp_.mesh.num_facets
    nb, nbf, npc = sp_.nb, sp_.nbf, sp_.np_cell
    cells = np.arange(nc)
    facets = np.arange(nf)
    maps = {
        "u": cells[:, None] * 2 * nb + np.arange(2 * nb),
        "u0": cells[:, None] * 2 * nb + np.arange(nb),
        "u1": cells[:, None] * 2 * nb + nb + np.arange(nb),
        "p": cells[:, None] * npc + np.arange(npc),
        "t": facets[:, None] * 2 * nbf + np.arange(2 * nbf),
        "s": facets[:, None] * nbf + np.arange(nbf),
    }
    maps["t0"] = facets[:, None] * 2 * nbf + np.arange(nbf)
    maps["t1"] = maps["t0"] + nbf
    return maps


# -- batched element kernels (scalar, shared by both components) ------

def scalar_stiffness(sp_):
    """(nc, nb, nb) cell gradient products."""
    return _sym(np.einsum("cqi,cq,cqj->cij", sp_.gx, sp_.cell_qw, sp_.gx,
                          optimize=True)
                + np.einsum("cqi,cq,cqj->cij", sp_.gy, sp_.cell_qw, sp_.gy,
                            optimize=True))


def _side_weights(sp_, e):
    return sp_.facet_qw[sp_.mesh.cell_facets[:, e]]


def _side_normal_derivative(sp_, e):
    n = sp_.normal[:, e]
    return (sp_.gx_f[:, e] * n[:, None, 0, None]
            + sp_.gy_f[:, e] * n[:, None, 1, None])


def scalar_dg_penalty(sp_, alpha):
    """(nc, nb, nb) sum over sides of alpha/h <phi, phi>."""
    pen = alpha / sp_.mesh.h
    out = np.zeros((sp_.mesh.num_cells, sp_.nb, sp_.nb))
    for e in range(sp_.nsides):
        w = _side_weights(sp_, e) * pen[:, None]
        ph = sp_.phi_f[:, e]
        out += np.einsum("cqi,cq,cqj->cij", ph, w, ph, optimize=True)
    return _sym(out)


def local_divergence(sp_):
    """(nc, np_cell, 2*nb) blocks of -(q, div v)_K."""
    bx = -np.einsum("cqi,cq,cqj->cij", sp_.psi, sp_.cell_qw, sp_.gx,
                    optimize=True)
    by = -np.einsum("cqi,cq,cqj->cij", sp_.psi, sp_.cell_qw, sp_.gy,
                    optimize=True)
    return np.concatenate([bx, by], axis=2)


def facet_mass_weights(mesh):
    """Facet weight h_K+ + h_K- (interior) or h_K (boundary)."""
    fc = mesh.facet_cells
    w = mesh.h[fc[:, 0]].copy()
    inner = fc[:, 1] >= 0
    w[inner] += mesh.h[fc[inner, 1]]
    return w


class BlockSystem:
    """Assembled blocks plus constraint bookkeeping.

    Attributes ending in the block names of the module docstring hold
    CSR matrices; L_u, L_t the velocity right-hand sides; g_values the
    eliminated boundary datum embedded in a full facet-velocity vector.
    """

    def __init__(self, sp_, alpha):
        self.spaces = sp_
        self.alpha = alpha
        self.constrained = sp_.constrained_facet_velocity_dofs
        self.g_values = np.zeros(sp_.n_ubar)

    def velocity_matrix(self):
        return sp.bmat([[self.A_uu, self.A_tu.T],
                        [self.A_tu, self.A_tt]], format="csr")

    def divergence_matrix(self):
        z = sp.csr_matrix((self.B_pu.shape[0] + self.B_su.shape[0],
                           self.spaces.n_ubar))
        return sp.bmat([[sp.vstack([self.B_pu, self.B_su]), z]],
                       format="csr")

    def saddle_matrix(self):
        A = self.velocity_matrix()
        B = self.divergence_matrix()
        z = sp.csr_matrix((B.shape[0], B.shape[0]))
        return sp.bmat([[A, B.T], [B, z]], format="csr")

    def pressure_mass(self):
        return sp.block_diag([self.M_p, self.M_s], format="csr")

    def full_rhs(self):
        np_tot = self.spaces.n_p + self.spaces.n_pbar
        return np.concatenate([self.L_u, self.L_t, np.zeros(np_tot)])


def build_block_system(sp_, problem, bcs=True):
    """Assemble all blocks; with bcs=True the boundary velocity datum
    is projected and eliminated symmetrically."""
    alpha = problem.alpha
    mesh = sp_.mesh
    nc, nf = mesh.num_cells, mesh.num_facets
    nb, nbf, npc = sp_.nb, sp_.nbf, sp_.np_cell
    dm = _dof_maps(sp_)
    pen = alpha / mesh.h

    bs = BlockSystem(sp_, alpha)

    # cell-cell velocity block
    S = scalar_stiffness(sp_)
    auu = S.copy()
    atu_rows, atu_cols, atu_vals = [], [], []
    att_rows = []
    bsu_rows = []
    for e in range(sp_.nsides):
        f = mesh.cell_facets[:, e]
        w = _side_weights(sp_, e)
        ph = sp_.phi_f[:, e]
        dn = _side_normal_derivative(sp_, e)
        psib = sp_.psibar[f]
        wpen = w * pen[:, None]

        auu += _sym(np.einsum("cqi,cq,cqj->cij", ph, wpen, ph,
                            optimize=True))
        X = np.einsum("cqi,cq,cqj->cij", dn, w, ph, optimize=True)
        auu -= X + X.transpose(0, 2, 1)

        # facet row, cell column: <dn w, vbar> - alpha/h <w, vbar>
        T = (np.einsum("cqi,cq,cqj->cij", psib, w, dn, optimize=True)
             - np.einsum("cqi,cq,cqj->cij", psib, wpen, ph, optimize=True))
        # facet-facet penalty and the normal flux row <v.n, sbar>
        P = _sym(np.einsum("cqi,cq,cqj->cij", psib, wpen, psib,
                          optimize=True))
        n = sp_.normal[:, e]
        F0 = np.einsum("cqi,cq,cqj,c->cij", psib, w, ph, n[:, 0],
                       optimize=True)
        F1 = np.einsum("cqi,cq,cqj,c->cij", psib, w, ph, n[:, 1],
                       optimize=True)

        for comp, tkey, ukey in ((0, "t0", "u0"), (1, "t1", "u1")):
            atu_rows.append(dm[tkey][f])
            atu_cols.append(dm[ukey])
            atu_vals.append(T)
            att_rows.append((dm[tkey][f], P))
        bsu_rows.append((dm["s"][f],
                         np.concatenate([F0, F1], axis=2)))

    # scatter the scalar cell block into both components
    bs.A_uu = (_scatter(dm["u0"], dm["u0"], auu, (sp_.n_u, sp_.n_u))
               + _scatter(dm["u1"], dm["u1"], auu, (sp_.n_u, sp_.n_u)))
    bs.A_tu = sum(_scatter(r, c, v, (sp_.n_ubar, sp_.n_u))
                  for r, c, v in zip(atu_rows, atu_cols, atu_vals))
    bs.A_tt = sum(_scatter(r, r, v, (sp_.n_ubar, sp_.n_ubar))
                  for r, v in att_rows)
    bs.B_su = sum(_scatter(r, dm["u"], v, (sp_.n_pbar, sp_.n_u))
                  for r, v in bsu_rows)
    bs.B_pu = _scatter(dm["p"], dm["u"], local_divergence(sp_),
                       (sp_.n_p, sp_.n_u))

    _store_local_blocks(bs, dm, auu, atu_vals, bsu_rows)

    # pressure masses (identity / weighted identity in the modal basis,
    # but assembled honestly)
    mp = _sym(np.einsum("cqi,cq,cqj->cij", sp_.psi, sp_.cell_qw, sp_.psi,
                        optimize=True))
    bs.M_p = _scatter(dm["p"], dm["p"], mp, (sp_.n_p, sp_.n_p))
    fw = facet_mass_weights(mesh)
    ms = _sym(np.einsum("fqi,fq,fqj->fij", sp_.psibar,
                        sp_.facet_qw * fw[:, None], sp_.psibar,
                        optimize=True))
    bs.M_s = _scatter(dm["s"], dm["s"], ms, (sp_.n_pbar, sp_.n_pbar))

    # body force
    F = _spaces._eval_vector(problem.body_force, sp_.cell_qp)
    bs.L_u = np.einsum("cq,cqd,cqi->cdi", sp_.cell_qw, F, sp_.phi,
                       optimize=True).ravel()
    bs.L_t = np.zeros(sp_.n_ubar)

    if bcs:
        g = _spaces.interpolate_boundary(sp_, problem.boundary_velocity)
        _eliminate(bs, g)
    return bs


def _store_local_blocks(bs, dm, auu, atu_vals, bsu_rows):
    """Per-cell dense blocks for static condensation.

    local_auu is the (2nb)^2 cell-velocity block (A_uu is cell-block
    diagonal).  local_coupling stacks all rows of the system coupled
    to the cell's interior velocity: facet-velocity rows side by side
    (component-major per side), then cell pressure, then the cell's
    facet-pressure rows.  local_rows holds the matching global indices
    in the condensed ordering (t, then p, then s).
    """
    sp_ = bs.spaces
    mesh = sp_.mesh
    nc = mesh.num_cells
    nb, nbf, npc = sp_.nb, sp_.nbf, sp_.np_cell
    ns = sp_.nsides
    mk = ns * 2 * nbf + npc + ns * nbf

    lc = np.zeros((nc, mk, 2 * nb))
    rows = np.empty((nc, mk), dtype=np.int64)
    # atu_vals is ordered (side, component); both components share one
    # scalar block per side
    for e in range(ns):
        f = mesh.cell_facets[:, e]
        T = atu_vals[2 * e]
        off = e * 2 * nbf
        lc[:, off:off + nbf, :nb] = T
        lc[:, off + nbf:off + 2 * nbf, nb:] = T
        rows[:, off:off + nbf] = dm["t0"][f]
        rows[:, off + nbf:off + 2 * nbf] = dm["t1"][f]
    off = ns * 2 * nbf
    lc[:, off:off + npc, :] = local_divergence(sp_)
    rows[:, off:off + npc] = sp_.n_ubar + dm["p"]
    off += npc
    for e, (ridx, F) in enumerate(bsu_rows):
        lc[:, off + e * nbf:off + (e + 1) * nbf, :] = F
        rows[:, off + e * nbf:off + (e + 1) * nbf] = (
            sp_.n_ubar + sp_.n_p + ridx)

    la = np.zeros((nc, 2 * nb, 2 * nb))
    la[:, :nb, :nb] = auu
    la[:, nb:, nb:] = auu
    bs.local_auu = la
    bs.local_coupling = lc
    bs.local_rows = rows


def _eliminate(bs, g):
    """Symmetric elimination of the facet-velocity Dirichlet datum."""
    sp_ = bs.spaces
    cI = bs.constrained
    free = np.ones(sp_.n_ubar)
    free[cI] = 0.0
    Df = sp.diags(free)
    Dc = sp.diags(1.0 - free)

    gc = np.zeros(sp_.n_ubar)
    gc[cI] = g[cI]
    bs.L_u = bs.L_u - bs.A_tu.T @ gc
    bs.L_t = bs.L_t - bs.A_tt @ gc
    bs.L_t[cI] = g[cI]

    bs.A_tu = (Df @ bs.A_tu).tocsr()
    bs.A_tt = (Df @ bs.A_tt @ Df + Dc).tocsr()
    bs.g_values = gc
    # keep local condensation data consistent with the modified rows
    mask = np.isin(bs.local_rows, cI)
    bs.local_coupling[mask] = 0.0


def boundary_flux_per_facet(sp_, g):
    """Normal flux of the projected boundary datum per boundary facet;
    must vanish for the pressure rows to remain consistent."""
    mesh = sp_.mesh
    bf = np.flatnonzero(mesh.boundary_mask)
    c = sp_.facet_velocity_coeffs(g)[bf]
    vals = np.einsum("fqi,fdi->fqd", sp_.psibar[bf], c, optimize=True)
    n = mesh.facet_normals[bf]
    return np.einsum("fq,fqd,fd->f", sp_.facet_qw[bf], vals, n,
                     optimize=True)


# -- direct quadrature evaluation of the forms (independent of the
#    assembled matrices; used as a second route in tests) -------------

def a_form_value(sp_, alpha, u1, t1, u2, t2):
    """a((w, wbar), (v, vbar)) evaluated term by term by quadrature."""
    g1 = sp_.velocity_grad_at_cell_qp(u1)
    g2 = sp_.velocity_grad_at_cell_qp(u2)
    val = np.einsum("cq,cqdj,cqdj->", sp_.cell_qw, g1, g2, optimize=True)
    pen = alpha / sp_.mesh.h
    c1 = sp_.facet_velocity_coeffs(t1)
    c2 = sp_.facet_velocity_coeffs(t2)
    for e in range(sp_.nsides):
        f = sp_.mesh.cell_facets[:, e]
        w = _side_weights(sp_, e)
        n = sp_.normal[:, e]
        w1 = sp_.velocity_trace_at_facet_qp(u1, e)
        w2 = sp_.velocity_trace_at_facet_qp(u2, e)
        wb1 = np.einsum("cqi,cdi->cqd", sp_.psibar[f], c1[f], optimize=True)
        wb2 = np.einsum("cqi,cdi->cqd", sp_.psibar[f], c2[f], optimize=True)
        gx1 = np.einsum("cqi,cdi->cqd", sp_.gx_f[:, e],
                        sp_.velocity_coeffs(u1), optimize=True)
        gy1 = np.einsum("cqi,cdi->cqd", sp_.gy_f[:, e],
                        sp_.velocity_coeffs(u1), optimize=True)
        gx2 = np.einsum("cqi,cdi->cqd", sp_.gx_f[:, e],
                        sp_.velocity_coeffs(u2), optimize=True)
        gy2 = np.einsum("cqi,cdi->cqd", sp_.gy_f[:, e],
                        sp_.velocity_coeffs(u2), optimize=True)
        dn1 = gx1 * n[:, None, 0, None] + gy1 * n[:, None, 1, None]
        dn2 = gx2 * n[:, None, 0, None] + gy2 * n[:, None, 1, None]
        j1 = w1 - wb1
        j2 = w2 - wb2
        val += np.einsum("c,cq,cqd,cqd->", pen, w, j1, j2, optimize=True)
        val -= np.einsum("cq,cqd,cqd->", w, j1, dn2, optimize=True)
        val -= np.einsum("cq,cqd,cqd->", w, dn1, j2, optimize=True)
    return val


def b_form_value(sp_, p, s, u):
    """b((q, qbar), v) by quadrature."""
    g = sp_.velocity_grad_at_cell_qp(u)
    div = g[..., 0, 0] + g[..., 1, 1]
    pv = np.einsum("cqi,ci->cq", sp_.psi,
                   p.reshape(sp_.mesh.num_cells, -1), optimize=True)
    val = -np.einsum("cq,cq,cq->", sp_.cell_qw, pv, div, optimize=True)
    sv = s.reshape(sp_.mesh.num_facets, -1)
    for e in range(sp_.nsides):
        f = sp_.mesh.cell_facets[:, e]
        w = _side_weights(sp_, e)
        n = sp_.normal[:, e]
        tr = sp_.velocity_trace_at_facet_qp(u, e)
        vn = tr[..., 0] * n[:, None, 0] + tr[..., 1] * n[:, None, 1]
        qb = np.einsum("cqi,ci->cq", sp_.psibar[f], sv[f], optimize=True)
        val += np.einsum("cq,cq,cq->", w, vn, qb, optimize=True)
    return val
