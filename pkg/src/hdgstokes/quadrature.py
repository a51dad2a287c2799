"""Gauss quadrature on segments and triangles, batched over a mesh.

Triangle rules come from a Duffy-type collapse of a tensor Gauss rule:
with x = u, y = v(1-u) the integral over the unit triangle becomes
int_0^1 int_0^1 f(u, v(1-u)) (1-u) du dv.  A monomial x^a y^b of total
degree d maps to a polynomial of degree d+1 in u and d in v, so the
point counts below give exactness for all polynomials up to `degree`.

Quadrilateral cells are integrated by splitting along the 0-2 diagonal
into two triangles, which is exact for any bilinear-image geometry with
straight edges (the only kind produced by the mesh module).
"""

import numpy as np


def gauss01(n):
    """n-point Gauss rule on [0, 1], exact through degree 2n-1."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule(degree):
    """Points and weights on the reference triangle (0,0),(1,0),(0,1),
    exact for polynomials of total degree <= degree."""
    nu = (degree + 3) // 2
    nv = (degree + 2) // 2
    xu, wu = gauss01(nu)
    xv, wv = gauss01(nv)
    U, V = np.meshgrid(xu, xv, indexing="ij")
    W = np.outer(wu, wv) * (1.0 - U)
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    return pts, W.ravel()


def _map_triangles(tri_verts, ref_pts, ref_w):
    """Push a reference rule to a batch of straight triangles.

    tri_verts : (m, 3, 2); returns qp (m, nq, 2), qw (m, nq).
    """
    v0 = tri_verts[:, 0]
    e1 = tri_verts[:, 1] - v0
    e2 = tri_verts[:, 2] - v0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    qp = (v0[:, None, :]
          + ref_pts[None, :, 0, None] * e1[:, None, :]
          + ref_pts[None, :, 1, None] * e2[:, None, :])
    qw = det[:, None] * ref_w[None, :]
    return qp, qw


def cell_rule(mesh, degree):
    """Batched physical-cell rule exact through total degree `degree`.

    Returns qp (nc, nq, 2) and qw (nc, nq); weights include the
    physical measure, so qw.sum(axis=1) equals the cell areas.
    """
    ref_pts, ref_w = triangle_rule(degree)
    verts = mesh.vertices[mesh.cells]
    if mesh.cell_type == "triangle":
        return _map_triangles(verts, ref_pts, ref_w)
    qp1, qw1 = _map_triangles(verts[:, [0, 1, 2]], ref_pts, ref_w)
    qp2, qw2 = _map_triangles(verts[:, [0, 2, 3]], ref_pts, ref_w)
    return np.concatenate([qp1, qp2], axis=1), np.concatenate([qw1, qw2], axis=1)


def facet_rule(mesh, n):
    """n-point Gauss rule on every facet (exact through degree 2n-1).

    Returns qp (nf, n, 2) and arc-length weights qw (nf, n).  Points
    follow the stored facet orientation, so both adjacent cells see
    the same physical points in the same order.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    a = mesh.vertices[mesh.facets[:, 0]]
    b = mesh.vertices[mesh.facets[:, 1]]
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    qp = mid[:, None, :] + x[None, :, None] * half[:, None, :]
    qw = 0.5 * mesh.facet_lengths[:, None] * w[None, :]
    return qp, qw
