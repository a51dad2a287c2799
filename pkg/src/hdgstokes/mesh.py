"""Structured 2D meshes with explicit facet topology.

Cells are triangles or quadrilaterals with counter-clockwise vertex
ordering.  Every facet (edge) is stored once; a facet knows its one or
two adjacent cells and carries the unit normal that points out of the
first of them.  The second cell sees the negated normal.
"""

import numpy as np


class Mesh:
    """Conforming mesh of triangles or quadrilaterals.

    Parameters
    ----------
    vertices : (nv, 2) float array
    cells : (nc, 3) or (nc, 4) int array
        Counter-clockwise vertex indices per cell.
    cell_type : str
        'triangle' or 'quadrilateral'.

    Facet topology, diameters, areas and normals are derived on
    construction.  Local edge i of a cell joins its vertices i and
    i+1 (cyclic), so `cell_facets[c, i]` is the global facet sitting
    on that edge and `cell_facet_sign[c, i]` is +1 when the stored
    facet normal already points out of cell c.
    """

    def __init__(self, vertices, cells, cell_type):
        if cell_type not in ("triangle", "quadrilateral"):
            raise ValueError("cell_type must be 'triangle' or 'quadrilateral'")
        self.vertices = np.asarray(vertices, dtype=float)
        self.cells = np.asarray(cells, dtype=np.int64)
        self.cell_type = cell_type
        self.nodes_per_cell = 3 if cell_type == "triangle" else 4
        if self.cells.shape[1] != self.nodes_per_cell:
            raise ValueError("cell array width does not match cell_type")
        self._build_facets()
        self._build_geometry()

    # -- topology ----------------------------------------------------

    def _build_facets(self):
        nc, npc = self.cells.shape
        lookup = {}
        facets = []
        facet_cells = []
        cell_facets = np.empty((nc, npc), dtype=np.int64)
        cell_facet_sign = np.empty((nc, npc), dtype=np.int64)
        for c in range(nc):
            for e in range(npc):
                a = self.cells[c, e]
                b = self.cells[c, (e + 1) % npc]
                key = (a, b) if a < b else (b, a)
                f = lookup.get(key)
                if f is None:
                    f = len(facets)
                    lookup[key] = f
                    facets.append((a, b))
                    facet_cells.append([c, -1])
                    cell_facet_sign[c, e] = 1
                else:
                    if facet_cells[f][1] != -1:
                        raise ValueError("facet shared by more than two cells")
                    facet_cells[f][1] = c
                    cell_facet_sign[c, e] = -1
                cell_facets[c, e] = f
        self.facets = np.array(facets, dtype=np.int64)
        self.facet_cells = np.array(facet_cells, dtype=np.int64)
        self.cell_facets = cell_facets
        self.cell_facet_sign = cell_facet_sign
        self.boundary_mask = self.facet_cells[:, 1] < 0

    def _build_geometry(self):
        v = self.vertices
        xc = v[self.cells]                      # (nc, npc, 2)
        # shoelace area; positive iff counter-clockwise
        x, y = xc[..., 0], xc[..., 1]
        xs, ys = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
        self.areas = 0.5 * np.sum(x * ys - xs * y, axis=1)
        if np.any(self.areas <= 0):
            raise ValueError("degenerate or clockwise cell (check jitter)")
        # diameter = max pairwise vertex distance
        d = xc[:, :, None, :] - xc[:, None, :, :]
        self.h = np.sqrt((d ** 2).sum(-1)).max(axis=(1, 2))
        # facet geometry; normal points out of the first adjacent cell
        a = v[self.facets[:, 0]]
        b = v[self.facets[:, 1]]
        t = b - a
        self.facet_lengths = np.sqrt((t ** 2).sum(-1))
        self.facet_midpoints = 0.5 * (a + b)
        tn = t / self.facet_lengths[:, None]
        self.facet_normals = np.column_stack([tn[:, 1], -tn[:, 0]])
        self.cell_centroids = xc.mean(axis=1)

    # -- queries -----------------------------------------------------

    @property
    def num_cells(self):
        return self.cells.shape[0]

    @property
    def num_facets(self):
        return self.facets.shape[0]

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def mesh_ratio(self):
        """Quasi-uniformity ratio h_min / h_max."""
        return self.h.min() / self.h.max()


def generate(nx, ny, cell_type="triangle", domain=(-1.0, -1.0, 1.0, 1.0),
             jitter=0.0, seed=0):
    """Structured mesh of an axis-aligned rectangle.

    Parameters
    ----------
    nx, ny : int
        Number of squares per direction; each square becomes two
        triangles (diagonal alternating with the square's parity) or
        one quadrilateral.
    domain : (x0, y0, x1, y1)
    jitter : float
        Relative interior-vertex perturbation in [0, 0.3]; boundary
        vertices never move.  Seeded, hence reproducible.
    """
    if nx < 1 or ny < 1:
        raise ValueError("need at least one cell per direction")
    if not 0.0 <= jitter <= 0.3:
        raise ValueError("jitter must lie in [0, 0.3]")
    x0, y0, x1, y1 = domain
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        dx, dy = (x1 - x0) / nx, (y1 - y0) / ny
        interior = np.zeros(len(verts), dtype=bool)
        idx = np.arange(len(verts)).reshape(nx + 1, ny + 1)
        interior[idx[1:-1, 1:-1].ravel()] = True
        shift = rng.uniform(-jitter, jitter, size=(interior.sum(), 2))
        verts[interior] += shift * np.array([dx, dy])

    def vid(i, j):
        return i * (ny + 1) + j

    cells = []
    if cell_type == "triangle":
        for i in range(nx):
            for j in range(ny):
                v00, v10 = vid(i, j), vid(i + 1, j)
                v11, v01 = vid(i + 1, j + 1), vid(i, j + 1)
                if (i + j) % 2 == 0:
                    cells.append((v00, v10, v11))
                    cells.append((v00, v11, v01))
                else:
                    cells.append((v00, v10, v01))
                    cells.append((v10, v11, v01))
    elif cell_type == "quadrilateral":
        for i in range(nx):
            for j in range(ny):
                cells.append((vid(i, j), vid(i + 1, j),
                              vid(i + 1, j + 1), vid(i, j + 1)))
    else:
        raise ValueError("cell_type must be 'triangle' or 'quadrilateral'")
    return Mesh(verts, np.array(cells), cell_type)


def refine(mesh):
    """Uniform refinement: every cell splits into four.

    Triangles split at edge midpoints, quadrilaterals at edge midpoints
    plus the vertex centroid.  On structured meshes all diameters halve
    (for triangles this holds on jittered meshes too, since midpoint
    subdivision produces similar children).
    """
    v_old = mesh.vertices
    nv = len(v_old)
    mid = 0.5 * (v_old[mesh.facets[:, 0]] + v_old[mesh.facets[:, 1]])
    if mesh.cell_type == "triangle":
        verts = np.vstack([v_old, mid])
        m = nv + mesh.cell_facets          # (nc, 3) midpoint vertex ids
        c = mesh.cells
        children = np.empty((4 * mesh.num_cells, 3), dtype=np.int64)
        children[0::4] = np.column_stack([c[:, 0], m[:, 0], m[:, 2]])
        children[1::4] = np.column_stack([m[:, 0], c[:, 1], m[:, 1]])
        children[2::4] = np.column_stack([m[:, 2], m[:, 1], c[:, 2]])
        children[3::4] = np.column_stack([m[:, 0], m[:, 1], m[:, 2]])
    else:
        centroids = mesh.vertices[mesh.cells].mean(axis=1)
        verts = np.vstack([v_old, mid, centroids])
        m = nv + mesh.cell_facets          # (nc, 4)
        ctr = nv + mesh.num_facets + np.arange(mesh.num_cells)
        c = mesh.cells
        children = np.empty((4 * mesh.num_cells, 4), dtype=np.int64)
        children[0::4] = np.column_stack([c[:, 0], m[:, 0], ctr, m[:, 3]])
        children[1::4] = np.column_stack([m[:, 0], c[:, 1], m[:, 1], ctr])
        children[2::4] = np.column_stack([ctr, m[:, 1], c[:, 2], m[:, 2]])
        children[3::4] = np.column_stack([m[:, 3], ctr, m[:, 2], c[:, 3]])
    return Mesh(verts, children, mesh.cell_type)


def boundary_facets(mesh, predicate=None):
    """Indices of boundary facets, optionally filtered by a predicate
    evaluated at the facet midpoint: predicate(x, y) -> bool."""
    idx = np.flatnonzero(mesh.boundary_mask)
    if predicate is None:
        return idx
    mids = mesh.facet_midpoints[idx]
    keep = [predicate(x, y) for x, y in mids]
    return idx[np.asarray(keep, dtype=bool)]


def write_mesh(mesh, path):
    """Plain-text node/element dump."""
    with open(path, "w") as fh:
        fh.write(f"# vertices {mesh.num_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        fh.write(f"# cells {mesh.num_cells} {mesh.cell_type}\n")
        for row in mesh.cells:
            fh.write(" ".join(str(i) for i in row) + "\n")
        fh.write(f"# boundary_facets {int(mesh.boundary_mask.sum())}\n")
        for f in np.flatnonzero(mesh.boundary_mask):
            a, b = mesh.facets[f]
            fh.write(f"{a} {b}\n")
