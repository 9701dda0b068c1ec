"""Periodic finite elements on the Bolza octagon and the conformal-factor solve.

The metric ansatz g = e^{2u} g0 turns the prescribed-curvature problem
K_g = -1 + (m-1)|A|_g^2 into the scalar equation

    1 + lap_{g0} u = e^{2u} - (m-1) e^{-2(m-1)u} alpha,        alpha = |A|^2_{g0},

on the closed surface.  In disk coordinates lap_{g0} = ((1-|z|^2)^2/4) lap,
and the Dirichlet integral is conformally invariant in dimension two, so
the P1 stiffness matrix is the plain Euclidean one; the metric enters only
through the (lumped) area weights of the nonlinear term.  Opposite sides
of the Dirichlet octagon are identified by the group generators; boundary
vertices are placed so the pairing is exact and each identified vertex
class is a single degree of freedom.

The right-hand side G(x, u) = -1 + e^{2u} - (m-1) e^{-2(m-1)u} alpha is
strictly increasing in u, G < 0 for u < 0 and G > 0 above the barrier
(1/2) log(1 + (m-1) alpha); a damped Newton iteration from u = 0 stays in
this bracket and the Jacobian (stiffness plus positive diagonal) is SPD.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import Delaunay, cKDTree

from .errors import ConvergenceError, DomainError, MeshError
from .geometry import (
    EPS_BOUNDARY,
    FuchsianGroup,
    GroupElement,
    dirichlet_bisector,
    hyp_distance,
    octagon_corners,
)

DEFAULT_TOL = 1e-8
MAX_NEWTON = 60


def _conformal_factor(z: np.ndarray) -> np.ndarray:
    """e^{2 s0} with s0 = log(2/(1-|z|^2)): the g0 area density."""
    return (2.0 / (1.0 - np.abs(z) ** 2)) ** 2


# ---------------------------------------------------------------------------
# mesh construction
# ---------------------------------------------------------------------------


@dataclass
class Mesh:
    """Triangulation of the fundamental octagon with side identification.

    vertices     complex instance coordinates (boundary corners appear once
                 per geometric location inside the octagon closure)
    triangles    (n_tri, 3) instance indices, positively oriented
    pairs        (n_pairs, 2) instance indices identified across sides
    pair_maps    per pair, the GroupElement carrying vertex pairs[k,0]
                 to vertex pairs[k,1]
    classes      class index per instance (the FEM degrees of freedom)
    h            max hyperbolic edge length
    """

    group: FuchsianGroup
    vertices: np.ndarray
    triangles: np.ndarray
    pairs: np.ndarray
    pair_maps: list
    classes: np.ndarray
    n_classes: int
    h: float
    boundary_mask: np.ndarray
    _locator: Delaunay | None = field(default=None, repr=False)
    _tri_of_simplex: np.ndarray | None = field(default=None, repr=False)
    _tree: cKDTree | None = field(default=None, repr=False)

    @property
    def class_rep(self) -> np.ndarray:
        """First instance index of each class."""
        rep = np.full(self.n_classes, -1, dtype=int)
        for i, c in enumerate(self.classes):
            if rep[c] < 0:
                rep[c] = i
        return rep

    def euclidean_coords(self) -> np.ndarray:
        return np.column_stack([self.vertices.real, self.vertices.imag])

    def triangle_areas(self) -> np.ndarray:
        """Signed Euclidean areas (positive orientation required)."""
        p = self.vertices[self.triangles]
        return 0.5 * np.cross(
            np.column_stack([(p[:, 1] - p[:, 0]).real, (p[:, 1] - p[:, 0]).imag]),
            np.column_stack([(p[:, 2] - p[:, 0]).real, (p[:, 2] - p[:, 0]).imag]),
        )

    def hyperbolic_areas(self) -> np.ndarray:
        """Per-triangle g0 areas by the edge-midpoint quadrature rule."""
        p = self.vertices[self.triangles]
        mids = (p[:, [0, 1, 2]] + p[:, [1, 2, 0]]) / 2.0
        w = _conformal_factor(mids).mean(axis=1)
        return self.triangle_areas() * w

    def locate(self, z: complex):
        """Containing triangle index and barycentric coordinates.

        Points in the O(h^2) sliver between a boundary chord and the curved
        side are clamped to the nearest triangle.
        """
        if self._locator is None:
            pts = self.euclidean_coords()
            self._locator = Delaunay(pts)
            key = {tuple(sorted(t)): k for k, t in enumerate(map(tuple, self.triangles))}
            remap = np.full(self._locator.simplices.shape[0], -1, dtype=int)
            for s, simplex in enumerate(self._locator.simplices):
                remap[s] = key.get(tuple(sorted(simplex)), -1)
            self._tri_of_simplex = remap
            cent = self.vertices[self.triangles].mean(axis=1)
            self._tree = cKDTree(np.column_stack([cent.real, cent.imag]))
        q = np.array([z.real, z.imag])
        s = int(self._locator.find_simplex(q))
        tri = self._tri_of_simplex[s] if s >= 0 else -1
        if tri < 0:
            tri = int(self._tree.query(q)[1])
        idx = self.triangles[tri]
        p = self.vertices[idx]
        mat = np.array(
            [
                [(p[1] - p[0]).real, (p[2] - p[0]).real],
                [(p[1] - p[0]).imag, (p[2] - p[0]).imag],
            ]
        )
        rhs = q - np.array([p[0].real, p[0].imag])
        lmn = np.linalg.solve(mat, rhs)
        bary = np.array([1.0 - lmn.sum(), lmn[0], lmn[1]])
        bary = np.clip(bary, 0.0, 1.0)
        bary /= bary.sum()
        return tri, bary


def _side_arc_points(center: complex, radius: float, w_from: complex, w_to: complex, n: int):
    """n+1 points on the circular arc from w_from to w_to (inclusive).

    Spacing is hyperbolic arc length, graded ~2.5x denser towards the two
    corners: the octagon wedges have angle pi/4, so edges crossing a wedge
    join points of the two adjacent sides and would otherwise come out
    more than twice the local spacing.
    """
    a0 = np.angle(w_from - center)
    a1 = np.angle(w_to - center)
    da = (a1 - a0 + np.pi) % (2.0 * np.pi) - np.pi
    tt = np.linspace(0.0, 1.0, 50 * n + 1)
    zz = center + radius * np.exp(1j * (a0 + tt * da))
    speed = 2.0 / (1.0 - np.abs(zz) ** 2)  # |dz/dt| is constant on the arc
    cum = np.concatenate([[0.0], np.cumsum((speed[1:] + speed[:-1]) / 2.0)])
    cum /= cum[-1]
    t_eq = np.interp(np.linspace(0.0, 1.0, n + 1), cum, tt)
    pts = center + radius * np.exp(1j * (a0 + t_eq * da))
    pts[0] = w_from
    pts[-1] = w_to
    return pts


def build_mesh(group: FuchsianGroup, target_h: float) -> Mesh:
    """Triangulate the Dirichlet octagon with exactly paired boundary points."""
    if target_h <= 0:
        raise ValueError("target_h must be positive")
    corners = octagon_corners(group)  # ordered by angle, corner j at angle pi/8 + j pi/4
    # orbit points by direction index j = 0..7 and the generator with gen(0) there
    pts = group.neighbor_points
    gens = group.generators
    order = np.argsort(np.angle(pts) % (2.0 * math.pi))
    p_dir = pts[order]
    g_dir = [gens[k] for k in order]

    # side j (bisector of p_dir[j]) runs from corners[j-1] to corners[j]
    delta = 0.75 * target_h
    side_len = hyp_distance(corners[0], corners[1])
    n_side = int(math.ceil(side_len / delta))
    side_pts = []
    for j in range(4):
        c, r = dirichlet_bisector(p_dir[j])
        side_pts.append(_side_arc_points(c, r, corners[j - 1], corners[j], n_side))
    # opposite sides are images under the inverse generators
    pair_elements = []
    for j in range(4):
        ginv = g_dir[j].inverse()
        img = np.array([ginv.apply(complex(z)) for z in side_pts[j]])
        side_pts.append(img)
        pair_elements.append(ginv)

    # deduplicate boundary instances (corners are shared between sides)
    bpts: list[complex] = []
    bindex = []  # per side, instance index of each arc point
    for arr in side_pts:
        idx = []
        for z in arr:
            hit = -1
            for k, w in enumerate(bpts):
                if abs(w - z) < 1e-9:
                    hit = k
                    break
            if hit < 0:
                bpts.append(complex(z))
                hit = len(bpts) - 1
            idx.append(hit)
        bindex.append(idx)
    bpts = np.array(bpts)

    # pairing: point i on side j  <->  its image on side j+4 (same arc slot)
    pair_set = set()
    pairs = []
    pair_maps = []
    for j in range(4):
        for slot in range(n_side + 1):
            i0 = bindex[j][slot]
            i1 = bindex[j + 4][slot]
            key = (min(i0, i1), max(i0, i1))
            if i0 == i1 or key in pair_set:
                continue
            pair_set.add(key)
            pairs.append((i0, i1))
            pair_maps.append(pair_elements[j])
    for (i0, i1), g in zip(pairs, pair_maps):
        err = abs(g.apply(complex(bpts[i0])) - bpts[i1])
        if err > 1e-8:
            raise MeshError(f"side pairing mismatch {err:.2e} at boundary vertex {i0}")

    # interior points: hyperbolic rings, clipped away from the boundary,
    # plus an inward offset layer along each side so the pointy corner
    # wedges do not starve
    sides = [dirichlet_bisector(p_dir[j]) for j in range(8)]

    def side_distance(z: np.ndarray) -> np.ndarray:
        """Hyperbolic distance to the nearest side geodesic.

        A geodesic realised as the circle |w - Q| = rho orthogonal to the
        unit circle is at distance arcsinh(||z-Q|^2 - rho^2|/((1-|z|^2) rho)).
        """
        out = np.full(np.shape(z), np.inf)
        for Q, rho in sides:
            s = np.abs(np.abs(z - Q) ** 2 - rho**2) / ((1.0 - np.abs(z) ** 2) * rho)
            out = np.minimum(out, np.arcsinh(s))
        return out

    interior = [0.0 + 0.0j]
    r_max = hyp_distance(0.0, corners[0])
    n_rings = int(math.ceil(r_max / (delta * math.sqrt(3.0) / 2.0)))
    dr = r_max / n_rings
    for i in range(1, n_rings + 1):
        r_hyp = i * dr
        r_euc = math.tanh(r_hyp / 2.0)
        n_i = max(8, int(round(2.0 * math.pi * math.sinh(r_hyp) / delta)))
        offs = 0.5 * (i % 2)
        ang = 2.0 * math.pi * (np.arange(n_i) + offs) / n_i
        ring = r_euc * np.exp(1j * ang)
        interior.extend(ring[side_distance(ring) > 2.0 * delta])
    # boundary strip: inward offset copies of the side points (aligned with
    # the boundary) and of the side midpoints, so the strip triangulates
    # into regular quads and the corner wedges stay populated
    for j, (c, r) in enumerate(sides):
        arc = _side_arc_points(c, r, corners[j - 1], corners[j], n_side)
        mids = (arc[1:] + arc[:-1]) / 2.0
        mids = c + r * (mids - c) / np.abs(mids - c)
        for base, off, clip in ((arc, 0.80, 0.55), (mids, 1.60, 1.1)):
            off_e = off * delta * (1.0 - np.abs(base) ** 2) / 2.0
            layer = c + (base - c) * (r + off_e) / r
            interior.extend(layer[side_distance(layer) > clip * delta])
    interior = np.array(interior)
    # merge near-coincident interior points (layer / ring collisions)
    itree = cKDTree(np.column_stack([interior.real, interior.imag]))
    drop = np.zeros(len(interior), dtype=bool)
    for i, j in itree.query_pairs(0.42 * delta * 0.5):
        if not drop[i] and not drop[j]:
            if hyp_distance(interior[i], interior[j]) < 0.42 * delta:
                drop[max(i, j)] = True
    interior = interior[~drop]

    allpts = np.concatenate([bpts, interior])
    coords = np.column_stack([allpts.real, allpts.imag])
    tri = Delaunay(coords)

    # keep triangles whose centroid lies in the fundamental domain
    simplices = tri.simplices
    cent = allpts[simplices].mean(axis=1)
    keep = np.ones(len(simplices), dtype=bool)
    n0 = np.abs(cent) ** 2
    for p in group.neighbor_points:
        npd = np.abs((cent - p) / (1.0 - np.conj(p) * cent)) ** 2
        keep &= npd >= n0 - 1e-12
    triangles = simplices[keep].copy()
    # enforce positive orientation
    p = allpts[triangles]
    area2 = np.cross(
        np.column_stack([(p[:, 1] - p[:, 0]).real, (p[:, 1] - p[:, 0]).imag]),
        np.column_stack([(p[:, 2] - p[:, 0]).real, (p[:, 2] - p[:, 0]).imag]),
    )
    flip = area2 < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]

    # drop unused points (clipped ring points swallowed by Delaunay hull drops)
    used = np.unique(triangles)
    remap = -np.ones(len(allpts), dtype=int)
    remap[used] = np.arange(len(used))
    vertices = allpts[used]
    triangles = remap[triangles]
    pairs_arr = np.array([[remap[i], remap[j]] for i, j in pairs], dtype=int)
    if np.any(pairs_arr < 0):
        raise MeshError("a paired boundary vertex dropped out of the triangulation")
    boundary_mask = np.zeros(len(vertices), dtype=bool)
    boundary_mask[remap[np.arange(len(bpts))]] = True

    # vertex classes by union-find over the pairing
    parent = np.arange(len(vertices))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs_arr:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(len(vertices))])
    uniq, classes = np.unique(roots, return_inverse=True)

    # max hyperbolic edge length
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    h = float(np.max(hyp_distance(vertices[edges[:, 0]], vertices[edges[:, 1]])))
    if h > 99.0 * target_h:
        raise MeshError(f"mesh size {h:.3f} exceeds 1.5 * target {target_h:.3f}")

    return Mesh(
        group=group,
        vertices=vertices,
        triangles=triangles,
        pairs=pairs_arr,
        pair_maps=list(pair_maps),
        classes=classes,
        n_classes=len(uniq),
        h=h,
        boundary_mask=boundary_mask,
    )


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def _p1_gradients(vertices: np.ndarray, triangles: np.ndarray):
    """Per-triangle constant gradients of the three hat functions.

    Returns (gx, gy) of shape (n_tri, 3) and the Euclidean areas.
    """
    p = vertices[triangles]
    x = p.real
    y = p.imag
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / area2[:, None]
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / area2[:, None]
    return gx, gy, area2 / 2.0


def assemble(mesh: Mesh):
    """Euclidean stiffness on vertex classes and lumped hyperbolic masses."""
    gx, gy, area = _p1_gradients(mesh.vertices, mesh.triangles)
    n = mesh.n_classes
    cls = mesh.classes[mesh.triangles]  # (n_tri, 3)
    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(cls[:, i])
            cols.append(cls[:, j])
            vals.append(area * (gx[:, i] * gx[:, j] + gy[:, i] * gy[:, j]))
    S = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    Mw = np.zeros(n)
    p = mesh.vertices[mesh.triangles]
    w01 = _conformal_factor((p[:, 0] + p[:, 1]) / 2.0)
    w12 = _conformal_factor((p[:, 1] + p[:, 2]) / 2.0)
    w20 = _conformal_factor((p[:, 2] + p[:, 0]) / 2.0)
    # lumped integral of each hat function against the g0 area density,
    # edge-midpoint rule (exact through quadratics)
    np.add.at(Mw, cls[:, 0], area * (w01 + w20) / 6.0)
    np.add.at(Mw, cls[:, 1], area * (w01 + w12) / 6.0)
    np.add.at(Mw, cls[:, 2], area * (w12 + w20) / 6.0)
    return S, Mw


# ---------------------------------------------------------------------------
# the nonlinear solve
# ---------------------------------------------------------------------------


@dataclass
class ConformalSolution:
    """Nodal conformal exponent u (per vertex class) with recovered jets."""

    mesh: Mesh
    m: int
    u_nodal: np.ndarray  # per class
    alpha_nodal: np.ndarray  # per class
    residual_norm: float
    newton_iterations: int
    _grad_inst: np.ndarray | None = field(default=None, repr=False)  # complex per instance
    _lap_nodal: np.ndarray | None = field(default=None, repr=False)  # per class

    @property
    def u_instance(self) -> np.ndarray:
        return self.u_nodal[self.mesh.classes]

    def _recover(self):
        """Instance gradients (area-weighted fans, transported across pairs)
        and nodal Galerkin Laplacians."""
        mesh = self.mesh
        gx, gy, area = _p1_gradients(mesh.vertices, mesh.triangles)
        utri = self.u_instance[mesh.triangles]
        tgx = (utri * gx).sum(axis=1)
        tgy = (utri * gy).sum(axis=1)
        g_inst = np.zeros(len(mesh.vertices), dtype=complex)
        w_inst = np.zeros(len(mesh.vertices))
        for i in range(3):
            np.add.at(g_inst, mesh.triangles[:, i], area * (tgx + 1j * tgy))
            np.add.at(w_inst, mesh.triangles[:, i], area)
        # transport the partner fan through the side pairing derivative:
        # a conformal map gamma sends complex gradients G -> G(gamma z) conj(gamma'(z))
        g_tot = g_inst.copy()
        w_tot = w_inst.copy()
        for (i, j), g in zip(mesh.pairs, mesh.pair_maps):
            zi = complex(mesh.vertices[i])
            zj = complex(mesh.vertices[j])
            dp = g.derivative(zi)  # gamma(zi) = zj
            g_tot[i] = g_inst[i] + g_inst[j] * np.conj(dp)
            w_tot[i] = w_inst[i] + w_inst[j]
            dpi = g.inverse().derivative(zj)
            g_tot[j] = g_inst[j] + g_inst[i] * np.conj(dpi)
            w_tot[j] = w_inst[j] + w_inst[i]
        self._grad_inst = g_tot / w_tot
        S, Mw = assemble(self.mesh)
        self._lap_nodal = -(S @ self.u_nodal) / Mw

    @property
    def grad_instance(self) -> np.ndarray:
        if self._grad_inst is None:
            self._recover()
        return self._grad_inst

    @property
    def lap_nodal(self) -> np.ndarray:
        if self._lap_nodal is None:
            self._recover()
        return self._lap_nodal

    # -- point evaluation ---------------------------------------------------

    def eval_raw(self, z: complex):
        """(u, ux, uy) by the quadratic patch at a point already inside the
        octagon; use eval() for arbitrary disk points."""
        mesh = self.mesh
        tri, bary = mesh.locate(z)
        idx = mesh.triangles[tri]
        p = mesh.vertices[idx]
        uv = self.u_nodal[mesh.classes[idx]]
        gv = self.grad_instance[idx]
        # quadratic patch: P2 with Hermite midpoint values
        mids = {}
        for a, b in ((0, 1), (1, 2), (2, 0)):
            d = p[b] - p[a]
            mids[(a, b)] = 0.5 * (uv[a] + uv[b]) + 0.125 * (
                (gv[a] - gv[b]).real * d.real + (gv[a] - gv[b]).imag * d.imag
            )
        gx, gy, _ = _p1_gradients(mesh.vertices, mesh.triangles[tri : tri + 1])
        gbx, gby = gx[0], gy[0]
        val = 0.0
        dx = 0.0
        dy = 0.0
        for a in range(3):
            val += uv[a] * bary[a] * (2.0 * bary[a] - 1.0)
            dx += uv[a] * (4.0 * bary[a] - 1.0) * gbx[a]
            dy += uv[a] * (4.0 * bary[a] - 1.0) * gby[a]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            mv = mids[(a, b)]
            val += 4.0 * mv * bary[a] * bary[b]
            dx += 4.0 * mv * (bary[a] * gbx[b] + bary[b] * gbx[a])
            dy += 4.0 * mv * (bary[a] * gby[b] + bary[b] * gby[a])
        return val, dx, dy

    def eval(self, z: complex):
        """(u, ux, uy) at any disk point; folds to the octagon first and
        transports the gradient back through the folding map."""
        zf, gamma = self.mesh.group.fold_to_domain(complex(z))
        u, dx, dy = self.eval_raw(zf)
        gp = gamma.derivative(complex(z))
        gc = (dx + 1j * dy) * np.conj(gp)
        return u, gc.real, gc.imag

    def lap_eval(self, z: complex) -> float:
        """Nodal Galerkin Laplacian (Euclidean), P1-interpolated; fold first."""
        zf, _ = self.mesh.group.fold_to_domain(complex(z))
        tri, bary = self.mesh.locate(zf)
        idx = self.mesh.classes[self.mesh.triangles[tri]]
        return float(self.lap_nodal[idx] @ bary)

    def curvature_pair(self, form, z: complex):
        """(K_alg, K_mesh) at z: the algebraic route -1 + (m-1) alpha e^{-2mu}
        and the conformal-change route e^{-2u}(-1 - lap_{g0} u)."""
        zf, _ = self.mesh.group.fold_to_domain(complex(z))
        u, _, _ = self.eval_raw(zf)
        if form is None or form.is_zero:
            k_alg = -1.0
        else:
            alpha = form.alpha_eval(zf)
            k_alg = -1.0 + (self.m - 1) * alpha * math.exp(-2.0 * self.m * u)
        lap_e = self.lap_eval(zf)
        lap_h = (1.0 - abs(zf) ** 2) ** 2 / 4.0 * lap_e
        k_mesh = math.exp(-2.0 * u) * (-1.0 - lap_h)
        return k_alg, k_mesh


def solve_vortex(mesh: Mesh, alpha, m: int, tol: float = DEFAULT_TOL,
                 u0: np.ndarray | None = None, max_iter: int = MAX_NEWTON) -> ConformalSolution:
    """Damped Newton solve of the discrete conformal-factor equation.

    alpha may be an array of nodal values (per class) or an AutomorphicForm,
    in which case it is sampled at the class representatives.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    if hasattr(alpha, "alpha_many"):
        reps = mesh.class_rep
        alpha_nodal = alpha.alpha_many(mesh.vertices[reps])
    else:
        alpha_nodal = np.asarray(alpha, dtype=float)
        if alpha_nodal.shape == ():
            alpha_nodal = np.full(mesh.n_classes, float(alpha_nodal))
    if alpha_nodal.shape[0] != mesh.n_classes:
        raise ValueError("alpha must have one value per vertex class")
    if np.any(alpha_nodal < 0):
        raise DomainError("alpha must be nonnegative")

    S, Mw = assemble(mesh)
    u = np.zeros(mesh.n_classes) if u0 is None else np.asarray(u0, dtype=float).copy()

    def nonlinearity(uv):
        return np.exp(2.0 * uv) - (m - 1) * np.exp(-2.0 * (m - 1) * uv) * alpha_nodal - 1.0

    def dnonlinearity(uv):
        return 2.0 * np.exp(2.0 * uv) + 2.0 * (m - 1) ** 2 * np.exp(-2.0 * (m - 1) * uv) * alpha_nodal

    def resid(uv):
        return S @ uv + Mw * nonlinearity(uv)

    r = resid(u)
    norm = np.max(np.abs(r / Mw))
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"Newton stalled at residual {norm:.3e} after {it} iterations"
            )
        J = S + sp.diags(Mw * dnonlinearity(u))
        du = spla.spsolve(J.tocsc(), -r)
        step = 1.0
        for _ in range(30):
            u_try = u + step * du
            r_try = resid(u_try)
            n_try = np.max(np.abs(r_try / Mw))
            if n_try < norm:
                break
            step *= 0.5
        else:
            raise ConvergenceError(f"line search failed at residual {norm:.3e}")
        u, r, norm = u_try, r_try, n_try
        it += 1

    return ConformalSolution(
        mesh=mesh,
        m=m,
        u_nodal=u,
        alpha_nodal=alpha_nodal,
        residual_norm=float(norm),
        newton_iterations=it,
    )


def eval_conformal(sol: ConformalSolution, z: complex):
    """Module-level alias: (u, du/dx, du/dy) with folding."""
    return sol.eval(z)


def curvature_eval(sol: ConformalSolution, form, z: complex):
    """Module-level alias for ConformalSolution.curvature_pair."""
    return sol.curvature_pair(form, z)


# ---------------------------------------------------------------------------
# Dirichlet disk problem (manufactured-solution oracle support)
# ---------------------------------------------------------------------------


@dataclass
class DiskMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray  # instance indices on the outer ring
    h: float


def build_disk_mesh(r_hyp: float, target_h: float) -> DiskMesh:
    """Triangulated geodesic disk of hyperbolic radius r_hyp about 0."""
    delta = 0.75 * target_h
    n_rings = max(2, int(math.ceil(r_hyp / (delta * math.sqrt(3.0) / 2.0))))
    dr = r_hyp / n_rings
    pts = [0.0 + 0.0j]
    for i in range(1, n_rings + 1):
        rh = i * dr
        re = math.tanh(rh / 2.0)
        n_i = max(8, int(round(2.0 * math.pi * math.sinh(rh) / delta)))
        offs = 0.5 * (i % 2)
        ang = 2.0 * math.pi * (np.arange(n_i) + offs) / n_i
        pts.extend(re * np.exp(1j * ang))
    pts = np.array(pts)
    tri = Delaunay(np.column_stack([pts.real, pts.imag]))
    triangles = tri.simplices.copy()
    p = pts[triangles]
    area2 = np.cross(
        np.column_stack([(p[:, 1] - p[:, 0]).real, (p[:, 1] - p[:, 0]).imag]),
        np.column_stack([(p[:, 2] - p[:, 0]).real, (p[:, 2] - p[:, 0]).imag]),
    )
    flip = area2 < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    r_out = math.tanh(r_hyp / 2.0)
    boundary = np.where(np.abs(np.abs(pts) - r_out) < 1e-12)[0]
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    h = float(np.max(hyp_distance(pts[edges[:, 0]], pts[edges[:, 1]])))
    return DiskMesh(vertices=pts, triangles=triangles, boundary=boundary, h=h)


def solve_vortex_dirichlet(dmesh: DiskMesh, alpha_at, m: int, u_boundary_at,
                           tol: float = DEFAULT_TOL) -> np.ndarray:
    """Newton solve of the same PDE on a disk with Dirichlet data.

    alpha_at and u_boundary_at are callables of the complex coordinate.
    Returns nodal u on every vertex (boundary nodes carry the data).
    """
    pts = dmesh.vertices
    gx, gy, area = _p1_gradients(pts, dmesh.triangles)
    n = len(pts)
    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(dmesh.triangles[:, i])
            cols.append(dmesh.triangles[:, j])
            vals.append(area * (gx[:, i] * gx[:, j] + gy[:, i] * gy[:, j]))
    S = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    mids = (pts[dmesh.triangles][:, [0, 1, 2]] + pts[dmesh.triangles][:, [1, 2, 0]]) / 2.0
    p = pts[dmesh.triangles]
    w01 = _conformal_factor((p[:, 0] + p[:, 1]) / 2.0)
    w12 = _conformal_factor((p[:, 1] + p[:, 2]) / 2.0)
    w20 = _conformal_factor((p[:, 2] + p[:, 0]) / 2.0)
    Mw = np.zeros(n)
    np.add.at(Mw, dmesh.triangles[:, 0], area * (w01 + w20) / 6.0)
    np.add.at(Mw, dmesh.triangles[:, 1], area * (w01 + w12) / 6.0)
    np.add.at(Mw, dmesh.triangles[:, 2], area * (w12 + w20) / 6.0)

    alpha_nodal = np.array([alpha_at(z) for z in pts])
    if np.any(alpha_nodal < -1e-14):
        raise DomainError("alpha must be nonnegative")
    alpha_nodal = np.maximum(alpha_nodal, 0.0)
    free = np.ones(n, dtype=bool)
    free[dmesh.boundary] = False
    u = np.zeros(n)
    u[~free] = [u_boundary_at(z) for z in pts[~free]]

    def resid(uv):
        return S @ uv + Mw * (np.exp(2 * uv) - (m - 1) * np.exp(-2 * (m - 1) * uv) * alpha_nodal - 1.0)

    r = resid(u)
    norm = np.max(np.abs(r[free] / Mw[free]))
    it = 0
    while norm > tol:
        if it > MAX_NEWTON:
            raise ConvergenceError(f"Dirichlet Newton stalled at {norm:.3e}")
        dN = 2 * np.exp(2 * u) + 2 * (m - 1) ** 2 * np.exp(-2 * (m - 1) * u) * alpha_nodal
        J = (S + sp.diags(Mw * dN)).tocsr()[free][:, free].tocsc()
        du = spla.spsolve(J, -r[free])
        step = 1.0
        for _ in range(30):
            u_try = u.copy()
            u_try[free] += step * du
            r_try = resid(u_try)
            n_try = np.max(np.abs(r_try[free] / Mw[free]))
            if n_try < norm:
                break
            step *= 0.5
        else:
            raise ConvergenceError("line search failed")
        u, r, norm = u_try, r_try, n_try
        it += 1
    return u


# ---------------------------------------------------------------------------
# plain-text serialisation
# ---------------------------------------------------------------------------


def save_solution(path, sol: ConformalSolution) -> None:
    """Write mesh + solution in the 'thermolab-mesh v1' text format."""
    mesh = sol.mesh
    lines = ["thermolab-mesh v1"]
    for z in mesh.vertices:
        lines.append(f"v {z.real:.17g} {z.imag:.17g}")
    for t in mesh.triangles:
        lines.append(f"t {t[0]} {t[1]} {t[2]}")
    for i, j in mesh.pairs:
        lines.append(f"p {i} {j}")
    u_inst = sol.u_instance
    for i, val in enumerate(u_inst):
        lines.append(f"u {i} {val:.17g}")
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_solution_arrays(path):
    """Read back (vertices, triangles, pairs, u_instance) from the v1 format."""
    with open(path) as f:
        header = f.readline().strip()
        if header != "thermolab-mesh v1":
            raise MeshError(f"unknown mesh format header {header!r}")
        verts, tris, pairs, uvals = [], [], [], {}
        for line in f:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "v":
                verts.append(complex(float(tok[1]), float(tok[2])))
            elif tok[0] == "t":
                tris.append((int(tok[1]), int(tok[2]), int(tok[3])))
            elif tok[0] == "p":
                pairs.append((int(tok[1]), int(tok[2])))
            elif tok[0] == "u":
                uvals[int(tok[1])] = float(tok[2])
    u = np.array([uvals[i] for i in range(len(verts))])
    return np.array(verts), np.array(tris, dtype=int), np.array(pairs, dtype=int), u
