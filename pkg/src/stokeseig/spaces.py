"""Raviart-Thomas / tensor-Legendre reference bases and DOF numbering.

Velocity lives in RT_k(K) = P_{k+1,k} x P_{k,k+1} mapped by the
contravariant Piola transform; pressure in Q_k(K) with an orthonormal
tensor-Legendre basis (first function constant).  The global velocity
numbering merges edge-normal moments of neighbouring cells, eliminates
boundary normal moments (H^div_0), and constrains slave-edge moments on
hanging faces to the master edge's moments, so the assembled space is
H(div)-conforming on one-irregular meshes.

Degree-of-freedom conventions
-----------------------------
Edge moments are taken against orthonormal Legendre polynomials in the
normalized edge parameter (increasing coordinate), weighted with the
physical arclength measure, and oriented along the fixed +x / +y axis
rather than the outward normal.  With the Piola map this makes the local
reference moments of both adjacent cells identical, so no orientation
signs are needed anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import numpy.linalg as la

from .mesh import EdgeKind, Mesh
from .quadrature import cell_rule, edge_rule, gauss_1d, tensor_rule

SIDES = ("L", "R", "B", "T")


def shifted_legendre(nmax: int, t: np.ndarray):
    """Orthonormal shifted Legendre values and d/dt, d2/dt2 on [0,1].

    Returns three arrays of shape (nmax+1, len(t)).
    """
    t = np.asarray(t, dtype=float)
    s = 2.0 * t - 1.0
    P = np.zeros((nmax + 1,) + t.shape)
    dP = np.zeros_like(P)
    d2P = np.zeros_like(P)
    P[0] = 1.0
    if nmax >= 1:
        P[1] = s
        dP[1] = 1.0
    for n in range(1, nmax):
        P[n + 1] = ((2 * n + 1) * s * P[n] - n * P[n - 1]) / (n + 1)
        dP[n + 1] = ((2 * n + 1) * (P[n] + s * dP[n]) - n * dP[n - 1]) / (n + 1)
        d2P[n + 1] = ((2 * n + 1) * (2 * dP[n] + s * d2P[n]) - n * d2P[n - 1]) / (n + 1)
    scale = np.sqrt(2.0 * np.arange(nmax + 1) + 1.0)[:, None]
    return scale * P, 2.0 * scale * dP, 4.0 * scale * d2P


@dataclass(frozen=True)
class VelocityTables:
    """Velocity basis tabulation at a fixed point set.

    values:  (npts, ndof, 2)
    grads:   (npts, ndof, 2, 2), grads[..., i, j] = d v_i / d x_j
    divs:    (npts, ndof)
    seconds: (npts, ndof, 2, 2), seconds[..., i, d] = d^2 v_i / d x_d^2
    """

    values: np.ndarray
    grads: np.ndarray
    divs: np.ndarray
    seconds: np.ndarray


class VelocityBasis:
    """Kronecker-dual RT_k basis on the reference square."""

    def __init__(self, k: int):
        if not 1 <= k <= 3:
            raise ValueError(f"degree must be 1, 2 or 3, got {k}")
        self.k = k
        # primal monomial-like functions: tensor Legendre per component
        self.x_idx = [(a, b) for a in range(k + 2) for b in range(k + 1)]
        self.y_idx = [(a, b) for a in range(k + 1) for b in range(k + 2)]
        self.ndof = len(self.x_idx) + len(self.y_idx)
        self.n_edge_moments = k + 1
        self.n_interior = self.ndof - 4 * (k + 1)
        self._coeff = self._build_dual_coefficients()

    # local dof layout: [L, R, B, T] edge blocks of k+1 moments, then interior
    def edge_block(self, side: str) -> slice:
        i = SIDES.index(side)
        m = self.n_edge_moments
        return slice(i * m, (i + 1) * m)

    def _primal_eval(self, points: np.ndarray) -> VelocityTables:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        k = self.k
        Lx, dLx, d2Lx = shifted_legendre(k + 1, pts[:, 0])
        Ly, dLy, d2Ly = shifted_legendre(k + 1, pts[:, 1])
        n = pts.shape[0]
        values = np.zeros((n, self.ndof, 2))
        grads = np.zeros((n, self.ndof, 2, 2))
        divs = np.zeros((n, self.ndof))
        seconds = np.zeros((n, self.ndof, 2, 2))
        for m, (a, b) in enumerate(self.x_idx):
            values[:, m, 0] = Lx[a] * Ly[b]
            grads[:, m, 0, 0] = dLx[a] * Ly[b]
            grads[:, m, 0, 1] = Lx[a] * dLy[b]
            seconds[:, m, 0, 0] = d2Lx[a] * Ly[b]
            seconds[:, m, 0, 1] = Lx[a] * d2Ly[b]
            divs[:, m] = dLx[a] * Ly[b]
        off = len(self.x_idx)
        for m, (a, b) in enumerate(self.y_idx):
            values[:, off + m, 1] = Lx[a] * Ly[b]
            grads[:, off + m, 1, 0] = dLx[a] * Ly[b]
            grads[:, off + m, 1, 1] = Lx[a] * dLy[b]
            seconds[:, off + m, 1, 0] = d2Lx[a] * Ly[b]
            seconds[:, off + m, 1, 1] = Lx[a] * d2Ly[b]
            divs[:, off + m] = Lx[a] * dLy[b]
        return VelocityTables(values, grads, divs, seconds)

    def _build_dual_coefficients(self) -> np.ndarray:
        k = self.k
        rule1 = gauss_1d(k + 3)
        t = rule1.points[:, 0]
        w1 = rule1.weights
        Leg, _, _ = shifted_legendre(k, t)

        edge_points = {
            "L": np.column_stack([np.zeros_like(t), t]),
            "R": np.column_stack([np.ones_like(t), t]),
            "B": np.column_stack([t, np.zeros_like(t)]),
            "T": np.column_stack([t, np.ones_like(t)]),
        }
        # which velocity component the fixed-axis moment reads per side
        comp = {"L": 0, "R": 0, "B": 1, "T": 1}

        V = np.zeros((self.ndof, self.ndof))
        row = 0
        for side in SIDES:
            vals = self._primal_eval(edge_points[side]).values
            for j in range(k + 1):
                V[row] = np.einsum("q,q,qn->n", w1, Leg[j], vals[:, :, comp[side]])
                row += 1
        rule2 = tensor_rule(k + 3)
        vals2 = self._primal_eval(rule2.points).values
        LegA, _, _ = shifted_legendre(k, rule2.points[:, 0])
        LegB, _, _ = shifted_legendre(k, rule2.points[:, 1])
        for (amax, bmax, c) in ((k - 1, k, 0), (k, k - 1, 1)):
            for a in range(amax + 1):
                for b in range(bmax + 1):
                    V[row] = np.einsum(
                        "q,q,q,qn->n", rule2.weights, LegA[a], LegB[b], vals2[:, :, c]
                    )
                    row += 1
        assert row == self.ndof
        return la.inv(V)

    def tabulate(self, points: np.ndarray) -> VelocityTables:
        """Dual-basis tables on the reference cell."""
        p = self._primal_eval(points)
        C = self._coeff
        return VelocityTables(
            values=np.einsum("qjc,ji->qic", p.values, C),
            grads=np.einsum("qjcd,ji->qicd", p.grads, C),
            divs=np.einsum("qj,ji->qi", p.divs, C),
            seconds=np.einsum("qjcd,ji->qicd", p.seconds, C),
        )


class PressureBasis:
    """Orthonormal tensor-Legendre Q_k basis; the first function is 1."""

    def __init__(self, k: int):
        if not 1 <= k <= 3:
            raise ValueError(f"degree must be 1, 2 or 3, got {k}")
        self.k = k
        self.idx = [(a, b) for a in range(k + 1) for b in range(k + 1)]
        self.ndof = len(self.idx)

    def tabulate(self, points: np.ndarray):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        Lx, dLx, _ = shifted_legendre(self.k, pts[:, 0])
        Ly, dLy, _ = shifted_legendre(self.k, pts[:, 1])
        n = pts.shape[0]
        values = np.zeros((n, self.ndof))
        grads = np.zeros((n, self.ndof, 2))
        for m, (a, b) in enumerate(self.idx):
            values[:, m] = Lx[a] * Ly[b]
            grads[:, m, 0] = dLx[a] * Ly[b]
            grads[:, m, 1] = Lx[a] * dLy[b]
        return values, grads


@lru_cache(maxsize=8)
def velocity_basis(k: int) -> VelocityBasis:
    return VelocityBasis(k)


@lru_cache(maxsize=8)
def pressure_basis(k: int) -> PressureBasis:
    return PressureBasis(k)


# -- Piola mapping on axis-aligned rectangles (diagonal Jacobian) ----------


def map_velocity(tables: VelocityTables, dx: float, dy: float) -> VelocityTables:
    """Physical tables under v = J vhat / det J with J = diag(dx, dy)."""
    det = dx * dy
    values = tables.values.copy()
    values[..., 0] /= dy
    values[..., 1] /= dx
    grads = tables.grads.copy()
    grads[..., 0, 0] /= det
    grads[..., 0, 1] /= dy * dy
    grads[..., 1, 0] /= dx * dx
    grads[..., 1, 1] /= det
    divs = tables.divs / det
    seconds = tables.seconds.copy()
    seconds[..., 0, 0] /= dy * dx * dx
    seconds[..., 0, 1] /= dy * dy * dy
    seconds[..., 1, 0] /= dx * dx * dx
    seconds[..., 1, 1] /= dx * dy * dy
    return VelocityTables(values, grads, divs, seconds)


def map_pressure(values: np.ndarray, grads: np.ndarray, dx: float, dy: float):
    g = grads.copy()
    g[..., 0] /= dx
    g[..., 1] /= dy
    return values, g


def eval_velocity(k: int, cell, reference_points: np.ndarray) -> tuple:
    """Physical (values, gradients, divergences) of the RT_k dual basis."""
    t = map_velocity(velocity_basis(k).tabulate(reference_points), cell.dx, cell.dy)
    return t.values, t.grads, t.divs


@lru_cache(maxsize=16)
def hanging_constraint(k: int, half: int) -> np.ndarray:
    """Slave-edge moments as combinations of master-edge moments.

    With arclength-weighted moments, a master trace g in P_k with moments
    M_j satisfies g = sum_j (M_j / h) q_j, and the slave moments on either
    half come out as S = 0.5 * Ctilde @ M with
    Ctilde[i, j] = int_0^1 q_j((t + half)/2) q_i(t) dt.
    """
    rule = gauss_1d(k + 2)
    t = rule.points[:, 0]
    w = rule.weights
    Q, _, _ = shifted_legendre(k, t)
    Qm, _, _ = shifted_legendre(k, (t + half) / 2.0)
    ctilde = np.einsum("q,iq,jq->ij", w, Q, Qm)
    return 0.5 * ctilde


# -- global DOF map --------------------------------------------------------


class DofMap:
    """Constrained global numbering for the RT_k x Q_k pair."""

    def __init__(self, mesh: Mesh, k: int, homogeneous_boundary: bool = True):
        self.mesh = mesh
        self.k = k
        self.homogeneous_boundary = homogeneous_boundary
        vb = velocity_basis(k)
        self.n_loc_u = vb.ndof
        self.n_loc_p = (k + 1) ** 2

        m = k + 1
        self.edge_dof_start: dict[int, int] = {}
        next_g = 0
        for e in mesh.edges:
            owns = e.kind in (EdgeKind.INTERIOR_REGULAR, EdgeKind.INTERIOR_HANGING_MASTER)
            if e.kind is EdgeKind.BOUNDARY and not homogeneous_boundary:
                owns = True
            if owns:
                self.edge_dof_start[e.id] = next_g
                next_g += m
        self.interior_start: dict[int, int] = {}
        for c in mesh.cells:
            if c.active:
                self.interior_start[c.id] = next_g
                next_g += vb.n_interior
        self.n_u = next_g

        self.pressure_start: dict[int, int] = {}
        next_p = 0
        for c in mesh.cells:
            if c.active:
                self.pressure_start[c.id] = next_p
                next_p += self.n_loc_p
        self.n_p = next_p

        # per-cell expansion: local velocity dof -> [(global, weight), ...]
        self.cell_entries: dict[int, list[list[tuple[int, float]]]] = {}
        for c in mesh.cells:
            if not c.active:
                continue
            entries: list[list[tuple[int, float]]] = []
            for side in SIDES:
                eid = mesh.cell_side_edge[(c.id, side)]
                e = mesh.edges[eid]
                if e.kind is EdgeKind.INTERIOR_HANGING_SLAVE:
                    mstart = self.edge_dof_start[e.master_id]
                    C = hanging_constraint(k, e.half)
                    for i in range(m):
                        entries.append(
                            [(mstart + j, C[i, j]) for j in range(m) if C[i, j] != 0.0]
                        )
                elif eid in self.edge_dof_start:
                    start = self.edge_dof_start[eid]
                    entries.extend([[(start + j, 1.0)] for j in range(m)])
                else:  # eliminated boundary normals
                    entries.extend([[] for _ in range(m)])
            istart = self.interior_start[c.id]
            entries.extend([[(istart + i, 1.0)] for i in range(vb.n_interior)])
            self.cell_entries[c.id] = entries

        self._gather_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def n_dofs(self) -> int:
        return self.n_u + self.n_p

    def cell_gather(self, cell_id: int):
        """(global indices g, T) with local coefficients = T @ u[g]."""
        hit = self._gather_cache.get(cell_id)
        if hit is not None:
            return hit
        entries = self.cell_entries[cell_id]
        gidx: list[int] = []
        pos: dict[int, int] = {}
        for row in entries:
            for g, _ in row:
                if g not in pos:
                    pos[g] = len(gidx)
                    gidx.append(g)
        T = np.zeros((len(entries), len(gidx)))
        for i, row in enumerate(entries):
            for g, w in row:
                T[i, pos[g]] = w
        out = (np.asarray(gidx, dtype=np.int64), T)
        self._gather_cache[cell_id] = out
        return out

    def local_velocity_coeffs(self, cell_id: int, u: np.ndarray) -> np.ndarray:
        g, T = self.cell_gather(cell_id)
        return T @ u[g]

    def pressure_slice(self, cell_id: int) -> slice:
        s = self.pressure_start[cell_id]
        return slice(s, s + self.n_loc_p)

    def local_pressure_coeffs(self, cell_id: int, p: np.ndarray) -> np.ndarray:
        return p[self.pressure_slice(cell_id)]


def build_dofmap(mesh: Mesh, k: int, homogeneous_boundary: bool = True) -> DofMap:
    return DofMap(mesh, k, homogeneous_boundary)


def pressure_mean_vector(mesh: Mesh, dofmap: DofMap) -> np.ndarray:
    """c with c_i = integral of pressure basis function i over the domain.

    Only the cellwise-constant functions have nonzero mean; their entry is
    the cell area.
    """
    c = np.zeros(dofmap.n_p)
    for cell in mesh.active_cells:
        c[dofmap.pressure_start[cell.id]] = cell.area
    return c


def interpolate_velocity(mesh: Mesh, dofmap: DofMap, fn) -> np.ndarray:
    """Canonical RT_k interpolation of a smooth vector field.

    fn maps (x, y) arrays to an (n, 2) array.  Edge moments use the
    arclength-weighted Legendre moments of the +axis component; interior
    moments are taken of the Piola pullback.  Constrained (slave) and
    eliminated (boundary) DOFs are not assigned, so the interpolant
    reproduces fields whose traces are consistent with the constraints.
    """
    k = dofmap.k
    vb = velocity_basis(k)
    rule1 = gauss_1d(k + 4)
    t = rule1.points[:, 0]
    w1 = rule1.weights
    Leg, _, _ = shifted_legendre(k, t)

    u = np.zeros(dofmap.n_u)
    for e in mesh.edges:
        start = dofmap.edge_dof_start.get(e.id)
        if start is None:
            continue
        if e.direction == "V":
            x = np.full_like(t, e.line)
            y = e.lo + e.h_e * t
            comp = 0
        else:
            x = e.lo + e.h_e * t
            y = np.full_like(t, e.line)
            comp = 1
        vals = np.asarray(fn(x, y))[:, comp]
        for j in range(k + 1):
            u[start + j] = e.h_e * np.sum(w1 * Leg[j] * vals)

    rule2 = tensor_rule(k + 4)
    LegA, _, _ = shifted_legendre(k, rule2.points[:, 0])
    LegB, _, _ = shifted_legendre(k, rule2.points[:, 1])
    w2 = rule2.weights
    for cell in mesh.active_cells:
        x = cell.x0 + cell.dx * rule2.points[:, 0]
        y = cell.y0 + cell.dy * rule2.points[:, 1]
        vals = np.asarray(fn(x, y))
        pullback = np.column_stack([cell.dy * vals[:, 0], cell.dx * vals[:, 1]])
        row = dofmap.interior_start[cell.id]
        for (amax, bmax, c) in ((k - 1, k, 0), (k, k - 1, 1)):
            for a in range(amax + 1):
                for b in range(bmax + 1):
                    u[row] = np.sum(w2 * LegA[a] * LegB[b] * pullback[:, c])
                    row += 1
    return u


def project_pressure(mesh: Mesh, dofmap: DofMap, fn) -> np.ndarray:
    """Cellwise L2 projection onto Q_k (orthonormal basis makes it direct)."""
    k = dofmap.k
    pb = pressure_basis(k)
    rule = tensor_rule(k + 4)
    vals, _ = pb.tabulate(rule.points)
    p = np.zeros(dofmap.n_p)
    for cell in mesh.active_cells:
        x = cell.x0 + cell.dx * rule.points[:, 0]
        y = cell.y0 + cell.dy * rule.points[:, 1]
        f = np.asarray(fn(x, y))
        p[dofmap.pressure_slice(cell.id)] = np.einsum("q,q,qi->i", rule.weights, f, vals)
    return p


# -- shared evaluation tables for assembly / estimation --------------------


class ElementTables:
    """Physical basis tables at quadrature points, cached per cell size.

    Face tables are keyed by (side, half, dx, dy): half=None is the full
    side at edge-rule points; half 0/1 restricts a coarse cell's side to
    the sub-edge covered by one slave of a hanging face.
    """

    def __init__(self, k: int, n_points: int | None = None):
        self.k = k
        n = (k + 2) if n_points is None else n_points
        self.cell_quad = tensor_rule(n)
        self.edge_quad = gauss_1d(n)
        self.vb = velocity_basis(k)
        self.pb = pressure_basis(k)
        self._ref_cell_v = self.vb.tabulate(self.cell_quad.points)
        self._ref_cell_p = self.pb.tabulate(self.cell_quad.points)
        t = self.edge_quad.points[:, 0]
        self._ref_edge_v: dict = {}
        self._ref_edge_p: dict = {}
        for side in SIDES:
            for half in (None, 0, 1):
                s = t if half is None else (t + half) / 2.0
                pts = self._side_points(side, s)
                self._ref_edge_v[(side, half)] = self.vb.tabulate(pts)
                self._ref_edge_p[(side, half)] = self.pb.tabulate(pts)
        self._cell_cache: dict = {}
        self._face_cache: dict = {}

    @staticmethod
    def _side_points(side: str, s: np.ndarray) -> np.ndarray:
        zero = np.zeros_like(s)
        one = np.ones_like(s)
        if side == "L":
            return np.column_stack([zero, s])
        if side == "R":
            return np.column_stack([one, s])
        if side == "B":
            return np.column_stack([s, zero])
        return np.column_stack([s, one])

    def cell_tables(self, dx: float, dy: float):
        key = (dx, dy)
        hit = self._cell_cache.get(key)
        if hit is None:
            v = map_velocity(self._ref_cell_v, dx, dy)
            pv, pg = map_pressure(*self._ref_cell_p, dx, dy)
            hit = (v, pv, pg)
            self._cell_cache[key] = hit
        return hit

    def face_tables(self, side: str, half: int | None, dx: float, dy: float):
        key = (side, half, dx, dy)
        hit = self._face_cache.get(key)
        if hit is None:
            v = map_velocity(self._ref_edge_v[(side, half)], dx, dy)
            pv, pg = map_pressure(*self._ref_edge_p[(side, half)], dx, dy)
            hit = (v, pv, pg)
            self._face_cache[key] = hit
        return hit


def face_side_descriptor(mesh: Mesh, edge, cell_id: int):
    """(side, half) locating an integration face within a cell's reference.

    For the coarse cell of a hanging face the trace is restricted to the
    half of its side covered by the slave edge; fine and regular cells use
    their full side.
    """
    if edge.kind is EdgeKind.INTERIOR_HANGING_SLAVE:
        master = mesh.edges[edge.master_id]
        if cell_id == master.plus_cell:
            return master.plus_side, edge.half
    if cell_id == edge.plus_cell:
        return edge.plus_side, None
    return edge.minus_side, None
