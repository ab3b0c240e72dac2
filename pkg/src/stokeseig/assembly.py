"""Sparse assembly of the DG velocity form, divergence coupling and mass.

The velocity form combines the broken gradient term, symmetric interior
consistency terms built from the sum of the two one-sided gradients (with
the 1/2 prefactor this is the usual symmetric interior penalty average),
tangential-jump penalties gamma_h on interior faces, and Nitsche terms
with penalty weight 2*gamma_h on boundary faces.  The face weight is

    gamma_h = gamma * (k+1) * (k+2) / h_E,

i.e. the user parameter times the standard inverse-inequality degree
factor of the velocity space; with gamma = k(k+1)/2 this keeps the form
coercive for every supported degree.  Hanging faces are integrated on the
slave sub-edges; the coarse side's trace is the master cell's polynomial
restricted to the sub-edge, and the penalty weight uses the slave (short)
edge length, the conservative choice.

All matrices are returned post-condensation: slave-edge moments are
expanded into master moments and boundary normal moments are eliminated
while scattering, so no constrained degrees of freedom remain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import EdgeKind, Mesh
from .spaces import DofMap, ElementTables, face_side_descriptor, pressure_mean_vector

GAMMA_FLOOR = 0.5


def penalty_weight(gamma: float, k: int) -> float:
    """Degree-normalized face penalty coefficient (to be divided by h_E)."""
    return gamma * (k + 1) * (k + 2)


@dataclass
class AssembledSystem:
    """Condensed sparse operators of the discrete Stokes pencil."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    M: sp.csr_matrix
    c: np.ndarray
    nu: float
    gamma: float
    k: int
    n_u: int
    n_p: int


class _Triplets:
    def __init__(self):
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def add(self, rows: np.ndarray, cols: np.ndarray, block: np.ndarray) -> None:
        nr, nc = block.shape
        self.rows.append(np.repeat(rows, nc))
        self.cols.append(np.tile(cols, nr))
        self.vals.append(block.ravel())

    def tocsr(self, shape) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix(shape)
        coo = sp.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=shape,
        )
        return coo.tocsr()


def _face_sides(mesh: Mesh, dofmap: DofMap, tables: ElementTables, edge):
    """Velocity/pressure trace tables and gathers for both sides of a face.

    Returns (plus, minus) where each entry is
    (cell, vel_tables, p_values, gather_idx, gather_T); minus is None for
    boundary faces.
    """
    out = []
    for cid in (edge.plus_cell, edge.minus_cell):
        if cid is None:
            out.append(None)
            continue
        cell = mesh.cells[cid]
        side, half = face_side_descriptor(mesh, edge, cid)
        vt, pv, _ = tables.face_tables(side, half, cell.dx, cell.dy)
        g, T = dofmap.cell_gather(cid)
        out.append((cell, vt, pv, g, T))
    return out


def assemble(mesh: Mesh, dofmap: DofMap, nu: float, gamma: float, k: int,
             gamma_floor: float = GAMMA_FLOOR) -> AssembledSystem:
    """Assemble A (DG velocity form), B (divergence), M (mass) and c."""
    if nu <= 0.0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    if gamma <= 0.0:
        raise ValueError(f"penalty parameter must be positive, got {gamma}")
    if gamma < gamma_floor:
        raise ValueError(
            f"penalty parameter {gamma} is below the coercivity floor "
            f"{gamma_floor}; the DG form needs a sufficiently large penalty"
        )
    if k != dofmap.k:
        raise ValueError(f"degree mismatch: dofmap has k={dofmap.k}, got k={k}")

    tables = ElementTables(k)
    wq_cell = tables.cell_quad.weights
    wq_edge = tables.edge_quad.weights
    pw = penalty_weight(gamma, k)

    tA = _Triplets()
    tB = _Triplets()
    tM = _Triplets()

    local_cache: dict = {}
    for cell in mesh.active_cells:
        key = (cell.dx, cell.dy)
        hit = local_cache.get(key)
        if hit is None:
            vt, pval, _ = tables.cell_tables(cell.dx, cell.dy)
            det = cell.dx * cell.dy
            a_loc = nu * det * np.einsum("q,qicd,qjcd->ij", wq_cell, vt.grads, vt.grads)
            m_loc = det * np.einsum("q,qic,qjc->ij", wq_cell, vt.values, vt.values)
            b_loc = det * np.einsum("q,qa,qi->ai", wq_cell, pval, vt.divs)
            hit = (a_loc, m_loc, b_loc)
            local_cache[key] = hit
        a_loc, m_loc, b_loc = hit
        g, T = dofmap.cell_gather(cell.id)
        tA.add(g, g, T.T @ a_loc @ T)
        tM.add(g, g, T.T @ m_loc @ T)
        prow = dofmap.pressure_start[cell.id] + np.arange(dofmap.n_loc_p)
        tB.add(prow, g, b_loc @ T)

    for edge in mesh.integration_faces():
        plus, minus = _face_sides(mesh, dofmap, tables, edge)
        h_e = edge.h_e
        n = np.asarray(edge.normal)
        _, vt_p, _, g_p, T_p = plus
        if minus is None:
            vals = vt_p.values
            dn = np.einsum("qicd,d->qic", vt_p.grads, n)
            cons = nu * h_e * np.einsum("q,qjc,qic->ij", wq_edge, dn, vals)
            pen = 2.0 * nu * pw * np.einsum("q,qic,qjc->ij", wq_edge, vals, vals)
            face = pen - cons - cons.T
            gj = g_p
            Tj = T_p
        else:
            _, vt_m, _, g_m, T_m = minus
            vjump = np.concatenate([vt_p.values, -vt_m.values], axis=1)
            dsum = np.concatenate(
                [
                    np.einsum("qicd,d->qic", vt_p.grads, n),
                    np.einsum("qicd,d->qic", vt_m.grads, n),
                ],
                axis=1,
            )
            cons = 0.5 * nu * h_e * np.einsum("q,qjc,qic->ij", wq_edge, dsum, vjump)
            pen = nu * pw * np.einsum("q,qic,qjc->ij", wq_edge, vjump, vjump)
            face = pen - cons - cons.T
            gj = np.concatenate([g_p, g_m])
            Tj = np.zeros((T_p.shape[0] + T_m.shape[0], T_p.shape[1] + T_m.shape[1]))
            Tj[: T_p.shape[0], : T_p.shape[1]] = T_p
            Tj[T_p.shape[0]:, T_p.shape[1]:] = T_m
        tA.add(gj, gj, Tj.T @ face @ Tj)

    A = tA.tocsr((dofmap.n_u, dofmap.n_u))
    B = tB.tocsr((dofmap.n_p, dofmap.n_u))
    M = tM.tocsr((dofmap.n_u, dofmap.n_u))
    c = pressure_mean_vector(mesh, dofmap)
    return AssembledSystem(A=A, B=B, M=M, c=c, nu=nu, gamma=gamma, k=k,
                           n_u=dofmap.n_u, n_p=dofmap.n_p)


def assemble_load(mesh: Mesh, dofmap: DofMap, f) -> np.ndarray:
    """Condensed load vector with entries int f . phi_i dx.

    f maps (x, y) arrays to an (n, 2) array.
    """
    tables = ElementTables(dofmap.k)
    quad = tables.cell_quad
    load = np.zeros(dofmap.n_u)
    for cell in mesh.active_cells:
        vt, _, _ = tables.cell_tables(cell.dx, cell.dy)
        x = cell.x0 + cell.dx * quad.points[:, 0]
        y = cell.y0 + cell.dy * quad.points[:, 1]
        fv = np.asarray(f(x, y))
        det = cell.dx * cell.dy
        loc = det * np.einsum("q,qc,qic->i", quad.weights, fv, vt.values)
        g, T = dofmap.cell_gather(cell.id)
        load[g] += T.T @ loc
    return load


def divergence_l2(mesh: Mesh, dofmap: DofMap, u: np.ndarray) -> float:
    """L2 norm of the divergence of a discrete velocity, by quadrature."""
    tables = ElementTables(dofmap.k)
    wq = tables.cell_quad.weights
    total = 0.0
    for cell in mesh.active_cells:
        vt, _, _ = tables.cell_tables(cell.dx, cell.dy)
        cu = dofmap.local_velocity_coeffs(cell.id, u)
        div = vt.divs @ cu
        total += cell.area * np.sum(wq * div * div)
    return float(np.sqrt(total))
