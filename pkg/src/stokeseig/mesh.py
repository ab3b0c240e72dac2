"""Rectangular meshes with one-irregular adaptive refinement.

Meshes are forests of axis-aligned rectangular cells over one of three
domains: the unit square (0,1)^2, the L-shape (-1,1)^2 minus the closed
quadrant (0,1)^2, and the slit square (-1,1)^2 cut along {0} x (-1,0).
Refinement replaces a cell by its four congruent children; closure
refinement keeps every interior edge limited to a single hanging node at
its midpoint, so edge-adjacent cells differ by at most one level.

Edge topology is derived from vertex identity.  The slit is realized by
duplicating the vertices on the cut line (one copy per side), which makes
the two sides topologically disconnected without any geometric special
casing downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

SIDES = ("L", "R", "B", "T")

_DOMAIN_AREAS = {"square": 1.0, "lshape": 3.0, "slit": 4.0}


class EdgeKind(Enum):
    INTERIOR_REGULAR = "interior_regular"
    INTERIOR_HANGING_MASTER = "interior_hanging_master"
    INTERIOR_HANGING_SLAVE = "interior_hanging_slave"
    BOUNDARY = "boundary"


@dataclass
class Cell:
    id: int
    level: int
    x0: float
    y0: float
    x1: float
    y1: float
    parent: int | None = None
    children: tuple[int, int, int, int] | None = None
    # corner vertex ids: lower-left, lower-right, upper-right, upper-left
    vids: tuple[int, int, int, int] = (0, 0, 0, 0)

    @property
    def active(self) -> bool:
        return self.children is None

    @property
    def dx(self) -> float:
        return self.x1 - self.x0

    @property
    def dy(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.dx * self.dy

    @property
    def h_k(self) -> float:
        """Cell diameter (diagonal length)."""
        return math.hypot(self.dx, self.dy)

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))


@dataclass
class Edge:
    """A mesh edge record.

    Interior regular and slave edges are integration faces between two
    active cells; the "+" side is the cell on the lower-coordinate side of
    the edge line, so the "+" outward normal is +x (vertical edges) or +y
    (horizontal edges).  Boundary edges reference one cell and carry its
    outward normal.  A hanging master edge references the coarse cell and
    is geometrically covered by its two slave edges.
    """

    id: int
    kind: EdgeKind
    direction: str  # 'V' (x = const) or 'H' (y = const)
    line: float  # constant coordinate of the edge line
    lo: float  # span start (y for 'V', x for 'H')
    hi: float  # span end
    v0: int
    v1: int
    plus_cell: int
    plus_side: str
    minus_cell: int | None = None
    minus_side: str | None = None
    normal: tuple[float, float] = (0.0, 0.0)
    master_id: int | None = None  # for slaves
    half: int | None = None  # slave position in master span: 0 = lower
    slave_ids: tuple[int, int] | None = None  # for masters: (lower, upper)

    @property
    def h_e(self) -> float:
        return self.hi - self.lo

    @property
    def is_interior(self) -> bool:
        return self.kind is not EdgeKind.BOUNDARY


class Mesh:
    """Forest of rectangular cells with derived edge topology."""

    def __init__(self, domain_tag: str):
        self.domain_tag = domain_tag
        self.cells: list[Cell] = []
        self.vertices: list[tuple[float, float]] = []
        self._vkey2id: dict[tuple[float, float, int], int] = {}
        self.edges: list[Edge] = []
        self.cell_side_edge: dict[tuple[int, str], int] = {}

    # -- vertex handling ------------------------------------------------

    def _vertex_tag(self, x: float, y: float, cell_x0: float, cell_x1: float) -> int:
        # Slit-line vertices are duplicated per side: tag -1 left, +1 right.
        # The tip (0,0) stays shared; the cut reaches the outer boundary at
        # (0,-1), which must be duplicated too.
        if self.domain_tag == "slit" and x == 0.0 and y < 0.0:
            return -1 if cell_x1 <= 0.0 else 1
        return 0

    def _get_or_create_vertex(self, x: float, y: float, tag: int) -> int:
        key = (x, y, tag)
        vid = self._vkey2id.get(key)
        if vid is None:
            vid = len(self.vertices)
            self._vkey2id[key] = vid
            self.vertices.append((x, y))
        return vid

    def _cell_corner_vids(self, x0, y0, x1, y1) -> tuple[int, int, int, int]:
        ids = []
        for (x, y) in ((x0, y0), (x1, y0), (x1, y1), (x0, y1)):
            tag = self._vertex_tag(x, y, x0, x1)
            ids.append(self._get_or_create_vertex(x, y, tag))
        return tuple(ids)

    # -- cell handling ---------------------------------------------------

    def _add_cell(self, level, x0, y0, x1, y1, parent=None) -> int:
        cid = len(self.cells)
        vids = self._cell_corner_vids(x0, y0, x1, y1)
        self.cells.append(Cell(cid, level, x0, y0, x1, y1, parent=parent, vids=vids))
        return cid

    def _split(self, cid: int) -> None:
        c = self.cells[cid]
        xm = 0.5 * (c.x0 + c.x1)
        ym = 0.5 * (c.y0 + c.y1)
        lvl = c.level + 1
        kids = (
            self._add_cell(lvl, c.x0, c.y0, xm, ym, parent=cid),
            self._add_cell(lvl, xm, c.y0, c.x1, ym, parent=cid),
            self._add_cell(lvl, c.x0, ym, xm, c.y1, parent=cid),
            self._add_cell(lvl, xm, ym, c.x1, c.y1, parent=cid),
        )
        c.children = kids

    @property
    def active_cells(self) -> list[Cell]:
        return [c for c in self.cells if c.active]

    def active_cell_ids(self) -> list[int]:
        return [c.id for c in self.cells if c.active]

    def total_area(self) -> float:
        return sum(c.area for c in self.cells if c.active)

    @property
    def domain_area(self) -> float:
        return _DOMAIN_AREAS[self.domain_tag]

    # -- face derivation ---------------------------------------------------

    def _face_key_and_span(self, cell: Cell, side: str):
        """Undirected vertex-id key plus geometric data of one cell face."""
        ll, lr, ur, ul = cell.vids
        if side == "L":
            a, b = ll, ul
            geom = ("V", cell.x0, cell.y0, cell.y1)
        elif side == "R":
            a, b = lr, ur
            geom = ("V", cell.x1, cell.y0, cell.y1)
        elif side == "B":
            a, b = ll, lr
            geom = ("H", cell.y0, cell.x0, cell.x1)
        else:
            a, b = ul, ur
            geom = ("H", cell.y1, cell.x0, cell.x1)
        return (min(a, b), max(a, b)), (a, b), geom

    def _lookup_mid_vid(self, a: int, b: int, geom) -> int | None:
        """Vertex id at the midpoint of face (a,b), honoring slit tags."""
        direction, line, lo, hi = geom
        mid = 0.5 * (lo + hi)
        x, y = (line, mid) if direction == "V" else (mid, line)
        # A duplicated midpoint inherits the side tag of its face's
        # endpoints (the tip / outer corner carry tag 0).
        tag_a = self._vid_tag(a)
        tag_b = self._vid_tag(b)
        tag = tag_a if tag_a != 0 else tag_b
        return self._vkey2id.get((x, y, tag))

    def _vid_tag(self, vid: int) -> int:
        x, y = self.vertices[vid]
        if self.domain_tag != "slit" or x != 0.0 or y >= 0.0:
            return 0
        if (x, y, -1) in self._vkey2id and self._vkey2id[(x, y, -1)] == vid:
            return -1
        return 1

    def _classify_faces(self, collect_violations: bool):
        """Derive edges from active-cell faces via vertex-id matching.

        Returns (edges, cell_side_edge, violations).  With
        collect_violations=True, a face covered two or more levels deep on
        the opposite side is reported instead of raising.
        """
        records: dict[tuple[int, int], list] = {}
        order: list[tuple[int, int]] = []
        for cell in self.cells:
            if not cell.active:
                continue
            for side in SIDES:
                key, (a, b), geom = self._face_key_and_span(cell, side)
                if key not in records:
                    records[key] = []
                    order.append(key)
                records[key].append((cell.id, side, a, b, geom))

        edges: list[Edge] = []
        side_map: dict[tuple[int, str], int] = {}
        violations: set[int] = set()
        consumed: set[tuple[int, int]] = set()

        def new_edge(**kw) -> Edge:
            e = Edge(id=len(edges), **kw)
            edges.append(e)
            return e

        # Pass 1: full matches are regular interior edges.
        for key in order:
            recs = records[key]
            if len(recs) == 2:
                consumed.add(key)
                (c0, s0, _, _, geom), (c1, s1, _, _, _) = recs
                direction, line, lo, hi = geom
                plus, minus = ((c0, s0), (c1, s1)) if s0 in ("R", "T") else ((c1, s1), (c0, s0))
                normal = (1.0, 0.0) if direction == "V" else (0.0, 1.0)
                e = new_edge(
                    kind=EdgeKind.INTERIOR_REGULAR,
                    direction=direction, line=line, lo=lo, hi=hi,
                    v0=key[0], v1=key[1],
                    plus_cell=plus[0], plus_side=plus[1],
                    minus_cell=minus[0], minus_side=minus[1],
                    normal=normal,
                )
                side_map[(plus[0], plus[1])] = e.id
                side_map[(minus[0], minus[1])] = e.id

        # Pass 2: unmatched faces whose midpoint vertex exists are hanging
        # masters (their halves are faces of one-level-finer cells).
        for key in order:
            if key in consumed:
                continue
            (cid, side, a, b, geom) = records[key][0]
            mid = self._lookup_mid_vid(a, b, geom)
            if mid is None:
                continue
            sub_lo = (min(a, mid), max(a, mid))
            sub_hi = (min(mid, b), max(mid, b))
            sub_recs = []
            for sub in (sub_lo, sub_hi):
                rl = records.get(sub)
                sub_recs.append(rl[0] if rl and len(rl) == 1 else None)
            if any(r is None for r in sub_recs):
                # Opposite side is at least two levels finer.
                if collect_violations:
                    violations.add(cid)
                    consumed.add(key)
                    continue
                raise RuntimeError(
                    f"one-irregularity violated at cell {cid} side {side}"
                )
            consumed.add(key)
            direction, line, lo, hi = geom
            m = 0.5 * (lo + hi)
            normal = (1.0, 0.0) if direction == "V" else (0.0, 1.0)
            coarse_is_plus = side in ("R", "T")
            master = new_edge(
                kind=EdgeKind.INTERIOR_HANGING_MASTER,
                direction=direction, line=line, lo=lo, hi=hi,
                v0=key[0], v1=key[1],
                plus_cell=cid, plus_side=side,
                normal=normal,
            )
            side_map[(cid, side)] = master.id
            slave_ids = []
            for half, (sub, rec, span) in enumerate(
                zip((sub_lo, sub_hi), sub_recs, ((lo, m), (m, hi)))
            ):
                fcid, fside, _, _, _ = rec
                consumed.add(sub)
                if coarse_is_plus:
                    pc, ps, mc, ms = cid, side, fcid, fside
                else:
                    pc, ps, mc, ms = fcid, fside, cid, side
                sl = new_edge(
                    kind=EdgeKind.INTERIOR_HANGING_SLAVE,
                    direction=direction, line=line, lo=span[0], hi=span[1],
                    v0=min(sub), v1=max(sub),
                    plus_cell=pc, plus_side=ps,
                    minus_cell=mc, minus_side=ms,
                    normal=normal,
                    master_id=master.id, half=half,
                )
                side_map[(fcid, fside)] = sl.id
                slave_ids.append(sl.id)
            master.slave_ids = tuple(slave_ids)

        # Pass 3: everything left is a boundary face.
        outward = {"L": (-1.0, 0.0), "R": (1.0, 0.0), "B": (0.0, -1.0), "T": (0.0, 1.0)}
        for key in order:
            if key in consumed:
                continue
            (cid, side, a, b, geom) = records[key][0]
            direction, line, lo, hi = geom
            e = new_edge(
                kind=EdgeKind.BOUNDARY,
                direction=direction, line=line, lo=lo, hi=hi,
                v0=key[0], v1=key[1],
                plus_cell=cid, plus_side=side,
                normal=outward[side],
            )
            side_map[(cid, side)] = e.id

        return edges, side_map, violations

    def _rebuild_edges(self) -> None:
        edges, side_map, violations = self._classify_faces(collect_violations=False)
        assert not violations
        self.edges = edges
        self.cell_side_edge = side_map

    # -- queries -----------------------------------------------------------

    def integration_faces(self) -> list[Edge]:
        """Faces integrals are evaluated on: regular, slave, and boundary."""
        return [e for e in self.edges if e.kind is not EdgeKind.INTERIOR_HANGING_MASTER]

    def edge(self, eid: int) -> Edge:
        return self.edges[eid]

    def copy(self) -> "Mesh":
        m = Mesh(self.domain_tag)
        m.cells = [
            Cell(c.id, c.level, c.x0, c.y0, c.x1, c.y1, c.parent, c.children, c.vids)
            for c in self.cells
        ]
        m.vertices = list(self.vertices)
        m._vkey2id = dict(self._vkey2id)
        m._rebuild_edges()
        return m


def make_domain(domain_tag: str, initial_divisions: int) -> Mesh:
    """Build the initial mesh of one of the three reference domains.

    square: uniform n x n grid of (0,1)^2.
    lshape: (-1,1)^2 minus the closed quadrant (0,1)^2; n must be even so
            the re-entrant corner lies on mesh lines.
    slit:   (-1,1)^2 with the vertices on {0} x [-1,0) duplicated, so the
            two sides of the cut are topologically disconnected.
    """
    n = initial_divisions
    if not isinstance(n, int) or n < 1:
        raise ValueError(f"initial_divisions must be a positive integer, got {n!r}")
    if domain_tag not in _DOMAIN_AREAS:
        raise ValueError(f"unknown domain {domain_tag!r}")
    if domain_tag in ("lshape", "slit") and n % 2 != 0:
        raise ValueError(
            f"{domain_tag} requires an even division count so the "
            f"re-entrant corner / slit tip lies on mesh lines; got {n}"
        )

    mesh = Mesh(domain_tag)
    if domain_tag == "square":
        lo, hi = 0.0, 1.0
    else:
        lo, hi = -1.0, 1.0
    coords = [lo + (hi - lo) * i / n for i in range(n + 1)]

    for j in range(n):
        for i in range(n):
            x0, x1 = coords[i], coords[i + 1]
            y0, y1 = coords[j], coords[j + 1]
            if domain_tag == "lshape" and x0 >= 0.0 and y0 >= 0.0:
                continue
            mesh._add_cell(0, x0, y0, x1, y1)
    mesh._rebuild_edges()
    return mesh


def refine(mesh: Mesh, marked: Iterable[int]) -> Mesh:
    """Refine the marked active cells and restore one-irregularity.

    Closure refinement is applied iteratively, processing cells in
    ascending id order, so the result is deterministic.  Returns a new
    mesh; the input is left untouched.
    """
    marked = sorted(set(marked))
    for cid in marked:
        if cid < 0 or cid >= len(mesh.cells):
            raise ValueError(f"unknown cell id {cid}")
        if not mesh.cells[cid].active:
            raise ValueError(f"cell {cid} is not active")

    out = mesh.copy()
    to_split = marked
    while to_split:
        for cid in to_split:
            out._split(cid)
        _, _, violations = out._classify_faces(collect_violations=True)
        to_split = sorted(violations)
    out._rebuild_edges()
    return out


def active_edges(mesh: Mesh) -> Sequence[Edge]:
    """All integration faces plus nothing else (masters are bookkeeping)."""
    return mesh.integration_faces()


def validate(mesh: Mesh) -> None:
    """Assert the mesh invariants; raises AssertionError on violation."""
    area = mesh.total_area()
    ref = mesh.domain_area
    assert abs(area - ref) <= 1e-12 * ref, f"area {area} != {ref}"

    for c in mesh.cells:
        assert (c.children is None) == c.active
        assert c.dx > 0 and c.dy > 0
        if c.children is not None:
            for kid in c.children:
                k = mesh.cells[kid]
                assert k.level == c.level + 1
                assert abs(k.dx - 0.5 * c.dx) < 1e-15 and abs(k.dy - 0.5 * c.dy) < 1e-15

    for e in mesh.edges:
        cp = mesh.cells[e.plus_cell]
        assert cp.active
        if e.kind is EdgeKind.INTERIOR_REGULAR:
            cm = mesh.cells[e.minus_cell]
            assert cm.active and cm.level == cp.level
        elif e.kind is EdgeKind.INTERIOR_HANGING_SLAVE:
            cm = mesh.cells[e.minus_cell]
            assert cm.active
            assert abs(mesh.cells[e.plus_cell].level - cm.level) == 1
            master = mesh.edges[e.master_id]
            assert master.kind is EdgeKind.INTERIOR_HANGING_MASTER
            assert abs(e.h_e - 0.5 * master.h_e) < 1e-15
        elif e.kind is EdgeKind.INTERIOR_HANGING_MASTER:
            lo_e = mesh.edges[e.slave_ids[0]]
            hi_e = mesh.edges[e.slave_ids[1]]
            assert lo_e.lo == e.lo and hi_e.hi == e.hi
            assert lo_e.hi == hi_e.lo == 0.5 * (e.lo + e.hi)
