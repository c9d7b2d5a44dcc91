"""Exploration trees over a handle complex and their cellular maps.

A HandleAssembly is a set of handle copies ("cells") glued along face copies:
each cell carries one slot per side of its downstairs handle, and a slot is
either free or matched with the mirror slot of exactly one other cell.
Depth-d exploration trees, their zipped quotients, and hand-built adversarial
sources are all assemblies.

The tautological map F sends every cell to its downstairs handle; a lift f
develops the tree into a Cayley cover ball chamber by chamber.  Mortal
singularities are detected combinatorially: either two same-handle cells sit
on the same side of one face copy, or the book of cells winding around a
triple-arc copy covers one downstairs sheet twice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .handlebody import SingularHandlebody


class BudgetExceededError(RuntimeError):
    """Node cap hit while growing a tree; partial results are refused."""


class LiftError(RuntimeError):
    """Cover ball too small to receive the tree."""


class HandleAssembly:
    """Handle copies with partial face-copy matching (single partner per slot)."""

    def __init__(self, m: SingularHandlebody):
        self.m = m
        self.cell_handle: list[int] = []
        self.cell_depth: list[int] = []
        self.parent: list[int] = []
        self.parent_slot: list[int] = []
        self.entry_slot: list[int] = []
        self.slot_base: list[int] = [0]
        self.ptr: list[int] = []
        self._owner: list[int] = []

    def new_cell(self, handle: int, depth: int = 0, parent: int = -1,
                 parent_slot: int = -1, entry_slot: int = -1) -> int:
        c = len(self.cell_handle)
        self.cell_handle.append(handle)
        self.cell_depth.append(depth)
        self.parent.append(parent)
        self.parent_slot.append(parent_slot)
        self.entry_slot.append(entry_slot)
        deg = self.m.degree(handle)
        self.slot_base.append(self.slot_base[-1] + deg)
        self.ptr.extend([-1] * deg)
        self._owner.extend([c] * deg)
        return c

    @property
    def ncells(self) -> int:
        return len(self.cell_handle)

    @property
    def nslots(self) -> int:
        return self.slot_base[-1]

    def sid(self, cell: int, slot: int) -> int:
        return self.slot_base[cell] + slot

    def slot_cell(self, sid: int) -> int:
        return self._owner[sid]

    def slot_index(self, sid: int) -> int:
        return sid - self.slot_base[self.slot_cell(sid)]

    def slot_side(self, sid: int) -> int:
        c = self.slot_cell(sid)
        return self.m.handles[self.cell_handle[c]].sides[sid - self.slot_base[c]]

    def match(self, sid_a: int, sid_b: int):
        if self.ptr[sid_a] != -1 or self.ptr[sid_b] != -1:
            raise ValueError("slot already matched")
        if self.m.sides[self.slot_side(sid_a)].partner != self.slot_side(sid_b):
            raise ValueError("slots are not mirror sides of one geometric face")
        self.ptr[sid_a] = sid_b
        self.ptr[sid_b] = sid_a

    def is_tree(self) -> bool:
        """Connected and acyclic in the cell-adjacency graph."""
        n = self.ncells
        if n == 0:
            return True
        edges = sum(1 for s in range(self.nslots) if self.ptr[s] > s)
        seen = [False] * n
        stack = [0]
        seen[0] = True
        count = 1
        while stack:
            c = stack.pop()
            for k in range(self.slot_base[c + 1] - self.slot_base[c]):
                q = self.ptr[self.slot_base[c] + k]
                if q != -1:
                    d = self.slot_cell(q)
                    if not seen[d]:
                        seen[d] = True
                        count += 1
                        stack.append(d)
        return count == n and edges == n - 1


@dataclass
class CellMap:
    """Non-degenerate cellular map from an assembly to M^3 or to a cover.

    target is "base" for the tautological map (images are handle ids) or a
    CoverComplex (images are chamber ids).
    """

    assembly: HandleAssembly
    target: object = "base"
    cell_image: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.cell_image:
            if self.target == "base":
                self.cell_image = list(self.assembly.cell_handle)
            else:
                raise ValueError("cover-target maps need explicit chamber images")

    @property
    def m(self) -> SingularHandlebody:
        return self.assembly.m

    def image_of_cell(self, c: int):
        return self.cell_image[c]

    def image_of_slot(self, sid: int):
        """Image face: a geometric face id downstairs, or a face lift in a cover."""
        a = self.assembly
        side = a.slot_side(sid)
        if self.target == "base":
            return a.m.face_id(side)
        ch = self.cell_image[a.slot_cell(sid)]
        other = self.target.neighbor(ch, side)
        key = (ch, side)
        if other is not None:
            mirror = (other, a.m.sides[side].partner)
            key = min(key, mirror)
        return key


def build_tree(m: SingularHandlebody, depth: int, max_nodes: int = 10**6) -> CellMap:
    """Grow the exploration tree of reduced face words of length <= depth.

    The root copies the base handle; every other cell is glued to its parent
    along one face pair, and the reduction rule forbids re-using the entry
    face.  Raises BudgetExceededError when the cap is hit (no partial trees).
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    asm = HandleAssembly(m)
    # per handle: slot -> (child handle, child entry slot)
    step = []
    for h in m.handles:
        row = []
        for sid in h.sides:
            partner = m.sides[sid].partner
            row.append((m.sides[partner].handle, m.sides[partner].slot))
        step.append(row)

    root = asm.new_cell(m.base, 0)
    frontier = [root]
    for level in range(depth):
        nxt = []
        for c in frontier:
            h = asm.cell_handle[c]
            entry = asm.entry_slot[c]
            for k in range(m.degree(h)):
                if k == entry:
                    continue
                child_h, child_entry = step[h][k]
                if asm.ncells >= max_nodes:
                    raise BudgetExceededError(
                        f"node cap {max_nodes} exceeded at depth {level + 1}"
                    )
                child = asm.new_cell(child_h, level + 1, c, k, child_entry)
                asm.match(asm.sid(c, k), asm.sid(child, child_entry))
                nxt.append(child)
        frontier = nxt
    return CellMap(asm, "base")


def disjoint_union(f1: CellMap, f2: CellMap) -> CellMap:
    """Side-by-side union of two sources over the same target."""
    if f1.m is not f2.m or f1.target != f2.target and not (
        f1.target is f2.target
    ):
        raise ValueError("sources must share a target")
    asm = HandleAssembly(f1.m)
    images = []
    for f in (f1, f2):
        a = f.assembly
        off = asm.ncells
        for c in range(a.ncells):
            asm.new_cell(a.cell_handle[c], a.cell_depth[c],
                         a.parent[c] + off if a.parent[c] >= 0 else -1,
                         a.parent_slot[c], a.entry_slot[c])
            images.append(f.cell_image[c])
        for s in range(a.nslots):
            p = a.ptr[s]
            if p > s:
                cs, ks = a.slot_cell(s), a.slot_index(s)
                cp, kp = a.slot_cell(p), a.slot_index(p)
                asm.match(asm.sid(cs + off, ks), asm.sid(cp + off, kp))
    return CellMap(asm, f1.target, images)


def lift_map(f: CellMap, cover) -> CellMap:
    """Develop the tautological map into a cover ball, chamber by chamber.

    The lift respects handle identities: projection(lift) = F cell-wise.
    Raises LiftError when the ball has no room for some step.
    """
    if f.target != "base":
        raise ValueError("lift_map expects the tautological map")
    a = f.assembly
    images = [-1] * a.ncells
    if a.ncells:
        if cover.chamber_handle(cover.base_chamber) != a.cell_handle[0]:
            raise LiftError("base chamber does not lie over the root handle")
        images[0] = cover.base_chamber
    for c in range(1, a.ncells):
        p = a.parent[c]
        if p < 0 or images[p] < 0:
            raise LiftError(f"cell {c} is not reachable from the root")
        side = a.m.handles[a.cell_handle[p]].sides[a.parent_slot[c]]
        nb = cover.neighbor(images[p], side)
        if nb is None:
            raise LiftError(
                f"cover ball too small: no chamber across side {side} "
                f"at depth {a.cell_depth[c]}"
            )
        images[c] = nb
    return CellMap(a, cover, images)


# -- singular locus ---------------------------------------------------------


@dataclass(frozen=True)
class Singularity:
    kind: str                  # face | book
    where: tuple               # (face key, side) or (arc id, component rep, sheet)
    cells: tuple[int, int]     # witness pair with equal image


@dataclass
class SingularLocus:
    entries: list[Singularity]

    def is_empty(self) -> bool:
        return not self.entries

    def witness_pairs(self) -> list[tuple[int, int]]:
        return [e.cells for e in self.entries]


class AssemblyView:
    """Uniform read access for singularity detection on raw assemblies."""

    def __init__(self, f: CellMap):
        self.f = f
        self.a = f.assembly
        self.m = f.assembly.m

    @property
    def ncells(self):
        return self.a.ncells

    def handle(self, c):
        return self.a.cell_handle[c]

    def cells_of_handle(self):
        by_handle: dict[int, list[int]] = {}
        for c in range(self.a.ncells):
            by_handle.setdefault(self.a.cell_handle[c], []).append(c)
        return by_handle

    def slot_key(self, c, slot):
        s = self.a.sid(c, slot)
        p = self.a.ptr[s]
        return s if p == -1 else min(s, p)

    def occupants(self, key, side):
        out = []
        for s in (key, self.a.ptr[key]):
            if s != -1 and self.a.slot_side(s) == side:
                out.append(self.a.slot_cell(s))
        return out


def mortal_singularities(f, view=None) -> SingularLocus:
    """Sing(f): cells where the map fails to be locally injective.

    Face singularities: two distinct cells with one face copy on the same
    downstairs side.  Book singularities: the cells around a triple-arc copy
    cover one downstairs sheet twice.  Immortal squares live in rectangle
    interiors and are never reported here.
    """
    view = view or AssemblyView(f)
    m = view.m
    entries: list[Singularity] = []
    by_handle = view.cells_of_handle()

    # face type: same side of one face copy shared by two cells
    seen_keys = set()
    for c in range(view.ncells):
        deg = m.degree(view.handle(c))
        for k in range(deg):
            key = view.slot_key(c, k)
            if key in seen_keys:
                continue
            seen_keys.add(key)
            side = m.handles[view.handle(c)].sides[k]
            for s in (side, m.sides[side].partner):
                occ = view.occupants(key, s)
                if len(set(occ)) > 1:
                    occ = sorted(set(occ))
                    entries.append(Singularity("face", (key, s), (occ[0], occ[1])))

    # book type: walk the book around every triple-arc copy
    slot_of_side = {}
    for h in m.handles:
        for slot, side in enumerate(h.sides):
            slot_of_side[side] = slot
    for arc in m.arcs:
        # component structure of face copies over this arc, linked through cells
        adj: dict[object, list[tuple[int, int, object]]] = {}
        incidence: list[tuple[object, int, int]] = []  # (key_a, cell, sheet)
        for i, (h, a_side, b_side) in enumerate(arc.sheets):
            for c in by_handle.get(h, ()):
                ka = view.slot_key(c, slot_of_side[a_side])
                kb = view.slot_key(c, slot_of_side[b_side])
                adj.setdefault(ka, []).append((c, i, kb))
                adj.setdefault(kb, []).append((c, i, ka))
                incidence.append((ka, c, i))
        comp: dict[object, int] = {}
        nc = 0
        for start in adj:
            if start in comp:
                continue
            stack = [start]
            comp[start] = nc
            while stack:
                k = stack.pop()
                for (_, _, k2) in adj[k]:
                    if k2 not in comp:
                        comp[k2] = nc
                        stack.append(k2)
            nc += 1
        sheets_seen: dict[tuple[int, int], int] = {}
        reported = set()
        for ka, c, i in incidence:
            tag = (comp[ka], i)
            prev = sheets_seen.get(tag)
            if prev is None:
                sheets_seen[tag] = c
            elif prev != c and tag not in reported:
                reported.add(tag)
                entries.append(
                    Singularity("book", (arc.id, tag[0], i), tuple(sorted((prev, c))))
                )
    return SingularLocus(entries)


# -- exports ----------------------------------------------------------------


def tree_to_json(f: CellMap) -> dict:
    a = f.assembly
    return {
        "nodes": [
            {
                "id": c,
                "handle": a.cell_handle[c],
                "depth": a.cell_depth[c],
                "parent": a.parent[c],
                "via_face": (
                    a.m.handles[a.cell_handle[a.parent[c]]].sides[a.parent_slot[c]]
                    if a.parent[c] >= 0
                    else None
                ),
            }
            for c in range(a.ncells)
        ]
    }


def tree_to_dot(f: CellMap) -> str:
    a = f.assembly
    lines = ["graph exploration_tree {"]
    for c in range(a.ncells):
        lines.append(f'  n{c} [label="{a.m.handles[a.cell_handle[c]].label}"];')
    for c in range(a.ncells):
        p = a.parent[c]
        if p >= 0:
            side = a.m.handles[a.cell_handle[p]].sides[a.parent_slot[c]]
            lines.append(f'  n{p} -- n{c} [label="x{side}"];')
    lines.append("}")
    return "\n".join(lines)
