"""Folding and zipping: the equivalence-relation calculus on cell maps.

phi(f) groups source cells by image.  Zipping kills mortal singularities by
iterated folds; the limit partition psi(f) is strategy independent.  Three
move kinds occur:

* corner closure: a cell sees two pages of a triple-arc book whose closed
  three-page form is forced downstairs, so the third face pair is glued
  (on the infinite tree this gluing is always forced; performing it on a
  truncation is what makes finite-depth quotients converge to the cover);
* face fold: two same-handle cells sit on the same side of one face copy
  and are identified, their boundaries identified pairwise;
* book fold: two cells covering the same downstairs sheet around one arc
  copy are identified directly (used by fold_step and length search).

A fold identifies the witness pair and propagates boundary compatibility;
new singularities exposed by that become later folds.  Everything is
monotone, so the final partition is canonical; strategies only reorder the
work queue.
"""

from __future__ import annotations

import heapq
import random as _random
from collections import deque
from dataclasses import dataclass, field

from .tree import CellMap, SingularLocus, Singularity, mortal_singularities


# -- partitions ---------------------------------------------------------------


class CellPartition:
    """Partition of the source cells and face copies of a CellMap.

    Labels are canonical (first-occurrence order), so two partitions over
    the same source are equal iff they are equal as relations.
    """

    def __init__(self, cell_label, slot_label, origin: str = ""):
        self.cell_label = list(cell_label)
        self.slot_label = list(slot_label)
        self.origin = origin
        self._canon()

    def _canon(self):
        for labels in (self.cell_label, self.slot_label):
            remap: dict[int, int] = {}
            for i, lab in enumerate(labels):
                labels[i] = remap.setdefault(lab, len(remap))

    @property
    def n_cell_classes(self) -> int:
        return 1 + max(self.cell_label) if self.cell_label else 0

    @property
    def n_classes(self) -> int:
        n = len(set(self.cell_label)) + len(set(self.slot_label))
        return n

    def same_cell(self, a: int, b: int) -> bool:
        return self.cell_label[a] == self.cell_label[b]

    def same_slot(self, a: int, b: int) -> bool:
        return self.slot_label[a] == self.slot_label[b]

    def cell_classes(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(1 + max(self.cell_label, default=-1))]
        for c, lab in enumerate(self.cell_label):
            out[lab].append(c)
        return out

    def refines(self, other: "CellPartition") -> bool:
        """Every class of self lies inside a class of other."""
        f: dict[int, int] = {}
        for c, lab in enumerate(self.cell_label):
            o = other.cell_label[c]
            if f.setdefault(lab, o) != o:
                return False
        g: dict[int, int] = {}
        for s, lab in enumerate(self.slot_label):
            o = other.slot_label[s]
            if g.setdefault(lab, o) != o:
                return False
        return True

    def __eq__(self, other):
        return (
            isinstance(other, CellPartition)
            and self.cell_label == other.cell_label
            and self.slot_label == other.slot_label
        )

    def __hash__(self):
        return hash((tuple(self.cell_label), tuple(self.slot_label)))


def phi(f: CellMap) -> CellPartition:
    """The same-image relation: cells grouped by image cell, face copies by
    image face."""
    a = f.assembly
    cell_lab = [None] * a.ncells
    groups: dict[object, int] = {}
    for c in range(a.ncells):
        img = f.image_of_cell(c)
        cell_lab[c] = groups.setdefault(("c", img), len(groups))
    slot_lab = [None] * a.nslots
    sgroups: dict[object, int] = {}
    for s in range(a.nslots):
        img = f.image_of_slot(s)
        slot_lab[s] = sgroups.setdefault(img, len(sgroups))
    return CellPartition(cell_lab, slot_lab, origin="phi")


# -- traces -------------------------------------------------------------------


@dataclass(frozen=True)
class FoldRecord:
    step: int
    kind: str          # corner | face | book | closure-merge
    where: str         # arc or face-copy tag
    a: str
    b: str


@dataclass
class ZippingTrace:
    records: list[FoldRecord] = field(default_factory=list)
    strategy: str = "fifo"
    seed: int | None = None

    def __len__(self):
        return len(self.records)

    def format_lines(self) -> list[str]:
        return [f"{r.step},{r.where},{r.a},{r.b}" for r in self.records]

    def closure_index(self, f: CellMap, x, y) -> int | None:
        """First step after which x ~ y, by replaying the fold log."""
        a = f.assembly
        parent = list(range(a.ncells + a.nslots))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        def idx(item):
            kind, i = item
            return i if kind == "cell" else a.ncells + i

        def union(i, j):
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[rj] = ri

        for s in range(a.nslots):
            p = a.ptr[s]
            if p > s:
                union(a.ncells + s, a.ncells + p)
        tx, ty = idx(x), idx(y)
        if find(tx) == find(ty):
            return 0
        for r in self.records:
            ia = _parse_tag(r.a, a)
            ib = _parse_tag(r.b, a)
            union(ia, ib)
            if r.kind == "face" or r.kind == "book":
                ca, cb = ia, ib
                for k in range(a.slot_base[ca + 1] - a.slot_base[ca]):
                    union(a.ncells + a.sid(ca, k), a.ncells + a.sid(cb, k))
            if find(tx) == find(ty):
                return r.step
        return None


def _parse_tag(tag: str, a) -> int:
    kind, num = tag.split(":")
    return int(num) if kind == "cell" else a.ncells + int(num)


# -- the zipping engine -------------------------------------------------------


STRATEGIES = ("fifo", "lifo", "near-root", "random")


class _Engine:
    def __init__(self, f: CellMap, strategy="fifo", seed=None, record_trace=True):
        if callable(strategy):
            self.keyfn = strategy
            strategy = "user"
        else:
            self.keyfn = None
            if strategy not in STRATEGIES:
                raise ValueError(f"unknown strategy {strategy!r}")
        self.f = f
        self.strategy = strategy
        self.seed = seed
        self.rng = _random.Random(seed if seed is not None else 0)
        self.record_trace = record_trace
        self.trace = ZippingTrace([], strategy, seed)

        a = f.assembly
        m = a.m
        self.a, self.m = a, m
        nc, ns = a.ncells, a.nslots
        self.cuf = list(range(nc))
        self.suf = list(range(ns))
        self.owner = [0] * ns
        self.side = [0] * ns
        for c in range(nc):
            h = a.cell_handle[c]
            base = a.slot_base[c]
            for k, sd in enumerate(m.handles[h].sides):
                self.owner[base + k] = c
                self.side[base + k] = sd
        # canonical face side: bit 0 holds the occupant owning min(side, j side)
        self.occ = [[-1] * ns, [-1] * ns]
        self.size_c = [1] * nc
        self.size_s = [1] * ns
        self.steps = 0
        self.ran = False

        nsides = len(m.sides)
        self.jslot = [m.sides[m.sides[sd].partner].slot for sd in range(nsides)]
        self.own_slot = [m.sides[sd].slot for sd in range(nsides)]
        # occupant bit of the side opposite a given side, and of the side itself
        self.opp_bit = [0 if m.sides[sd].partner < sd else 1 for sd in range(nsides)]
        self.own_bit = [1 - b for b in self.opp_bit]

        # corner tables per handle: sheets are (handle, a, b) with j(b_i) = a_{i+1};
        # closing a book joins prev cell's a_{i-1} slot to next cell's b_{i+1} slot.
        # rec = (slot_a, opp_bit_a, slot_b, opp_bit_b, prev_out, next_out, arc)
        slot_of = {}
        for h in m.handles:
            for k, sd in enumerate(h.sides):
                slot_of[sd] = k
        self.corners: list[list[tuple]] = [[] for _ in m.handles]
        self.corners_by_slot: list[dict[int, list[int]]] = [dict() for _ in m.handles]
        for arc in m.arcs:
            sh = arc.sheets
            for i in range(3):
                h, a_side, b_side = sh[i]
                prev_a = sh[(i - 1) % 3][1]
                next_b = sh[(i + 1) % 3][2]
                self.corners[h].append(
                    (slot_of[a_side], self.opp_bit[a_side],
                     slot_of[b_side], self.opp_bit[b_side],
                     slot_of[prev_a], slot_of[next_b], arc.id)
                )
        for h in m.handles:
            by = self.corners_by_slot[h.id]
            for ci, rec in enumerate(self.corners[h.id]):
                by.setdefault(rec[0], []).append(ci)
                by.setdefault(rec[2], []).append(ci)

    def run(self, max_folds=None):
        """Drain the work pool; all hot paths inlined for speed."""
        if self.ran:
            return self
        self.ran = True
        a, m = self.a, self.m
        nc, ns = a.ncells, a.nslots
        cuf, suf = self.cuf, self.suf
        occ0, occ1 = self.occ
        size_c, size_s = self.size_c, self.size_s
        owner, side = self.owner, self.side
        slot_base = a.slot_base
        cell_handle = a.cell_handle
        cell_depth = a.cell_depth
        corners = self.corners
        corners_by_slot = self.corners_by_slot
        jslot, own_slot = self.jslot, self.own_slot
        opp_bit = self.opp_bit
        partner_side = [m.sides[sd].partner for sd in range(len(m.sides))]
        records = self.trace.records if self.record_trace else None
        strategy = self.strategy
        keyfn = self.keyfn
        rng_random = self.rng.random
        fval = self.f

        heap: list = []
        fifo = deque()
        stack: list = []
        seq = 0

        def push(move):
            nonlocal seq
            if strategy == "fifo":
                fifo.append(move)
            elif strategy == "lifo":
                stack.append(move)
            else:
                if keyfn is not None:
                    key = keyfn(fval, move)
                elif strategy == "near-root":
                    if move[0] == "g":
                        key = min(cell_depth[owner[move[1]]], cell_depth[owner[move[2]]])
                    else:
                        key = min(cell_depth[move[1]], cell_depth[move[2]])
                else:
                    key = rng_random()
                heapq.heappush(heap, (key, seq, move))
            seq += 1

        scanning = False

        def rescan(cell, slot):
            if not scanning:
                return
            h = cell_handle[cell]
            recs = corners[h]
            idxs = range(len(recs)) if slot is None else corners_by_slot[h].get(slot, ())
            base = slot_base[cell]
            for ci in idxs:
                slot_a, bit_a, slot_b, bit_b, prev_out, next_out, arc = recs[ci]
                i = base + slot_a
                while suf[i] != i:
                    suf[i] = suf[suf[i]]
                    i = suf[i]
                p = occ0[i] if bit_a == 0 else occ1[i]
                if p < 0:
                    continue
                i = base + slot_b
                while suf[i] != i:
                    suf[i] = suf[suf[i]]
                    i = suf[i]
                n = occ0[i] if bit_b == 0 else occ1[i]
                if n < 0:
                    continue
                sa = slot_base[p] + prev_out
                sb = slot_base[n] + next_out
                i = sa
                while suf[i] != i:
                    suf[i] = suf[suf[i]]
                    i = suf[i]
                k = sb
                while suf[k] != k:
                    suf[k] = suf[suf[k]]
                    k = suf[k]
                if i != k:
                    push(("g", sa, sb, arc))

        def glue(sa, sb, tag, record) -> bool:
            ra = sa
            while suf[ra] != ra:
                suf[ra] = suf[suf[ra]]
                ra = suf[ra]
            rb = sb
            while suf[rb] != rb:
                suf[rb] = suf[suf[rb]]
                rb = suf[rb]
            if ra == rb:
                return False
            if size_s[ra] < size_s[rb]:
                ra, rb = rb, ra
            suf[rb] = ra
            size_s[ra] += size_s[rb]
            sd = side[sa]
            jd = partner_side[sd]
            z, zmax = (sd, jd) if sd < jd else (jd, sd)
            for bit in (0, 1):
                arr = occ0 if bit == 0 else occ1
                oa, ob = arr[ra], arr[rb]
                if ob < 0:
                    continue
                if oa < 0:
                    arr[ra] = ob
                    zz = z if bit == 0 else zmax
                    rescan(ob, own_slot[zz])
                    other = (occ1 if bit == 0 else occ0)[ra]
                    if other >= 0:
                        rescan(other, jslot[zz])
                else:
                    x = oa
                    while cuf[x] != x:
                        cuf[x] = cuf[cuf[x]]
                        x = cuf[x]
                    y = ob
                    while cuf[y] != y:
                        cuf[y] = cuf[cuf[y]]
                        y = cuf[y]
                    if x != y:
                        push(("m", x, y, tag))
            if record:
                self.steps += 1
                if records is not None:
                    records.append(
                        FoldRecord(self.steps, "corner", f"arc:{tag}", f"slot:{sa}", f"slot:{sb}")
                    )
            return True

        def merge(ca, cb, tag) -> bool:
            ra = ca
            while cuf[ra] != ra:
                cuf[ra] = cuf[cuf[ra]]
                ra = cuf[ra]
            rb = cb
            while cuf[rb] != rb:
                cuf[rb] = cuf[cuf[rb]]
                rb = cuf[rb]
            if ra == rb:
                return False
            if cell_handle[ra] != cell_handle[rb]:
                raise ValueError("fold would merge cells over distinct handles")
            if size_c[ra] < size_c[rb]:
                ra, rb = rb, ra
            cuf[rb] = ra
            size_c[ra] += size_c[rb]
            self.steps += 1
            if records is not None:
                records.append(
                    FoldRecord(self.steps, "face", f"face:{tag}", f"cell:{ra}", f"cell:{rb}")
                )
            deg = slot_base[ra + 1] - slot_base[ra]
            ba, bb = slot_base[ra], slot_base[rb]
            for k in range(deg):
                glue(ba + k, bb + k, tag, False)
            return True

        # initial occupancy, matching, and corner sweep
        own_bit = self.own_bit
        for s in range(ns):
            if occ0[s] < 0 and occ1[s] < 0:
                if own_bit[side[s]] == 0:
                    occ0[s] = owner[s]
                else:
                    occ1[s] = owner[s]
        # the assembly's own matching is structure, not folds; corner
        # availability it creates is caught by the full sweep below
        ptr = a.ptr
        for s in range(ns):
            p = ptr[s]
            if p > s:
                glue(s, p, -1, False)
        scanning = True
        for c in range(nc):
            rescan(c, None)

        # drain
        while True:
            if max_folds is not None and self.steps >= max_folds:
                break
            if strategy == "fifo":
                if not fifo:
                    break
                move = fifo.popleft()
            elif strategy == "lifo":
                if not stack:
                    break
                move = stack.pop()
            else:
                if not heap:
                    break
                move = heapq.heappop(heap)[2]
            if move[0] == "g":
                glue(move[1], move[2], move[3], True)
            else:
                merge(move[1], move[2], move[3])
        return self

    def cfind(self, i):
        uf = self.cuf
        while uf[i] != i:
            uf[i] = uf[uf[i]]
            i = uf[i]
        return i

    def sfind(self, i):
        uf = self.suf
        while uf[i] != i:
            uf[i] = uf[uf[i]]
            i = uf[i]
        return i

    def partition(self) -> CellPartition:
        cells = [self.cfind(c) for c in range(self.a.ncells)]
        slots = [self.sfind(s) for s in range(self.a.nslots)]
        return CellPartition(cells, slots, origin=f"zip[{self.strategy}]")


# -- quotient complexes -------------------------------------------------------


class QuotientComplex:
    """Cells of a partition with the induced gluing and induced map."""

    def __init__(self, f: CellMap, partition: CellPartition):
        self.f = f
        self.partition = partition
        a, m = f.assembly, f.assembly.m
        self.m = m
        self.n_classes = 1 + max(partition.cell_label, default=-1)
        self.class_handle = [-1] * self.n_classes
        self.class_min_depth = [None] * self.n_classes
        self.class_rep = [-1] * self.n_classes
        self.members: list[list[int]] = [[] for _ in range(self.n_classes)]
        for c in range(a.ncells):
            lab = partition.cell_label[c]
            self.members[lab].append(c)
            if self.class_rep[lab] < 0:
                self.class_rep[lab] = c
                self.class_handle[lab] = a.cell_handle[c]
            elif a.cell_handle[c] != self.class_handle[lab]:
                raise ValueError("partition merges cells over distinct handles")
            d = a.cell_depth[c]
            if self.class_min_depth[lab] is None or d < self.class_min_depth[lab]:
                self.class_min_depth[lab] = d
        # face classes and whole-side occupant lists
        self.n_faces = 1 + max(partition.slot_label, default=-1)
        self.face_occ: list[dict[int, list[int]]] = [dict() for _ in range(self.n_faces)]
        for s in range(a.nslots):
            lab = partition.slot_label[s]
            side = a.slot_side(s)
            occ = self.face_occ[lab].setdefault(side, [])
            cl = partition.cell_label[a.slot_cell(s)]
            if cl not in occ:
                occ.append(cl)
        # induced map and its image conflicts (empty for sound partitions)
        self.image_conflicts = []
        self.class_image = [None] * self.n_classes
        for lab in range(self.n_classes):
            imgs = {f.image_of_cell(c) for c in self.members[lab]}
            self.class_image[lab] = f.image_of_cell(self.class_rep[lab])
            if len(imgs) > 1:
                self.image_conflicts.append((lab, sorted(imgs, key=repr)))

    # slot class of (class, slot index)
    def qslot(self, lab: int, slot: int) -> int:
        a = self.f.assembly
        return self.partition.slot_label[a.sid(self.class_rep[lab], slot)]

    def occupants_across(self, lab: int, slot: int) -> list[int]:
        a, m = self.f.assembly, self.m
        side = m.handles[self.class_handle[lab]].sides[slot]
        other = m.sides[side].partner
        return self.face_occ[self.qslot(lab, slot)].get(other, [])

    def nondegenerate(self) -> bool:
        """The induced map injects on each class: distinct slots stay distinct."""
        for lab in range(self.n_classes):
            deg = self.m.degree(self.class_handle[lab])
            keys = {self.qslot(lab, k) for k in range(deg)}
            if len(keys) != deg:
                return False
        return True

    def zipping_created_immortal(self) -> list[dict]:
        """Crossings of 2-handle classes over 0-handle classes, per square."""
        out = []
        m = self.m
        for q in m.squares:
            slot_a, slot_b = m.sides[q.chords[0]].slot, m.sides[q.chords[1]].slot
            for lab in range(self.n_classes):
                if self.class_handle[lab] != q.host:
                    continue
                occ_a = self.occupants_across(lab, slot_a)
                occ_b = self.occupants_across(lab, slot_b)
                for x in occ_a:
                    for y in occ_b:
                        out.append(
                            {"square": q.id, "host_class": lab, "sheets": [x, y]}
                        )
        return out

    def view(self):
        return QuotientView(self)

    def one_skeleton(self, witness_depth=None, radius=None):
        """Vertex/edge classes as a labelled graph, junk filtered.

        witness_depth keeps only classes containing a cell at that depth or
        less; radius restricts to 1-skeleton distance from the root class;
        edges need both endpoints present (closed restriction).
        """
        from .graphs import LabeledGraph

        m = self.m
        kept = [
            witness_depth is None or self.class_min_depth[lab] <= witness_depth
            for lab in range(self.n_classes)
        ]
        verts = [
            lab
            for lab in range(self.n_classes)
            if kept[lab] and m.handles[self.class_handle[lab]].index == 0
        ]
        edges = []
        for lab in range(self.n_classes):
            if not kept[lab] or m.handles[self.class_handle[lab]].index != 1:
                continue
            tails = self.occupants_across(lab, 0)
            heads = self.occupants_across(lab, 1)
            if len(tails) == 1 and len(heads) == 1 and kept[tails[0]] and kept[heads[0]]:
                edges.append((tails[0], heads[0], lab))
        if radius is not None:
            root = self.partition.cell_label[0]
            dist = {root: 0}
            adj: dict[int, list[int]] = {}
            for u, v, _ in edges:
                adj.setdefault(u, []).append(v)
                adj.setdefault(v, []).append(u)
            q = deque([root])
            while q:
                u = q.popleft()
                if dist[u] >= radius:
                    continue
                for v in adj.get(u, ()):
                    if v not in dist:
                        dist[v] = dist[u] + 1
                        q.append(v)
            verts = [v for v in verts if v in dist]
        vset = set(verts)
        g = LabeledGraph()
        for v in verts:
            g.add_node(v, m.handles[self.class_handle[v]].label)
        for u, v, lab in edges:
            if u in vset and v in vset:
                g.add_edge(u, v, m.handles[self.class_handle[lab]].label)
        return g

    def to_json(self) -> dict:
        return {
            "classes": self.n_classes,
            "faces": self.n_faces,
            "by_handle": {
                self.m.handles[h].label: sum(
                    1 for lab in range(self.n_classes) if self.class_handle[lab] == h
                )
                for h in range(len(self.m.handles))
            },
            "image_conflicts": len(self.image_conflicts),
            "nondegenerate": self.nondegenerate(),
        }


class QuotientView:
    """mortal_singularities access over a quotient."""

    def __init__(self, qc: QuotientComplex):
        self.qc = qc
        self.m = qc.m

    @property
    def ncells(self):
        return self.qc.n_classes

    def handle(self, c):
        return self.qc.class_handle[c]

    def cells_of_handle(self):
        by: dict[int, list[int]] = {}
        for lab in range(self.qc.n_classes):
            by.setdefault(self.qc.class_handle[lab], []).append(lab)
        return by

    def slot_key(self, c, slot):
        return self.qc.qslot(c, slot)

    def occupants(self, key, side):
        return list(self.qc.face_occ[key].get(side, []))


# -- public operations --------------------------------------------------------


def zip_map(f: CellMap, strategy="fifo", seed=None, max_folds=None,
            record_trace=True) -> tuple[QuotientComplex, ZippingTrace]:
    """Zip away every mortal singularity of a finite source.

    Returns the quotient complex and the fold trace; the final partition is
    psi(f) regardless of the strategy.
    """
    eng = _Engine(f, strategy=strategy, seed=seed, record_trace=record_trace)
    eng.run(max_folds=max_folds)
    part = eng.partition()
    return QuotientComplex(f, part), eng.trace


def psi(f: CellMap) -> CellPartition:
    """The smallest admissible partition killing all mortal singularities."""
    qc, _ = zip_map(f, record_trace=False)
    part = qc.partition
    part.origin = "psi"
    return part


def quotient(f: CellMap, r: CellPartition) -> QuotientComplex:
    """Quotient by an admissible partition; refuses inadmissible input.

    Admissibility: r refines phi(f) and identifying two cells identifies
    their boundaries slot by slot.
    """
    ph = phi(f)
    if not r.refines(ph):
        for c in range(f.assembly.ncells):
            for d in range(c + 1, f.assembly.ncells):
                if r.same_cell(c, d) and f.image_of_cell(c) != f.image_of_cell(d):
                    raise ValueError(f"partition not admissible: cells {c},{d} have distinct images")
        for s in range(f.assembly.nslots):
            for t in range(s + 1, f.assembly.nslots):
                if r.same_slot(s, t) and f.image_of_slot(s) != f.image_of_slot(t):
                    raise ValueError(f"partition not admissible: faces {s},{t} have distinct images")
    a = f.assembly
    reps: dict[int, int] = {}
    for c in range(a.ncells):
        lab = r.cell_label[c]
        if lab in reps:
            c0 = reps[lab]
            deg = a.slot_base[c0 + 1] - a.slot_base[c0]
            for k in range(deg):
                if r.slot_label[a.sid(c0, k)] != r.slot_label[a.sid(c, k)]:
                    raise ValueError(
                        f"partition not admissible: cells {c0},{c} merged "
                        f"without identifying slot {k}"
                    )
        else:
            reps[lab] = c
    return QuotientComplex(f, r)


class ZipState:
    """One-fold-at-a-time interface over a partial zip."""

    def __init__(self, f: CellMap, partition: CellPartition | None = None):
        self.f = f
        if partition is None:
            a = f.assembly
            slot_lab = list(range(a.nslots))
            for s in range(a.nslots):
                p = a.ptr[s]
                if p > s:
                    slot_lab[p] = slot_lab[s]
            partition = CellPartition(list(range(a.ncells)), slot_lab, origin="start")
        self.partition = partition

    def quotient(self) -> QuotientComplex:
        return QuotientComplex(self.f, self.partition)

    def singularities(self) -> SingularLocus:
        return mortal_singularities(None, view=self.quotient().view())

    def corner_closures(self):
        """Available forced third-face gluings, as (slot class, slot class)."""
        qc = self.quotient()
        m = qc.m
        slot_of = {}
        for h in m.handles:
            for k, sd in enumerate(h.sides):
                slot_of[sd] = k
        out = []
        for arc in m.arcs:
            sh = arc.sheets
            for i in range(3):
                h, a_side, b_side = sh[i]
                prev_a = slot_of[sh[(i - 1) % 3][1]]
                next_b = slot_of[sh[(i + 1) % 3][2]]
                for lab in range(qc.n_classes):
                    if qc.class_handle[lab] != h:
                        continue
                    ps = qc.occupants_across(lab, slot_of[a_side])
                    ns = qc.occupants_across(lab, slot_of[b_side])
                    if len(ps) == 1 and len(ns) == 1:
                        ka = qc.qslot(ps[0], prev_a)
                        kb = qc.qslot(ns[0], next_b)
                        if ka != kb:
                            out.append((min(ka, kb), max(ka, kb), arc.id))
        return sorted(set(out))

    def fold(self, s) -> "ZipState":
        """Apply one fold at a current mortal singularity (or corner closure).

        s is a Singularity from singularities(), or a corner entry from
        corner_closures().  Raises if s is not singular in this state.
        """
        cells = list(self.partition.cell_label)
        slots = list(self.partition.slot_label)
        a = self.f.assembly

        def merge_cells(x, y):
            lx, ly = cells[x], cells[y]
            if lx == ly:
                raise ValueError("fold on already-merged pair")
            for c in range(len(cells)):
                if cells[c] == ly:
                    cells[c] = lx
            cx, cy = x, y
            deg = a.slot_base[cx + 1] - a.slot_base[cx]
            for k in range(deg):
                merge_slots(a.sid(cx, k), a.sid(cy, k))

        def merge_slots(x, y):
            lx, ly = slots[x], slots[y]
            if lx == ly:
                return
            for s2 in range(len(slots)):
                if slots[s2] == ly:
                    slots[s2] = lx

        if isinstance(s, Singularity):
            current = self.singularities().entries
            if s not in current:
                raise ValueError("choice is not singular in the current state")
            ca = self.quotient().class_rep[s.cells[0]]
            cb = self.quotient().class_rep[s.cells[1]]
            merge_cells(ca, cb)
        else:
            ka, kb, _arc = s
            if (ka, kb, _arc) not in self.corner_closures():
                raise ValueError("closure is not available in the current state")
            sa = next(i for i in range(a.nslots) if slots[i] == ka)
            sb = next(i for i in range(a.nslots) if slots[i] == kb)
            merge_slots(sa, sb)
        return ZipState(self.f, CellPartition(cells, slots, origin="fold"))


def fold_step(state: ZipState, s) -> ZipState:
    """Single fold: identify the witness pair at s and close boundaries."""
    return state.fold(s)


def check_psi_equals_phi(f_lift: CellMap, margin: int,
                         part: CellPartition | None = None) -> dict:
    """Interior comparison of psi with the same-image relation of a lift.

    The paper-level equality concerns the infinite tree; here every phi pair
    whose cells both lie at depth <= d - margin must already be a psi pair.
    Reports the smallest margin that succeeds.
    """
    a = f_lift.assembly
    d = max(a.cell_depth, default=0)
    if margin >= d and d > 0:
        raise ValueError("margin must be smaller than the tree depth")
    if part is None:
        part = psi(f_lift)
    groups: dict[object, dict[int, int]] = {}
    for c in range(a.ncells):
        img = f_lift.image_of_cell(c)
        lab = part.cell_label[c]
        best = groups.setdefault(("c", img), {})
        if lab not in best or a.cell_depth[c] < best[lab]:
            best[lab] = a.cell_depth[c]
    for s in range(a.nslots):
        img = f_lift.image_of_slot(s)
        lab = part.slot_label[s]
        dep = a.cell_depth[a.slot_cell(s)]
        best = groups.setdefault(("s", img), {})
        if lab not in best or dep < best[lab]:
            best[lab] = dep
    violations = []
    required = 0
    for img, classes in groups.items():
        if len(classes) < 2:
            continue
        depths = sorted(classes.values())
        second = depths[1]
        if second <= d - margin:
            violations.append({"image": repr(img), "class_depths": depths[:4]})
        required = max(required, d - second + 1)
    return {
        "status": "pass" if not violations else "fail",
        "depth": d,
        "margin": margin,
        "smallest_passing_margin": required,
        "violations": violations[:20],
        "violation_count": len(violations),
    }


# -- minimum zipping length ---------------------------------------------------


@dataclass
class ZipLengthResult:
    status: str              # closed | exhausted | impossible
    folds: int | None
    explored: int


def _pair_images_equal(f: CellMap, x, y) -> bool:
    kx, ix = x
    ky, iy = y
    if kx != ky:
        return False
    if kx == "cell":
        return f.image_of_cell(ix) == f.image_of_cell(iy)
    return f.image_of_slot(ix) == f.image_of_slot(iy)



def min_zipping_length(f: CellMap, pair, budget: int = 10_000,
                       cone_radius: int = 3) -> ZipLengthResult:
    """Minimum folds closing the pair, by iterative deepening with undo.

    States are identified with the set of folds applied (order is
    irrelevant in a monotone system).  Candidate folds are generated inside
    a ball around the pair whose radius grows with the depth limit: a chain
    of k folds that closes the pair cannot wander farther than k+2 steps
    from it, so no minimal sequence is lost.
    """
    x, y = pair
    if x == y:
        raise ValueError("pair must be two distinct cells")
    if not _pair_images_equal(f, x, y):
        raise ValueError("pair is not in phi(f): images differ")

    a, m = f.assembly, f.assembly.m
    nc, ns = a.ncells, a.nslots
    owner = [0] * ns
    side = [0] * ns
    for c in range(nc):
        base = a.slot_base[c]
        for k, sd in enumerate(m.handles[a.cell_handle[c]].sides):
            owner[base + k] = c
            side[base + k] = sd
    slot_of = {}
    for h in m.handles:
        for k, sd in enumerate(h.sides):
            slot_of[sd] = k
    corners: list[list[tuple[int, int, int, int, int]]] = [[] for _ in m.handles]
    for arc in m.arcs:
        sh = arc.sheets
        for i in range(3):
            h, a_side, b_side = sh[i]
            prev_a = sh[(i - 1) % 3][1]
            next_b = sh[(i + 1) % 3][2]
            corners[h].append(
                (slot_of[a_side], slot_of[b_side], slot_of[prev_a], slot_of[next_b], arc.id)
            )

    cuf = list(range(nc))
    suf = list(range(ns))
    extra_adj: dict[int, list[int]] = {}
    journal: list[tuple] = []

    def find(uf, i):
        while uf[i] != i:
            i = uf[i]
        return i

    def union(uf, i, j) -> bool:
        ri, rj = find(uf, i), find(uf, j)
        if ri == rj:
            return False
        if rj < ri:
            ri, rj = rj, ri
        journal.append(("u", uf, rj, uf[rj]))
        uf[rj] = ri
        return True

    def link(c1, c2):
        journal.append(("a", c1, c2))
        extra_adj.setdefault(c1, []).append(c2)
        extra_adj.setdefault(c2, []).append(c1)

    def rollback(mark):
        while len(journal) > mark:
            entry = journal.pop()
            if entry[0] == "u":
                _, uf, i, old = entry
                uf[i] = old
            else:
                _, c1, c2 = entry
                extra_adj[c1].pop()
                extra_adj[c2].pop()

    for s in range(ns):
        p = a.ptr[s]
        if p > s:
            union(suf, s, p)

    def closed() -> bool:
        if x[0] == "cell":
            return find(cuf, x[1]) == find(cuf, y[1])
        return find(suf, x[1]) == find(suf, y[1])

    def apply_fold(move) -> int:
        mark = len(journal)
        if move[0] == "g":
            union(suf, move[1], move[2])
            link(owner[move[1]], owner[move[2]])
        else:
            ca, cb = find(cuf, move[1]), find(cuf, move[2])
            union(cuf, ca, cb)
            link(move[1], move[2])
            deg = a.slot_base[ca + 1] - a.slot_base[ca]
            for k in range(deg):
                union(suf, a.sid(ca, k), a.sid(cb, k))
        return mark

    seeds0 = [x[1], y[1]] if x[0] == "cell" else [owner[x[1]], owner[y[1]]]

    def cone_cells(radius: int) -> list[int]:
        seen = set(seeds0)
        frontier = list(seen)
        for _ in range(radius):
            nxt = []
            for c in frontier:
                base = a.slot_base[c]
                for k in range(a.slot_base[c + 1] - base):
                    p = a.ptr[base + k]
                    if p != -1:
                        d = owner[p]
                        if d not in seen:
                            seen.add(d)
                            nxt.append(d)
                for d in extra_adj.get(c, ()):
                    if d not in seen:
                        seen.add(d)
                        nxt.append(d)
            if not nxt:
                break
            frontier = nxt
        return sorted(seen)

    def candidate_moves(radius: int) -> list[tuple]:
        cells = cone_cells(radius)
        moves: list[tuple] = []
        seen: set = set()
        # face occupancy over the cone
        occ_map: dict[int, dict[int, list[int]]] = {}
        for c in cells:
            base = a.slot_base[c]
            for k in range(a.slot_base[c + 1] - base):
                s = base + k
                occ_map.setdefault(find(suf, s), {}).setdefault(side[s], []).append(c)
        for r, sides_map in occ_map.items():
            for sd, occ in sides_map.items():
                classes = sorted({find(cuf, c) for c in occ})
                if len(classes) > 1:
                    key = ("m", classes[0], classes[1])
                    if key not in seen:
                        seen.add(key)
                        moves.append(key)

        def occupant_across(c, slot):
            s = a.sid(c, slot)
            r = find(suf, s)
            want = m.sides[side[s]].partner
            for c2 in occ_map.get(r, {}).get(want, ()):
                return find(cuf, c2)
            return -1

        # corner closures
        for c in cells:
            for slot_a, slot_b, prev_out, next_out, arc_id in corners[a.cell_handle[c]]:
                p = occupant_across(c, slot_a)
                if p < 0:
                    continue
                n = occupant_across(c, slot_b)
                if n < 0:
                    continue
                sa, sb = a.sid(p, prev_out), a.sid(n, next_out)
                if find(suf, sa) != find(suf, sb):
                    key = ("g", min(sa, sb), max(sa, sb))
                    if key not in seen:
                        seen.add(key)
                        moves.append(key)
        # book folds: same sheet covered twice around an arc copy
        by_handle: dict[int, list[int]] = {}
        for c in cells:
            by_handle.setdefault(a.cell_handle[c], []).append(c)
        for arc in m.arcs:
            sh = arc.sheets
            adj: dict[int, list[int]] = {}
            inc = []
            touched = False
            for i in range(3):
                h, a_side, b_side = sh[i]
                for c in by_handle.get(h, ()):
                    touched = True
                    ka = find(suf, a.sid(c, slot_of[a_side]))
                    kb = find(suf, a.sid(c, slot_of[b_side]))
                    adj.setdefault(ka, []).append(kb)
                    adj.setdefault(kb, []).append(ka)
                    inc.append((ka, c, i))
            if not touched:
                continue
            comp: dict[int, int] = {}
            order = 0
            for start in adj:
                if start in comp:
                    continue
                stack = [start]
                comp[start] = order
                while stack:
                    kk = stack.pop()
                    for k2 in adj[kk]:
                        if k2 not in comp:
                            comp[k2] = order
                            stack.append(k2)
                order += 1
            sheet_seen: dict[tuple[int, int], int] = {}
            for ka, c, i in inc:
                tag = (comp[ka], i)
                rc = find(cuf, c)
                prev = sheet_seen.get(tag)
                if prev is None:
                    sheet_seen[tag] = rc
                elif prev != rc:
                    key = ("m", min(prev, rc), max(prev, rc))
                    if key not in seen:
                        seen.add(key)
                        moves.append(key)
        return moves

    explored = 0
    cutoff = False

    def canon_move(mv):
        if mv[0] == "m":
            return ("m", find(cuf, mv[1]), find(cuf, mv[2]))
        return ("g", find(suf, mv[1]), find(suf, mv[2]))

    def dfs(limit: int, radius: int, chosen: frozenset, memo: set) -> bool:
        nonlocal explored, cutoff
        if closed():
            return True
        if limit == 0:
            cutoff = True
            return False
        explored += 1
        if explored > budget:
            cutoff = True
            return False
        for mv in candidate_moves(radius):
            key = frozenset(chosen | {canon_move(mv)})
            if key in memo:
                continue
            memo.add(key)
            mark = apply_fold(mv)
            ok = dfs(limit - 1, radius, key, memo)
            rollback(mark)
            if ok:
                return True
        return False

    if closed():
        return ZipLengthResult("closed", 0, 0)
    limit = 1
    while explored <= budget:
        cutoff = False
        memo: set = set()
        radius = max(cone_radius, limit + 2)
        if dfs(limit, radius, frozenset(), memo):
            return ZipLengthResult("closed", limit, explored)
        if explored > budget:
            return ZipLengthResult("exhausted", None, explored)
        if not cutoff:
            return ZipLengthResult("impossible", None, explored)
        limit += 1
    return ZipLengthResult("exhausted", None, explored)
