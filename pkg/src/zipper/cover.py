"""Independent ground truth: coset enumeration and Cayley cover balls.

Nothing here touches the tree or zipping machinery; covers are built from
coset tables (finite groups) or closed-form normal forms (free, free
abelian, genus-2 surface via Dehn's algorithm), so that Lemma-style cover
reconstruction claims can be checked against a second route.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .handlebody import SingularHandlebody, build_handle_complex
from .presentation import Presentation, free_reduce, invert_word

LETTERS = 2  # columns per generator: +g then -g


class EnumerationLimitError(RuntimeError):
    """Coset or step limit exceeded; reported, never silent."""


class UnsupportedPresentationError(RuntimeError):
    """No closed-form normal form and coset enumeration did not finish."""


def _col(x: int) -> int:
    return 2 * (abs(x) - 1) + (0 if x > 0 else 1)


def _inv_col(col: int) -> int:
    return col ^ 1


@dataclass
class CosetTable:
    """Complete coset table of the trivial subgroup: one row per element."""

    presentation: Presentation
    table: list[list[int]]
    complete: bool

    @property
    def ncosets(self) -> int:
        return len(self.table)

    def act_letter(self, coset: int, x: int) -> int:
        return self.table[coset][_col(x)]

    def act_word(self, coset: int, w) -> int:
        for x in w:
            coset = self.table[coset][_col(x)]
        return coset

    def rep_words(self) -> list[tuple[int, ...]]:
        """Shortlex representative word per coset, by BFS from coset 0."""
        n = len(self.table)
        words: list[tuple[int, ...] | None] = [None] * n
        words[0] = ()
        q = deque([0])
        letters = [g + 1 for g in range(self.presentation.rank)]
        letters += [-(g + 1) for g in range(self.presentation.rank)]
        while q:
            c = q.popleft()
            for x in letters:
                d = self.act_letter(c, x)
                if words[d] is None:
                    words[d] = words[c] + (x,)
                    q.append(d)
        return [w if w is not None else () for w in words]

    def to_csv(self) -> str:
        header = ["coset"]
        for g in self.presentation.generators:
            header += [g, g.upper()]
        lines = [",".join(header)]
        for i, row in enumerate(self.table):
            lines.append(",".join([str(i)] + [str(v) for v in row]))
        return "\n".join(lines)


def todd_coxeter(p: Presentation, max_cosets: int = 20000, max_steps: int = 2_000_000) -> CosetTable:
    """HLT-style enumeration of the cosets of the trivial subgroup.

    Returns a complete table iff the group is finite and fits in the limits;
    otherwise raises EnumerationLimitError.  No heuristics: definitions are
    made in scan order, coincidences processed eagerly.
    """
    ncols = LETTERS * p.rank
    table: list[list[int | None]] = [[None] * ncols]
    rep = [0]          # union-find over cosets for coincidences
    steps = 0

    def find(a: int) -> int:
        while rep[a] != a:
            rep[a] = rep[rep[a]]
            a = rep[a]
        return a

    def define(a: int, col: int) -> int:
        nonlocal steps
        if len(table) >= max_cosets:
            raise EnumerationLimitError(f"coset limit {max_cosets} exceeded")
        b = len(table)
        table.append([None] * ncols)
        rep.append(b)
        table[a][col] = b
        table[b][_inv_col(col)] = a
        steps += 1
        return b

    pending: deque[tuple[int, int]] = deque()

    def set_entry(a: int, col: int, b: int):
        ea = table[a][col]
        if ea is None:
            table[a][col] = b
            eb = table[b][_inv_col(col)]
            if eb is None:
                table[b][_inv_col(col)] = a
            elif find(eb) != find(a):
                pending.append((eb, a))
        elif find(ea) != find(b):
            pending.append((ea, b))

    def process_coincidences():
        while pending:
            a, b = pending.popleft()
            a, b = find(a), find(b)
            if a == b:
                continue
            if b < a:
                a, b = b, a
            rep[b] = a
            for col in range(ncols):
                eb = table[b][col]
                if eb is None:
                    continue
                eb = find(eb)
                if table[eb][_inv_col(col)] is not None and find(table[eb][_inv_col(col)]) == b:
                    table[eb][_inv_col(col)] = a
                set_entry(a, col, eb)

    def scan(a: int, w):
        nonlocal steps
        steps += 1
        if steps > max_steps:
            raise EnumerationLimitError(f"step limit {max_steps} exceeded")
        cols = [_col(x) for x in w]
        f, fi = a, 0
        while fi < len(cols):
            nxt = table[f][cols[fi]]
            if nxt is None:
                break
            f, fi = find(nxt), fi + 1
        if fi == len(cols):
            if find(f) != find(a):
                pending.append((f, a))
                process_coincidences()
            return
        b, bi = a, len(cols)
        while bi > fi:
            prv = table[b][_inv_col(cols[bi - 1])]
            if prv is None:
                break
            b, bi = find(prv), bi - 1
        if bi == fi:
            set_entry(f, cols[fi], b)
            process_coincidences()
            return
        if bi == fi + 1:
            set_entry(f, cols[fi], b)
            process_coincidences()
            return
        # define one new coset at the forward gap and keep scanning
        define(f, cols[fi])
        scan(find(a), w)

    cursor = 0
    while cursor < len(table):
        if find(cursor) != cursor:
            cursor += 1
            continue
        for w in p.relators:
            if find(cursor) == cursor:
                scan(cursor, w)
        if find(cursor) == cursor:
            for col in range(ncols):
                if find(cursor) != cursor:
                    break
                if table[cursor][col] is None:
                    define(cursor, col)
                    process_coincidences()
        cursor += 1

    live = sorted({find(i) for i in range(len(table))})
    remap = {old: new for new, old in enumerate(live)}
    compact = [[remap[find(table[old][col])] for col in range(ncols)] for old in live]
    return CosetTable(p, compact, complete=True)


# -- element models ----------------------------------------------------------


class ElementRegistry:
    """Int ids for group elements under a pluggable normal form."""

    def __init__(self, kind: str, presentation: Presentation, table: CosetTable | None = None):
        self.kind = kind
        self.p = presentation
        self.table = table
        self.words: list = []
        self._index: dict = {}
        if kind == "finite":
            self.size = table.ncosets
        else:
            self.size = None
        self.id0 = self._register(self._identity())

    def _identity(self):
        if self.kind == "finite":
            return 0
        if self.kind == "abelian":
            return (0,) * self.p.rank
        return ()

    def _register(self, value) -> int:
        if self.kind == "surface":
            for i, w in enumerate(self.words):
                if _dehn_trivial(free_reduce(w + invert_word(value)), self.p.relators[0]):
                    return i
        else:
            if value in self._index:
                return self._index[value]
        self.words.append(value)
        if self.kind != "surface":
            self._index[value] = len(self.words) - 1
        return len(self.words) - 1

    def mul_letter(self, eid: int, x: int) -> int:
        v = self.words[eid]
        if self.kind == "finite":
            return self._register(self.table.act_letter(v, x))
        if self.kind == "abelian":
            vec = list(v)
            vec[abs(x) - 1] += 1 if x > 0 else -1
            return self._register(tuple(vec))
        if self.kind == "free":
            return self._register(free_reduce(v + (x,)))
        return self._register(_dehn_reduce(free_reduce(v + (x,)), self.p.relators[0]))

    def mul_word(self, eid: int, w) -> int:
        for x in w:
            eid = self.mul_letter(eid, x)
        return eid

    def label(self, eid: int) -> str:
        v = self.words[eid]
        if self.kind == "finite":
            return str(v)
        if self.kind == "abelian":
            return "(" + ",".join(str(c) for c in v) + ")"
        return self.p.word_str(v) or "e"


def _dehn_reduce(w, relator):
    """Dehn-reduce against the relator (valid for C'(1/8) presentations)."""
    L = len(relator)
    variants = []
    for base in (relator, invert_word(relator)):
        for k in range(L):
            variants.append(base[k:] + base[:k])
    half = L // 2
    w = free_reduce(w)
    changed = True
    while changed:
        changed = False
        for sub_len in range(L, half, -1):
            for start in range(len(w) - sub_len + 1):
                piece = w[start : start + sub_len]
                for v in variants:
                    if piece == v[:sub_len]:
                        # replace by the inverse of the complementary piece
                        repl = invert_word(v[sub_len:])
                        w = free_reduce(w[:start] + repl + w[start + sub_len :])
                        changed = True
                        break
                if changed:
                    break
            if changed:
                break
    return w


def _dehn_trivial(w, relator) -> bool:
    return len(_dehn_reduce(w, relator)) == 0


def _is_free_abelian(p: Presentation) -> bool:
    need = {frozenset((i + 1, j + 1)) for i in range(p.rank) for j in range(i + 1, p.rank)}
    got = set()
    for w in p.relators:
        if len(w) != 4:
            return False
        a, b = w[0], w[1]
        if w != (a, b, -a, -b) or abs(a) == abs(b):
            return False
        got.add(frozenset((abs(a), abs(b))))
    return p.rank >= 2 and got == need


def _is_surface2(p: Presentation) -> bool:
    if p.rank != 4 or len(p.relators) != 1:
        return False
    return p.relators[0] == (1, 2, -1, -2, 3, 4, -3, -4)


# -- cover complexes ---------------------------------------------------------


class CoverComplex:
    """Chambers (element, handle) of the cover tessellation, with adjacency.

    radius None means the full cover (finite groups only); otherwise the
    word-metric ball: vertex chambers at distance <= r, edge and 2-handle
    chambers with every boundary vertex inside the ball.
    """

    def __init__(self, m: SingularHandlebody, registry: ElementRegistry, radius: int | None):
        self.m = m
        self.registry = registry
        self.radius = radius
        self.coset_table = registry.table
        p = m.presentation
        self._prefix: dict[tuple[int, int], tuple[int, ...]] = {}
        for r, w in enumerate(p.relators):
            for i in range(len(w) + 1):
                self._prefix[(r, i)] = tuple(w[:i])
        self._disp = self._displacements()
        self.dist = self._element_ball()
        self.chambers: list[tuple[int, int]] = []
        self.chamber_index: dict[tuple[int, int], int] = {}
        for eid in sorted(self.dist):
            for h in m.handles:
                if self._chamber_fits(eid, h.id):
                    self.chamber_index[(eid, h.id)] = len(self.chambers)
                    self.chambers.append((eid, h.id))
        self.base_chamber = self.chamber_index[(registry.id0, m.base)]

    # displacement word + target handle, per side
    def _displacements(self):
        m, p = self.m, self.m.presentation
        disp = {}
        h1 = {g + 1: 1 + g for g in range(p.rank)}
        h2 = {r: 1 + p.rank + r for r in range(len(p.relators))}
        for s in m.sides:
            if s.kind == "disc":
                if s.handle == m.base:
                    disp[s.id] = (h1[s.gen], () if s.role == "tail" else (-s.gen,))
                else:
                    disp[s.id] = (m.base, () if s.role == "tail" else (s.gen,))
            elif s.role == "passage":
                if s.handle == m.base:
                    disp[s.id] = (h2[s.relator], invert_word(self._prefix[(s.relator, s.pos + 1)]))
                else:
                    disp[s.id] = (m.base, self._prefix[(s.relator, s.pos + 1)])
            else:  # letter rectangle
                w = p.relators[s.relator]
                x = w[s.pos]
                k = s.pos if x > 0 else s.pos + 1
                if s.handle == h2[s.relator]:
                    disp[s.id] = (h1[abs(x)], self._prefix[(s.relator, k)])
                else:
                    disp[s.id] = (h2[s.relator], invert_word(self._prefix[(s.relator, k)]))
        return disp

    def _element_ball(self) -> dict[int, int]:
        reg, p = self.registry, self.m.presentation
        letters = [g + 1 for g in range(p.rank)] + [-(g + 1) for g in range(p.rank)]
        dist = {reg.id0: 0}
        q = deque([reg.id0])
        while q:
            e = q.popleft()
            if self.radius is not None and dist[e] >= self.radius:
                continue
            for x in letters:
                e2 = reg.mul_letter(e, x)
                if e2 not in dist:
                    dist[e2] = dist[e] + 1
                    q.append(e2)
        return dist

    def _in_ball(self, eid: int) -> bool:
        return eid in self.dist and (self.radius is None or self.dist[eid] <= self.radius)

    def _chamber_fits(self, eid: int, handle: int) -> bool:
        m, p, reg = self.m, self.m.presentation, self.registry
        if not self._in_ball(eid):
            return False
        if handle == m.base:
            return True
        idx = m.handles[handle].index
        if idx == 1:
            # 1-handle ids coincide with 1-based generator numbers
            return self._in_ball(reg.mul_letter(eid, handle))
        r = handle - 1 - p.rank
        return all(
            self._in_ball(reg.mul_word(eid, self._prefix[(r, k)]))
            for k in range(1, len(p.relators[r]) + 1)
        )

    @property
    def nchambers(self) -> int:
        return len(self.chambers)

    def chamber_handle(self, cid: int) -> int:
        return self.chambers[cid][1]

    def chamber_label(self, cid: int) -> str:
        eid, h = self.chambers[cid]
        return f"{self.registry.label(eid)}*{self.m.handles[h].label}"

    def neighbor(self, cid: int, side: int) -> int | None:
        eid, h = self.chambers[cid]
        if self.m.sides[side].handle != h:
            raise ValueError(f"side {side} is not on handle {h}")
        target_h, word = self._disp[side]
        e2 = self.registry.mul_word(eid, word)
        return self.chamber_index.get((e2, target_h))

    def deck_permutation(self, gamma_word) -> list[int]:
        """Left multiplication by the element of gamma_word, full covers only."""
        if self.radius is not None:
            raise ValueError("deck permutations need the full cover")
        reg = self.registry
        gamma = reg.mul_word(reg.id0, gamma_word)
        reps = self.coset_table.rep_words()
        out = []
        for eid, h in self.chambers:
            ge = reg.mul_word(gamma, reps[self.registry.words[eid]])
            out.append(self.chamber_index[(ge, h)])
        return out

    def one_skeleton(self):
        """Vertex and edge chambers as a directed labelled multigraph."""
        from .graphs import LabeledGraph

        m = self.m
        g = LabeledGraph()
        for cid, (eid, h) in enumerate(self.chambers):
            if m.handles[h].index == 0:
                g.add_node(cid, m.handles[h].label)
        for cid, (eid, h) in enumerate(self.chambers):
            if m.handles[h].index != 1:
                continue
            tail_side, head_side = m.handles[h].sides[0], m.handles[h].sides[1]
            t, u = self.neighbor(cid, tail_side), self.neighbor(cid, head_side)
            if t is not None and u is not None:
                g.add_edge(t, u, m.handles[h].label)
        return g

    def to_json(self) -> dict:
        return {
            "radius": self.radius,
            "chambers": [
                {"id": i, "element": self.registry.label(e), "handle": h}
                for i, (e, h) in enumerate(self.chambers)
            ],
        }

    def to_dot(self) -> str:
        g = self.one_skeleton()
        return g.to_dot("cover_ball")


def cayley_ball(p: Presentation, radius: int | None,
                max_cosets: int = 20000) -> CoverComplex:
    """Oracle cover ball for a catalog family.

    Free and free abelian groups use integer normal forms, the genus-2
    surface group uses Dehn's algorithm; everything else must enumerate to a
    finite group or UnsupportedPresentationError is raised.
    """
    m = build_handle_complex(p)
    if not p.relators:
        reg = ElementRegistry("free", p)
    elif _is_free_abelian(p):
        reg = ElementRegistry("abelian", p)
    elif _is_surface2(p):
        reg = ElementRegistry("surface", p)
    else:
        try:
            table = todd_coxeter(p, max_cosets=max_cosets)
        except EnumerationLimitError as e:
            raise UnsupportedPresentationError(
                f"no normal form for {p.name or p.generators} and enumeration failed: {e}"
            )
        reg = ElementRegistry("finite", p, table)
    if radius is None and reg.size is None:
        raise UnsupportedPresentationError("full cover of an infinite group")
    return CoverComplex(m, reg, radius)


def deck_action_check(cover: CoverComplex, action: dict | None = None) -> dict:
    """Verify the deck action: free, label preserving, projection equivariant.

    action maps generator words to chamber permutations; by default it is
    built from the coset table.  Corrupted tables are diagnosed, not fixed.
    """
    p = cover.m.presentation
    if cover.radius is not None:
        return {"status": "skip", "reason": "partial ball has no global action"}
    table = cover.coset_table
    reps = table.rep_words()
    if action is None:
        action = {w: cover.deck_permutation(w) for w in reps if w}
    violations = []
    nontrivial = 0
    for w, perm in action.items():
        if sorted(perm) != list(range(cover.nchambers)):
            violations.append({"kind": "not_a_permutation", "gamma": list(w)})
            continue
        nontrivial += 1
        for cid, img in enumerate(perm):
            if cover.chamber_handle(img) != cover.chamber_handle(cid):
                violations.append(
                    {"kind": "projection_broken", "gamma": list(w), "chamber": cid}
                )
                break
            if img == cid:
                violations.append({"kind": "fixed_chamber", "gamma": list(w), "chamber": cid})
                break
        else:
            for cid in range(cover.nchambers):
                for side in cover.m.handles[cover.chamber_handle(cid)].sides:
                    lhs = cover.neighbor(perm[cid], side)
                    rhs = perm[cover.neighbor(cid, side)]
                    if lhs != rhs:
                        violations.append(
                            {"kind": "not_equivariant", "gamma": list(w), "chamber": cid}
                        )
                        break
                else:
                    continue
                break
    expected = table.ncosets * len(cover.m.handles)
    if cover.nchambers != expected:
        violations.append(
            {"kind": "chamber_count", "got": cover.nchambers, "want": expected}
        )
    return {
        "status": "pass" if not violations else "fail",
        "group_order": table.ncosets,
        "chambers": cover.nchambers,
        "nontrivial_elements_checked": nontrivial,
        "violations": violations,
    }


CATALOG_SCHEDULE = {
    # entry: (depth, radius or None for the full cover, interior margin)
    "Z": (6, 3, 0),
    "Zn(2)": (6, None, 2),
    "Zn(3)": (6, None, 2),
    "Zn(4)": (6, None, 2),
    "Zn(5)": (6, None, 2),
    "S3": (6, None, 2),
    "F2": (4, 2, 0),
    "Z2": (4, 2, 0),
    "surface2": (3, 1, 1),
}
