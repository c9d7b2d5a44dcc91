"""The compact singular handle complex of a presentation.

One 0-handle (the rose), one 1-handle per generator, one 2-handle per
relator.  Faces are stored as *sides*: each geometric face contributes two
side records, one per incident handle, paired by the fixed-point-free
involution j.  A relator of cyclic length L contributes L "letter"
rectangles (through 1-handles) and L "passage" rectangles (over the
0-handle); passages are the chords of the crossing diagram whose
interleavings are the immortal-singularity squares.

Triple arcs record where a disc, a letter rectangle and a passage rectangle
meet; every mortal singularity of an exploration tree lives over one of
them.
"""

from __future__ import annotations

from dataclasses import dataclass

from .presentation import Presentation

DISC = "disc"
RECT = "rect"


@dataclass(frozen=True)
class Side:
    """One side of a geometric face, owned by a single handle."""

    id: int
    kind: str                 # disc | rect
    handle: int
    partner: int              # j(side)
    slot: int                 # position in the owner's face list
    role: str                 # tail/head disc, letter/passage rectangle
    gen: int = 0              # 1-based generator for discs and letter rects
    relator: int = -1         # relator index for rectangles
    pos: int = -1             # letter position for rectangles


@dataclass(frozen=True)
class Handle:
    id: int
    index: int                # lambda <= 2; no 3-handles
    label: str
    sides: tuple[int, ...]    # ordered boundary face list F(h)


@dataclass(frozen=True)
class Arc:
    """A triple arc h0 ∩ h1 ∩ h2 with its cyclic 3-page book.

    sheets[i] = (handle, a_side, b_side); j(b_i) = a_{i+1} cyclically.
    """

    id: int
    relator: int
    pos: int
    role: str                 # entry | exit
    sheets: tuple[tuple[int, int, int], ...]


@dataclass(frozen=True)
class ImmortalSquare:
    """Transversal crossing of two passage rectangles on a 0-handle."""

    id: int
    host: int
    chords: tuple[int, int]   # the two passage sides (on the 0-handle)
    self_crossing: bool


class SingularHandlebody:
    """M^3 of a presentation: handles, face involution, squares, arcs."""

    def __init__(self, presentation: Presentation, handles, sides, arcs, squares, base=0):
        self.presentation = presentation
        self.handles: list[Handle] = handles
        self.sides: list[Side] = sides
        self.arcs: list[Arc] = arcs
        self.squares: list[ImmortalSquare] = squares
        self.base = base
        # (handle -> [(arc id, sheet index)]) and (side -> same), for corner scans
        self.handle_corners: list[list[tuple[int, int]]] = [[] for _ in handles]
        self.side_corners: list[list[tuple[int, int]]] = [[] for _ in sides]
        for arc in arcs:
            for i, (h, a, b) in enumerate(arc.sheets):
                self.handle_corners[h].append((arc.id, i))
                self.side_corners[a].append((arc.id, i))
                self.side_corners[b].append((arc.id, i))

    # -- basic accessors ---------------------------------------------------

    def degree(self, handle: int) -> int:
        return len(self.handles[handle].sides)

    def j(self, side: int) -> int:
        return self.sides[side].partner

    def side_owner(self, side: int) -> int:
        return self.sides[side].handle

    def face_id(self, side: int) -> int:
        """Canonical id of the geometric face {x, jx}."""
        return min(side, self.sides[side].partner)

    def geometric_faces(self):
        return sorted({self.face_id(s.id) for s in self.sides})

    def handle_census(self) -> dict[int, int]:
        census = {0: 0, 1: 0, 2: 0}
        for h in self.handles:
            census[h.index] += 1
        return census

    # -- exports -----------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "handles": [
                {"id": h.id, "index": h.index, "label": h.label, "faces": list(h.sides)}
                for h in self.handles
            ],
            "faces": [
                {
                    "id": s.id,
                    "kind": s.kind,
                    "handle": s.handle,
                    "role": s.role,
                    "relator": s.relator,
                    "pos": s.pos,
                }
                for s in self.sides
            ],
            "involution": [s.partner for s in self.sides],
            "squares": [
                {
                    "id": q.id,
                    "host": q.host,
                    "chords": list(q.chords),
                    "self_crossing": q.self_crossing,
                }
                for q in self.squares
            ],
            "base": self.base,
        }

    def face_pairing_dot(self) -> str:
        """DOT graph: handles as nodes, geometric faces as labelled edges."""
        lines = ["graph face_pairing {"]
        for h in self.handles:
            lines.append(f'  h{h.id} [label="{h.label} (idx {h.index})"];')
        for f in self.geometric_faces():
            s = self.sides[f]
            lines.append(
                f'  h{s.handle} -- h{self.sides[s.partner].handle} [label="{s.kind}:{f}"];'
            )
        lines.append("}")
        return "\n".join(lines)


def build_handle_complex(p: Presentation) -> SingularHandlebody:
    """Assemble M^3 for a normalized presentation (single 0-handle form)."""
    for w in p.relators:
        if not w:
            raise ValueError("relator of length 0")

    n_gens = p.rank
    handles_sides: dict[int, list[int]] = {}
    sides: list[Side] = []

    def new_side(kind, handle, role, gen=0, relator=-1, pos=-1):
        s = Side(len(sides), kind, handle, -1, -1, role, gen, relator, pos)
        sides.append(s)
        handles_sides.setdefault(handle, []).append(s.id)
        return s.id

    def pair(a: int, b: int):
        sa, sb = sides[a], sides[b]
        if sa.handle == sb.handle:
            raise ValueError("a face may not join a handle to itself")
        sides[a] = Side(sa.id, sa.kind, sa.handle, b, -1, sa.role, sa.gen, sa.relator, sa.pos)
        sides[b] = Side(sb.id, sb.kind, sb.handle, a, -1, sb.role, sb.gen, sb.relator, sb.pos)

    H0 = 0
    h1 = {g: 1 + g for g in range(n_gens)}             # g is 0-based here
    h2 = {r: 1 + n_gens + r for r in range(len(p.relators))}

    # Attaching discs of the 1-handles (tail and head per generator), both
    # on the single 0-handle.  1-handle side order: [tail, head, letter rects].
    tail0, tail1, head0, head1 = {}, {}, {}, {}
    for g in range(n_gens):
        tail1[g] = new_side(DISC, h1[g], "tail", gen=g + 1)
        head1[g] = new_side(DISC, h1[g], "head", gen=g + 1)
    for g in range(n_gens):
        tail0[g] = new_side(DISC, H0, "tail", gen=g + 1)
        head0[g] = new_side(DISC, H0, "head", gen=g + 1)
        pair(tail0[g], tail1[g])
        pair(head0[g], head1[g])

    # Relator rectangles: the 2-handle boundary is the cyclic sequence
    # [letter 0, passage 0, letter 1, passage 1, ...].
    rect1: dict[tuple[int, int], int] = {}
    rect2: dict[tuple[int, int], int] = {}
    pass0: dict[tuple[int, int], int] = {}
    pass2: dict[tuple[int, int], int] = {}
    for r, w in enumerate(p.relators):
        for i, x in enumerate(w):
            g = abs(x) - 1
            rect2[(r, i)] = new_side(RECT, h2[r], "letter", gen=abs(x), relator=r, pos=i)
            pass2[(r, i)] = new_side(RECT, h2[r], "passage", relator=r, pos=i)
        for i, x in enumerate(w):
            g = abs(x) - 1
            rect1[(r, i)] = new_side(RECT, h1[g], "letter", gen=abs(x), relator=r, pos=i)
            pass0[(r, i)] = new_side(RECT, H0, "passage", relator=r, pos=i)
            pair(rect1[(r, i)], rect2[(r, i)])
            pair(pass0[(r, i)], pass2[(r, i)])

    # Freeze slot numbers from the per-handle side order.
    handle_objs: list[Handle] = []
    labels = {H0: "h0"}
    indexes = {H0: 0}
    for g in range(n_gens):
        labels[h1[g]] = p.generators[g]
        indexes[h1[g]] = 1
    for r in range(len(p.relators)):
        labels[h2[r]] = "rel" + str(r)
        indexes[h2[r]] = 2
    for hid in range(1 + n_gens + len(p.relators)):
        side_list = tuple(handles_sides.get(hid, []))
        for slot, sid in enumerate(side_list):
            s = sides[sid]
            sides[sid] = Side(s.id, s.kind, s.handle, s.partner, slot, s.role, s.gen, s.relator, s.pos)
        handle_objs.append(Handle(hid, indexes[hid], labels[hid], side_list))

    # Triple arcs: where the relator curve crosses a disc boundary.  Entry of
    # letter i couples the preceding passage with the entry disc; exit couples
    # the letter rectangle with the following passage.
    arcs: list[Arc] = []
    for r, w in enumerate(p.relators):
        L = len(w)
        for i, x in enumerate(w):
            g = abs(x) - 1
            ent0, ent1 = (tail0[g], tail1[g]) if x > 0 else (head0[g], head1[g])
            ext0, ext1 = (head0[g], head1[g]) if x > 0 else (tail0[g], tail1[g])
            prev = (i - 1) % L
            arcs.append(
                Arc(
                    len(arcs), r, i, "entry",
                    (
                        (H0, pass0[(r, prev)], ent0),
                        (h1[g], ent1, rect1[(r, i)]),
                        (h2[r], rect2[(r, i)], pass2[(r, prev)]),
                    ),
                )
            )
            arcs.append(
                Arc(
                    len(arcs), r, i, "exit",
                    (
                        (H0, pass0[(r, i)], ext0),
                        (h1[g], ext1, rect1[(r, i)]),
                        (h2[r], rect2[(r, i)], pass2[(r, i)]),
                    ),
                )
            )

    squares = _crossing_squares(p, sides, pass0)
    return SingularHandlebody(p, handle_objs, sides, arcs, squares, base=H0)


def chord_endpoints(p: Presentation) -> dict[tuple[int, int], tuple[tuple, tuple]]:
    """Deterministic chord diagram of the passages over the 0-handle.

    Ports sit on a fixed circle in generator order (tail then head); strand
    endpoints inside a port are ordered by (relator, position, end flag).
    Passage (r, i) runs from the exit port of letter i to the entry port of
    letter i+1.
    """
    out = {}
    for r, w in enumerate(p.relators):
        L = len(w)
        for i, x in enumerate(w):
            nxt = w[(i + 1) % L]
            exit_port = 2 * (abs(x) - 1) + (1 if x > 0 else 0)
            entry_port = 2 * (abs(nxt) - 1) + (0 if nxt > 0 else 1)
            out[(r, i)] = ((exit_port, r, i, 0), (entry_port, r, i, 1))
    return out


def chords_cross(e1: tuple[tuple, tuple], e2: tuple[tuple, tuple]) -> bool:
    """Two chords cross iff their endpoints interleave on the circle."""
    a, b = sorted(e1)
    inside = sum(1 for pt in e2 if a < pt < b)
    return inside == 1


def _crossing_squares(p, sides, pass0) -> list[ImmortalSquare]:
    ends = chord_endpoints(p)
    keys = sorted(ends)
    squares = []
    for ia, ka in enumerate(keys):
        for kb in keys[ia + 1 :]:
            if chords_cross(ends[ka], ends[kb]):
                squares.append(
                    ImmortalSquare(
                        len(squares),
                        0,
                        (pass0[ka], pass0[kb]),
                        self_crossing=(ka[0] == kb[0]),
                    )
                )
    return squares


def validate(m: SingularHandlebody) -> list[str]:
    """Diagnostic report: one line per violated invariant, empty iff valid."""
    report = []
    for s in m.sides:
        if s.partner == s.id:
            report.append(f"involution fixes face side {s.id}")
            continue
        if not (0 <= s.partner < len(m.sides)):
            report.append(f"face side {s.id} pairs out of range")
            continue
        if m.sides[s.partner].partner != s.id:
            report.append(f"involution not involutive at side {s.id}")
        if m.sides[s.partner].handle == s.handle:
            report.append(f"face side {s.id} glues handle {s.handle} to itself")
    if len(m.sides) % 2 != 0:
        report.append("odd number of face sides")
    owners: dict[int, int] = {}
    for h in m.handles:
        if h.index not in (0, 1, 2):
            report.append(f"handle {h.id} has index {h.index} (no 3-handles allowed)")
        if h.index == 1:
            discs = [s for s in h.sides if m.sides[s].kind == DISC]
            if len(discs) != 2:
                report.append(f"1-handle {h.id} has {len(discs)} attaching discs, wants 2")
        if h.index == 2:
            if any(m.sides[s].kind != RECT for s in h.sides):
                report.append(f"2-handle {h.id} attaching zone contains a non-rectangle")
        for s in h.sides:
            owners[s] = owners.get(s, 0) + 1
            if m.sides[s].handle != h.id:
                report.append(f"side {s} listed by handle {h.id} but owned by {m.sides[s].handle}")
    for sid, count in owners.items():
        if count != 1:
            report.append(f"side {sid} appears {count} times in boundary lists")
    for q in m.squares:
        host = m.handles[q.host]
        if host.index != 0:
            report.append(f"immortal square {q.id} hosted on handle of index {host.index}")
        for c in q.chords:
            s = m.sides[c]
            if s.handle != q.host or s.role != "passage":
                report.append(f"square {q.id} chord {c} is not a passage on its host")
    return report
