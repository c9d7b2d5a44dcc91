"""Labelled directed multigraphs and exact isomorphism search.

Used to compare reconstructed cover skeletons against oracle balls; the
backtracking runs over colour classes produced by iterated neighbourhood
refinement, and any bijection found is re-verified edge by edge before it is
returned.
"""

from __future__ import annotations

from collections import Counter, defaultdict


class LabeledGraph:
    def __init__(self):
        self.nodes: dict[object, object] = {}
        self.edges: list[tuple[object, object, object]] = []

    def add_node(self, node, label):
        self.nodes[node] = label

    def add_edge(self, u, v, label):
        if u not in self.nodes or v not in self.nodes:
            raise ValueError("edge endpoints must be nodes")
        self.edges.append((u, v, label))

    @property
    def nnodes(self):
        return len(self.nodes)

    def edge_multiset(self):
        return Counter(self.edges)

    def to_dot(self, name="g"):
        ids = {n: i for i, n in enumerate(sorted(self.nodes, key=repr))}
        lines = [f"digraph {name} {{"]
        for n in sorted(self.nodes, key=repr):
            lines.append(f'  n{ids[n]} [label="{self.nodes[n]}"];')
        for u, v, lab in sorted(self.edges, key=repr):
            lines.append(f'  n{ids[u]} -> n{ids[v]} [label="{lab}"];')
        lines.append("}")
        return "\n".join(lines)


def _colors(g: LabeledGraph, rounds: int = 4):
    color = {n: (g.nodes[n],) for n in g.nodes}
    out_adj = defaultdict(list)
    in_adj = defaultdict(list)
    for u, v, lab in g.edges:
        out_adj[u].append((lab, v))
        in_adj[v].append((lab, u))
    for _ in range(rounds):
        nxt = {}
        for n in g.nodes:
            outs = tuple(sorted((lab, color[v]) for lab, v in out_adj[n]))
            ins = tuple(sorted((lab, color[v]) for lab, v in in_adj[n]))
            nxt[n] = (color[n], outs, ins)
        if len(set(nxt.values())) == len(set(color.values())):
            color = nxt
            break
        color = nxt
    # compress to small ints for speed
    palette = {c: i for i, c in enumerate(sorted(set(color.values()), key=repr))}
    return {n: palette[c] for n, c in color.items()}


def _verify(a: LabeledGraph, b: LabeledGraph, phi: dict) -> bool:
    if len(phi) != a.nnodes or len(set(phi.values())) != a.nnodes:
        return False
    for n, lab in a.nodes.items():
        if b.nodes.get(phi[n]) != lab:
            return False
    mapped = Counter((phi[u], phi[v], lab) for u, v, lab in a.edges)
    return mapped == b.edge_multiset()


def labeled_iso(a: LabeledGraph, b: LabeledGraph) -> dict | None:
    """Label preserving isomorphism a -> b, or None.

    Backtracking over refinement colour classes; the returned bijection has
    been independently verified edge by edge.
    """
    if a.nnodes != b.nnodes or len(a.edges) != len(b.edges):
        return None
    if Counter(a.nodes.values()) != Counter(b.nodes.values()):
        return None
    if Counter(lab for _, _, lab in a.edges) != Counter(lab for _, _, lab in b.edges):
        return None
    ca, cb = _colors(a), _colors(b)
    if Counter(ca.values()) != Counter(cb.values()):
        return None
    b_by_color = defaultdict(list)
    for n, c in cb.items():
        b_by_color[c].append(n)
    a_nodes = sorted(a.nodes, key=lambda n: (len(b_by_color[ca[n]]), repr(n)))

    a_out = defaultdict(list)
    a_in = defaultdict(list)
    for u, v, lab in a.edges:
        a_out[u].append((lab, v))
        a_in[v].append((lab, u))
    b_out_set = Counter((u, lab, v) for u, v, lab in b.edges)

    phi: dict = {}
    used: set = set()

    def consistent(n, m) -> bool:
        for lab, v in a_out[n]:
            if v in phi and b_out_set[(m, lab, phi[v])] == 0:
                return False
        for lab, u in a_in[n]:
            if u in phi and b_out_set[(phi[u], lab, m)] == 0:
                return False
        return True

    def place(i) -> bool:
        if i == len(a_nodes):
            return _verify(a, b, phi)
        n = a_nodes[i]
        for m in b_by_color[ca[n]]:
            if m in used or not consistent(n, m):
                continue
            phi[n] = m
            used.add(m)
            if place(i + 1):
                return True
            del phi[n]
            used.remove(m)
        return False

    if place(0):
        return dict(phi)
    return None
