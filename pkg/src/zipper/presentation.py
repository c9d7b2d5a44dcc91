"""Finite group presentations: parsing, word reduction, catalog.

Words are tuples of signed 1-based generator indices: +k is the k-th
generator, -k its inverse.  The text grammar writes generators as lowercase
ASCII letters and inverses as the corresponding uppercase letters, e.g.
"a,b|abAB" for the free abelian group on two generators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

Word = tuple[int, ...]


class PresentationError(ValueError):
    """Syntax or consistency error in a presentation; carries a position."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


def free_reduce(letters) -> Word:
    """Cancel adjacent x·x^-1 pairs until none remain."""
    out: list[int] = []
    for x in letters:
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


def cyclic_reduce(letters) -> Word:
    w = list(free_reduce(letters))
    while len(w) >= 2 and w[0] == -w[-1]:
        w = w[1:-1]
    return tuple(w)


def reduce_word(w, cyclic: bool = False) -> Word:
    """Freely (and optionally cyclically) reduce a word; element unchanged
    (up to conjugacy when cyclic=True)."""
    return cyclic_reduce(w) if cyclic else free_reduce(w)


def invert_word(w) -> Word:
    return tuple(-x for x in reversed(w))


@dataclass(frozen=True)
class Presentation:
    """A finite presentation <generators | relators>.

    Relators are stored freely and cyclically reduced; instances are
    immutable and safe to share.
    """

    generators: tuple[str, ...]
    relators: tuple[Word, ...] = ()
    name: str | None = None

    def __post_init__(self):
        if not self.generators:
            raise PresentationError("empty generator list")
        seen = set()
        for g in self.generators:
            if len(g) != 1 or not ("a" <= g <= "z"):
                raise PresentationError(f"generator {g!r} is not a lowercase letter")
            if g in seen:
                raise PresentationError(f"duplicate generator {g!r}")
            seen.add(g)
        n = len(self.generators)
        for w in self.relators:
            if not w:
                raise PresentationError("relator of length 0")
            for x in w:
                if x == 0 or abs(x) > n:
                    raise PresentationError(f"relator letter {x} indexes no generator")
            if w != cyclic_reduce(w):
                raise PresentationError(f"relator {w} is not cyclically reduced")

    @property
    def rank(self) -> int:
        return len(self.generators)

    def letter_name(self, x: int) -> str:
        g = self.generators[abs(x) - 1]
        return g if x > 0 else g.upper()

    def word_str(self, w) -> str:
        return "".join(self.letter_name(x) for x in w)

    def serialize(self) -> dict:
        d = {
            "generators": list(self.generators),
            "relators": [self.word_str(w) for w in self.relators],
        }
        d["name"] = self.name
        return d


def parse_word(text: str, generators, offset: int = 0) -> Word:
    """Parse a relator string over the given generators (uppercase = inverse).

    The result is *not* reduced; callers decide the normalization.
    """
    index = {g: i + 1 for i, g in enumerate(generators)}
    letters = []
    for pos, ch in enumerate(text):
        if ch.isspace():
            continue
        low = ch.lower()
        if low not in index:
            raise PresentationError(f"unknown generator {ch!r} in relator", offset + pos)
        letters.append(index[low] if ch == low else -index[low])
    return tuple(letters)


def parse_presentation(text: str, name: str | None = None) -> Presentation:
    """Parse `gens "|" relator ("," relator)*` into a normalized Presentation.

    Whitespace is ignored everywhere.  Relators come out freely and
    cyclically reduced; relators reducing to the empty word are rejected.
    """
    if "|" not in text:
        raise PresentationError('missing "|" separator', text.find("|"))
    bar = text.index("|")
    gens_part, rel_part = text[:bar], text[bar + 1 :]
    generators = []
    for chunk in gens_part.split(","):
        g = chunk.strip()
        if not g:
            raise PresentationError("empty generator name", text.index(chunk) if chunk else 0)
        if len(g) != 1 or not g.islower():
            raise PresentationError(f"bad generator {g!r}", text.index(g))
        generators.append(g)
    if not generators:
        raise PresentationError("empty generator list", 0)
    relators = []
    cursor = bar + 1
    for chunk in rel_part.split(","):
        if chunk.strip():
            raw = parse_word(chunk, generators, offset=cursor)
            if not raw:
                raise PresentationError("relator of length 0", cursor)
            red = cyclic_reduce(raw)
            if not red:
                raise PresentationError("relator reduces to the empty word", cursor)
            relators.append(red)
        cursor += len(chunk) + 1
    return Presentation(tuple(generators), tuple(relators), name=name)


def serialize_presentation(p: Presentation) -> str:
    rels = ",".join(p.word_str(w) for w in p.relators)
    return ",".join(p.generators) + "|" + rels


CATALOG_KEYS = ("Z", "Z2", "F2", "S3", "surface2")


def catalog(key: str) -> Presentation:
    """Standard presentations used by the acceptance suite.

    Keys: Z, Z2 (free abelian rank 2), Zn(n), F2, S3, surface2.
    """
    key = key.strip()
    if key == "Z":
        return parse_presentation("a|", name="Z")
    if key == "Z2":
        return parse_presentation("a,b|abAB", name="Z2")
    if key == "F2":
        return parse_presentation("a,b|", name="F2")
    if key == "S3":
        return parse_presentation("a,b|aa,bb,ababab", name="S3")
    if key == "surface2":
        return parse_presentation("a,b,c,d|abABcdCD", name="surface2")
    if key.startswith("Zn(") and key.endswith(")"):
        n = int(key[3:-1])
        if n < 1:
            raise PresentationError(f"Zn order must be >= 1, got {n}")
        return parse_presentation("a|" + "a" * n, name=key)
    raise PresentationError(f"unknown catalog key {key!r}")
