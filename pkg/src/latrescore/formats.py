"""Text lattice files, indexed archives, and transcript tables.

All files are UTF-8 with LF line endings. Lattice files store Kaldi-style
costs (negated log scores, graph/LM cost first); the sign convention flips
here and nowhere else. One utterance:

    utterance-id
    # meta: am=DNN align=phone-word     (optional directives)
    # start: 2                          (only when the start node is not 0)
    from to word graph_cost,acoustic_cost[,p1_p2_p3]
    ...
    final_state final_cost
    <blank line>

The canonical form written here sorts arcs by (from, to, word, costs),
prints costs with six fixed decimals ("-0.000000" normalized to
"0.000000"), and always spells final costs explicitly. Scores survive a
write/parse round trip exactly when they are representable at six
decimals, which holds for everything this package itself writes.

An archive (.ark) is a concatenation of such entries; its index (.scp) has
one ``key<TAB>ark_path:byte_offset`` line per entry, the offset pointing
at the first byte of the entry's key line. Relative ark paths resolve
against the scp file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import (
    DuplicateKey,
    KeyNotFound,
    OffsetMismatch,
    ParseError,
    ValidationError,
)
from .lattice import (
    AlignmentKind,
    AmKind,
    Arc,
    Lattice,
    LatticeMeta,
    validate,
)

__all__ = [
    "parse_lattice_text",
    "write_lattice_text",
    "write_ark",
    "write_scp",
    "read_ark",
    "iter_ark_entries",
    "ScpIndex",
    "read_scp",
    "read_ark_entry",
    "read_ark_entry_text",
    "read_transcripts",
]


def _fmt_cost(score: float) -> str:
    text = f"{-score:.6f}"
    return "0.000000" if text == "-0.000000" else text


def _parse_cost(token: str, line_no: int) -> float:
    try:
        cost = float(token)
    except ValueError:
        raise ParseError(line_no, f"bad cost {token!r}") from None
    if cost != cost or cost in (float("inf"), float("-inf")):
        raise ParseError(line_no, f"cost must be finite, got {token!r}")
    score = -cost
    return 0.0 if score == 0.0 else score


def parse_lattice_text(text: str, validate_result: bool = True) -> Lattice:
    """Parse one utterance's text form.

    Grammar violations raise ParseError with the 1-based line number.
    With validate_result (the default) the parsed lattice must also pass
    structural validation, otherwise ValidationError carries the report;
    pass False to obtain the raw lattice for inspection.
    """
    lines = text.split("\n")
    if not lines or not lines[0].strip():
        raise ParseError(1, "missing utterance id line")
    utterance_id = lines[0].strip()
    if len(utterance_id.split()) != 1:
        raise ParseError(1, f"utterance id must be a single token, got {lines[0]!r}")

    am_kind = AmKind.UNKNOWN
    alignment_kind = AlignmentKind.UNKNOWN
    start = 0
    saw_meta = saw_start = False
    arcs: list[Arc] = []
    finals: dict[int, float] = {}
    ended_at: int | None = None

    for line_no, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip()
        if ended_at is not None:
            if line.strip():
                raise ParseError(line_no, "content after entry terminator")
            continue
        if not line.strip():
            ended_at = line_no
            continue
        if line.lstrip().startswith("#"):
            body = line.lstrip()[1:].strip()
            if body.startswith("meta:"):
                if saw_meta:
                    raise ParseError(line_no, "duplicate meta directive")
                saw_meta = True
                am_kind, alignment_kind = _parse_meta(body[len("meta:") :], line_no)
            elif body.startswith("start:"):
                if saw_start:
                    raise ParseError(line_no, "duplicate start directive")
                saw_start = True
                try:
                    start = int(body[len("start:") :].strip())
                except ValueError:
                    raise ParseError(line_no, f"bad start directive {body!r}") from None
            continue
        fields = line.split()
        if len(fields) == 4:
            arcs.append(_parse_arc(fields, line_no))
        elif len(fields) in (1, 2):
            node = _parse_node(fields[0], line_no)
            if node in finals:
                raise ParseError(line_no, f"duplicate final state {node}")
            finals[node] = _parse_cost(fields[1], line_no) if len(fields) == 2 else 0.0
        else:
            raise ParseError(line_no, f"expected arc or final line, got {len(fields)} fields")

    if not finals:
        raise ParseError(len(lines), "entry has no final state line")

    mentioned = [start, *finals]
    for arc in arcs:
        mentioned.append(arc.src)
        mentioned.append(arc.dst)
    lattice = Lattice(
        num_nodes=max(mentioned) + 1,
        start=start,
        finals=finals,
        arcs=tuple(arcs),
        meta=LatticeMeta(utterance_id=utterance_id, am_kind=am_kind, alignment_kind=alignment_kind),
    )
    if validate_result:
        report = validate(lattice)
        if not report.ok:
            raise ValidationError(report, f"lattice {utterance_id!r} failed validation")
    return lattice


def _parse_meta(body: str, line_no: int) -> tuple[AmKind, AlignmentKind]:
    am = AmKind.UNKNOWN
    align = AlignmentKind.UNKNOWN
    for item in body.split():
        key, sep, value = item.partition("=")
        if not sep:
            raise ParseError(line_no, f"bad meta item {item!r}")
        if key == "am":
            try:
                am = AmKind(value)
            except ValueError:
                raise ParseError(line_no, f"unknown am kind {value!r}") from None
        elif key == "align":
            try:
                align = AlignmentKind(value)
            except ValueError:
                raise ParseError(line_no, f"unknown alignment kind {value!r}") from None
        else:
            raise ParseError(line_no, f"unknown meta key {key!r}")
    return am, align


def _parse_node(token: str, line_no: int) -> int:
    try:
        node = int(token)
    except ValueError:
        raise ParseError(line_no, f"bad node id {token!r}") from None
    if node < 0:
        raise ParseError(line_no, f"node id must be non-negative, got {node}")
    return node


def _parse_arc(fields: list[str], line_no: int) -> Arc:
    src = _parse_node(fields[0], line_no)
    dst = _parse_node(fields[1], line_no)
    word = fields[2]
    parts = fields[3].split(",")
    if len(parts) not in (2, 3):
        raise ParseError(line_no, f"cost field needs graph,acoustic[,phones], got {fields[3]!r}")
    lm_score = _parse_cost(parts[0], line_no)
    acoustic_score = _parse_cost(parts[1], line_no)
    phones: tuple[str, ...] | None = None
    if len(parts) == 3:
        labels = tuple(parts[2].split("_"))
        if not all(labels):
            raise ParseError(line_no, f"bad phone alignment {parts[2]!r}")
        phones = labels
    return Arc(
        src=src,
        dst=dst,
        word=word,
        acoustic_score=acoustic_score,
        lm_score=lm_score,
        phone_alignment=phones,
    )


def write_lattice_text(lattice: Lattice) -> str:
    """Serialize to canonical text. The lattice must validate ok.

    Raises:
        ValidationError: if the lattice does not validate.
        ValueError: if the utterance id is empty or contains whitespace.
    """
    report = validate(lattice)
    if not report.ok:
        raise ValidationError(report, f"refusing to write invalid lattice {lattice.meta.utterance_id!r}")
    utterance_id = lattice.meta.utterance_id
    if not utterance_id or len(utterance_id.split()) != 1:
        raise ValueError(f"utterance id must be a single non-empty token, got {utterance_id!r}")

    lines = [utterance_id]
    meta = lattice.meta
    if meta.am_kind is not AmKind.UNKNOWN or meta.alignment_kind is not AlignmentKind.UNKNOWN:
        lines.append(f"# meta: am={meta.am_kind.value} align={meta.alignment_kind.value}")
    if lattice.start != 0:
        lines.append(f"# start: {lattice.start}")
    # Lattice construction already normalized arc order to the canonical sort.
    for arc in lattice.arcs:
        cost = f"{_fmt_cost(arc.lm_score)},{_fmt_cost(arc.acoustic_score)}"
        if arc.phone_alignment:
            cost += "," + "_".join(arc.phone_alignment)
        lines.append(f"{arc.src} {arc.dst} {arc.word} {cost}")
    for node in sorted(lattice.finals):
        lines.append(f"{node} {_fmt_cost(lattice.finals[node])}")
    return "\n".join(lines) + "\n"


def write_ark(
    path: str | Path,
    lattices: Iterable[Lattice],
    scp_path: str | Path | None = None,
) -> list[tuple[str, int]]:
    """Write entries sequentially; return (key, byte_offset) pairs.

    Entries are keyed by utterance id; duplicate keys raise DuplicateKey.
    When scp_path is given the index is written alongside, referencing the
    ark by the path string given here.
    """
    entries = (
        (lattice.meta.utterance_id, write_lattice_text(lattice)) for lattice in lattices
    )
    return write_ark_texts(path, entries, scp_path=scp_path)


def write_ark_texts(
    path: str | Path,
    entries: Iterable[tuple[str, str]],
    scp_path: str | Path | None = None,
) -> list[tuple[str, int]]:
    """write_ark for already-serialized entries, preserving their text exactly."""
    offsets: list[tuple[str, int]] = []
    seen: set[str] = set()
    with open(path, "wb") as fh:
        for key, text in entries:
            if key in seen:
                raise DuplicateKey(f"duplicate utterance key {key!r}")
            seen.add(key)
            offsets.append((key, fh.tell()))
            fh.write(text.encode("utf-8"))
            if not text.endswith("\n"):
                fh.write(b"\n")
            fh.write(b"\n")
    if scp_path is not None:
        write_scp(scp_path, str(path), offsets)
    return offsets


def write_scp(path: str | Path, ark_path: str, offsets: Iterable[tuple[str, int]]) -> None:
    lines = [f"{key}\t{ark_path}:{offset}" for key, offset in offsets]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def iter_ark_entries(path: str | Path) -> Iterator[tuple[str, str]]:
    """Yield (key, entry_text) sequentially; entry_text excludes the blank terminator."""
    text = Path(path).read_text(encoding="utf-8")
    for chunk in text.split("\n\n"):
        if not chunk.strip():
            continue
        entry = chunk.strip("\n") + "\n"
        yield entry.split("\n", 1)[0].strip(), entry


def read_ark(path: str | Path) -> list[Lattice]:
    """Read a whole archive in storage order."""
    return [parse_lattice_text(entry) for _key, entry in iter_ark_entries(path)]


@dataclass(frozen=True)
class ScpIndex:
    """Parsed scp: ordered (key, ark_path, offset) rows plus a key lookup."""

    entries: tuple[tuple[str, str, int], ...]
    base_dir: Path

    def __post_init__(self) -> None:
        object.__setattr__(self, "_by_key", {key: (ark, off) for key, ark, off in self.entries})

    def keys(self) -> list[str]:
        return [key for key, _ark, _off in self.entries]

    def locate(self, key: str) -> tuple[Path, int]:
        try:
            ark, offset = self._by_key[key]
        except KeyError:
            raise KeyNotFound(f"key {key!r} not in index") from None
        ark_path = Path(ark)
        if not ark_path.is_absolute():
            ark_path = self.base_dir / ark_path
        return ark_path, offset


def read_scp(path: str | Path) -> ScpIndex:
    """Parse an scp index.

    Raises:
        ParseError: on a malformed line or non-increasing offsets per ark.
        DuplicateKey: if a key occurs twice.
    """
    entries: list[tuple[str, str, int]] = []
    seen: set[str] = set()
    last_offset: dict[str, int] = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        key, sep, rest = raw.partition("\t")
        if not sep or not key or not rest:
            raise ParseError(line_no, "scp line needs key<TAB>ark_path:offset")
        ark, sep, offset_text = rest.rpartition(":")
        if not sep or not ark:
            raise ParseError(line_no, f"missing ark_path:offset in {rest!r}")
        try:
            offset = int(offset_text)
        except ValueError:
            raise ParseError(line_no, f"bad offset {offset_text!r}") from None
        if offset < 0:
            raise ParseError(line_no, f"offset must be non-negative, got {offset}")
        if key in seen:
            raise DuplicateKey(f"duplicate key {key!r} in scp")
        seen.add(key)
        if ark in last_offset and offset <= last_offset[ark]:
            raise ParseError(line_no, f"offsets not strictly increasing for {ark!r}")
        last_offset[ark] = offset
        entries.append((key, ark, offset))
    return ScpIndex(entries=tuple(entries), base_dir=Path(path).resolve().parent)


def read_ark_entry_text(index: ScpIndex, key: str) -> str:
    """Fetch one entry's raw text via the index.

    Raises:
        KeyNotFound: if the key is not indexed.
        OffsetMismatch: if the bytes at the offset do not start with the key.
    """
    ark_path, offset = index.locate(key)
    with open(ark_path, "rb") as fh:
        fh.seek(offset)
        chunks: list[bytes] = []
        while True:
            chunk = fh.read(65536)
            if not chunk:
                break
            chunks.append(chunk)
            if b"\n\n" in b"".join(chunks[-2:]):
                break
    blob = b"".join(chunks)
    end = blob.find(b"\n\n")
    entry = blob[: end + 1] if end != -1 else blob
    text = entry.decode("utf-8")
    first = text.split("\n", 1)[0].strip()
    if first != key:
        raise OffsetMismatch(f"offset {offset} in {ark_path} holds {first!r}, expected {key!r}")
    return text if text.endswith("\n") else text + "\n"


def read_ark_entry(index: ScpIndex, key: str) -> Lattice:
    """Fetch and parse one lattice via the index."""
    return parse_lattice_text(read_ark_entry_text(index, key))


def read_transcripts(path: str | Path) -> dict[str, list[str]]:
    """Read reference/hypothesis transcripts: ``key w1 w2 ...`` per line.

    A key alone denotes an empty transcript. Blank lines are skipped.

    Raises:
        DuplicateKey: if a key occurs twice.
    """
    table: dict[str, list[str]] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        if not raw.strip():
            continue
        tokens = raw.split()
        key, words = tokens[0], tokens[1:]
        if key in table:
            raise DuplicateKey(f"duplicate utterance key {key!r}")
        table[key] = words
    return table
