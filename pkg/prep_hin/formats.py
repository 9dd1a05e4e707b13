"""Plain-text artifact plumbing shared by every exported file.

All artifacts are UTF-8, tab-separated and newline-terminated. A header
block of ``# key<TAB>value...`` lines identifies the tool version, the
artifact kind and the content hashes of the inputs that produced it, which
is what lets the CLI reuse an artifact when its inputs did not change.
Floats are written with ``repr`` so that every value round-trips
bit-exactly.
"""

import hashlib
import math
import typing as t
from dataclasses import dataclass, field
from pathlib import Path
from typing import Final

from .exceptions import ParseError

TOOL_NAME: Final = "prep-hin"
HEADER_MARK: Final = "#"
FIELD_SEP: Final = "\t"
_CHUNK: Final = 1 << 16


def format_float(value: float) -> str:
    """Shortest repr that parses back to the same double."""
    return repr(float(value))


def parse_float(text: str, path: str = "<memory>", line: int = 0) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(path, line, f"not a number: {text!r}")
    if math.isnan(value):
        raise ParseError(path, line, "NaN is not a valid value")
    return value


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        while chunk := fh.read(_CHUNK):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class Header:
    """Ordered ``key -> values`` entries of an artifact header."""

    kind: str
    version: str = ""
    entries: list[tuple[str, tuple[str, ...]]] = field(default_factory=list)

    def add(self, key: str, *values: t.Any) -> "Header":
        self.entries.append((key, tuple(str(v) for v in values)))
        return self

    def get(self, key: str) -> tuple[str, ...] | None:
        for k, values in self.entries:
            if k == key:
                return values
        return None

    def get_all(self, key: str) -> list[tuple[str, ...]]:
        return [values for k, values in self.entries if k == key]

    def first(self, key: str) -> str | None:
        values = self.get(key)
        return values[0] if values else None

    def inputs(self) -> dict[str, str]:
        """Input label -> content hash."""
        return {values[0]: values[1] for values in self.get_all("input")}

    def lines(self) -> list[str]:
        out = [f"{HEADER_MARK} {TOOL_NAME}{FIELD_SEP}{self.version}"]
        out.append(f"{HEADER_MARK} kind{FIELD_SEP}{self.kind}")
        for key, values in self.entries:
            out.append(
                f"{HEADER_MARK} {FIELD_SEP.join((key, *values))}".rstrip()
            )
        return out


@dataclass
class Record:
    line_number: int
    fields: list[str]


@dataclass
class TextArtifact:
    path: str
    header: Header
    records: list[Record]
    # (records seen so far, key and values) of each positional comment line
    markers: list[tuple[int, tuple[str, ...]]] = field(default_factory=list)


def read_lines(path: str | Path) -> t.Iterator[tuple[int, str]]:
    """Numbered lines of a UTF-8 text file.

    Undecodable bytes raise :class:`ParseError` at the offending line.
    """
    with Path(path).open("rb") as fh:
        for number, raw in enumerate(fh, 1):
            try:
                yield number, raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ParseError(
                    str(path), number, f"invalid UTF-8: {exc.reason}"
                )


def _split_header_line(line: str) -> list[str]:
    return line[len(HEADER_MARK) :].strip().split(FIELD_SEP)


def write_artifact(
    path: str | Path, header: Header, rows: t.Iterable[t.Sequence[t.Any]]
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for line in header.lines():
            fh.write(line + "\n")
        for row in rows:
            if isinstance(row, str):
                fh.write(row + "\n")
            else:
                fh.write(FIELD_SEP.join(str(v) for v in row) + "\n")
    return path


def read_artifact(
    path: str | Path,
    expected_kind: str | None = None,
    marker_keys: t.Collection[str] = (),
) -> TextArtifact:
    """Parse a file written by :func:`write_artifact`.

    Comment lines keyed by one of ``marker_keys``, and any comment line met
    after the first data record, are kept as positional markers.
    """
    path_str = str(path)
    header = Header(kind="")
    records: list[Record] = []
    markers: list[tuple[int, tuple[str, ...]]] = []
    for number, raw in read_lines(path):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith(HEADER_MARK):
            parts = _split_header_line(line)
            key, values = parts[0], tuple(parts[1:])
            if key == TOOL_NAME:
                header.version = values[0] if values else ""
            elif key == "kind":
                header.kind = values[0] if values else ""
            elif records or key in marker_keys:
                markers.append((len(records), (key, *values)))
            else:
                header.entries.append((key, values))
            continue
        records.append(Record(number, line.split(FIELD_SEP)))
    if expected_kind is not None and header.kind != expected_kind:
        raise ParseError(
            path_str,
            1,
            f"expected a {expected_kind!r} artifact, found {header.kind!r}",
        )
    return TextArtifact(path_str, header, records, markers)


def read_header(path: str | Path) -> Header | None:
    """Header of an existing artifact, or None when the file is absent."""
    if not Path(path).exists():
        return None
    header = Header(kind="")
    for _, raw in read_lines(path):
        if not raw.startswith(HEADER_MARK):
            break
        parts = _split_header_line(raw.rstrip("\n"))
        if parts[0] == TOOL_NAME:
            header.version = parts[1] if len(parts) > 1 else ""
        elif parts[0] == "kind":
            header.kind = parts[1] if len(parts) > 1 else ""
        else:
            header.entries.append((parts[0], tuple(parts[1:])))
    return header


def iter_tsv(path: str | Path) -> t.Iterator[Record]:
    """Data lines of a header-free input file, blank lines skipped."""
    for number, raw in read_lines(path):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        yield Record(number, line.split(FIELD_SEP))
