"""Target list parsing and protein ID standard detection.

Input files are UTF-8 text (LF or CRLF), either one identifier per line or
FASTA (the token after ``>`` up to the first whitespace is the identifier).
Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError

logger = logging.getLogger(__name__)

# Accepted identifier standards, tried in this order; first match wins.
# More specific shapes come first: EMBL-CDS ids also fit the broad GenBank
# pattern, and short ones can collide with UniProtKB forms.
ID_STANDARDS = (
    "RefSeq",
    "UniParc",
    "UniProtKB-AC",
    "UniProtKB-ID",
    "GeneID",
    "EMBL-CDS",
    "GenBank",
)

# RefSeq protein accession prefixes per the public accession documentation.
_PATTERNS = (
    ("RefSeq", re.compile(r"(NP|WP|XP|YP)_\d+(\.\d+)?")),
    ("UniParc", re.compile(r"UPI[0-9A-F]{10}")),
    # Official UniProtKB accession grammar, 6 or 10 characters.
    (
        "UniProtKB-AC",
        re.compile(r"[OPQ][0-9][A-Z0-9]{3}[0-9]|[A-NR-Z][0-9]([A-Z][A-Z0-9]{2}[0-9]){1,2}"),
    ),
    # Mnemonic form PROTEIN_SPECIES, e.g. RL1_ECOLI.
    ("UniProtKB-ID", re.compile(r"[A-Z0-9]{1,10}_[A-Z0-9]{1,5}")),
    ("GeneID", re.compile(r"\d+")),
    ("EMBL-CDS", re.compile(r"[A-Z]{3}\d{5}(\.\d+)?")),
    ("GenBank", re.compile(r"[A-Z]{1,4}\d{5,10}(\.\d+)?")),
)


@dataclass
class Target:
    raw_id: str
    id_standard: str = "Unknown"
    canonical_code: str | None = None
    source_label: str | None = None

    def to_dict(self) -> dict:
        return {
            "raw_id": self.raw_id,
            "id_standard": self.id_standard,
            "canonical_code": self.canonical_code,
            "source_label": self.source_label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Target":
        return cls(
            raw_id=d["raw_id"],
            id_standard=d["id_standard"],
            canonical_code=d.get("canonical_code"),
            source_label=d.get("source_label"),
        )


def detect_id_standard(raw_id: str) -> str:
    """Classify an identifier; returns "Unknown" when no pattern matches."""
    for standard, pattern in _PATTERNS:
        if pattern.fullmatch(raw_id):
            return standard
    return "Unknown"


def matching_standards(raw_id: str) -> list[str]:
    """All standards whose pattern fully matches (diagnostic helper)."""
    return [standard for standard, pattern in _PATTERNS if pattern.fullmatch(raw_id)]


def _iter_identifiers(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read targets file {path}: {exc}") from exc

    lines = [ln.strip() for ln in text.splitlines()]
    content = [ln for ln in lines if ln and not ln.startswith("#")]
    fasta = bool(content) and content[0].startswith(">")
    for line in content:
        if fasta:
            if line.startswith(">"):
                ident = line[1:].split()[0] if line[1:].split() else ""
                if ident:
                    yield ident
        else:
            yield line.split()[0]


def parse_targets(paths: list[str | Path]) -> list[Target]:
    """Parse one or more target files into a deduplicated, ordered target list.

    Duplicates (on raw_id) keep the first occurrence. When more than one file
    is given, each target carries its file stem as source_label.
    """
    if not paths:
        raise DataError("no targets file given")
    paths = [Path(p) for p in paths]
    label = len(paths) > 1

    targets: list[Target] = []
    seen: set[str] = set()
    for path in paths:
        count = 0
        for ident in _iter_identifiers(path):
            count += 1
            if ident in seen:
                continue
            seen.add(ident)
            targets.append(
                Target(
                    raw_id=ident,
                    id_standard=detect_id_standard(ident),
                    source_label=path.stem if label else None,
                )
            )
        if count == 0:
            raise DataError(f"no targets parsed from {path}")

    unknown = [t.raw_id for t in targets if t.id_standard == "Unknown"]
    if unknown:
        logger.warning("%d target(s) with unknown ID standard: %s", len(unknown), ", ".join(unknown[:5]))
    return targets
