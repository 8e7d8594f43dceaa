"""Offline store builders: raw database dumps in, queryable local stores out.

Four stores, fixed file names under the data directory:

    mappings.db        ID-standard equivalences from an idmapping TSV
    assemblies.db      assembly metadata + protein->assembly links from
                       assembly summary tables and one scan over the GFFs
    sequences.db       protein code -> amino-acid sequence from FASTA files
    rankedlineage.tbl  columnar taxonomy table from a rankedlineage dump

Every builder streams its input (bounded memory), skips-and-counts malformed
rows, and writes a JSON manifest sidecar. Rebuilding from the same inputs
yields a store with identical query results.
"""

from __future__ import annotations

import csv
import gzip
import json
import logging
import sqlite3
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import DataError

logger = logging.getLogger(__name__)

STORE_FORMAT_VERSION = 1

STORE_FILENAMES = {
    "mappings": "mappings.db",
    "assemblies": "assemblies.db",
    "sequences": "sequences.db",
    "taxonomy": "rankedlineage.tbl",
}

# Column indices into the idmapping_selected layout for the standards we
# house. Overridable per call for nonstandard dumps.
IDMAPPING_COLUMNS = {
    "UniProtKB-AC": 0,
    "UniProtKB-ID": 1,
    "GeneID": 2,
    "RefSeq": 3,
    "UniParc": 10,
    "EMBL-CDS": 17,
}

# Column indices into the assembly summary layout.
SUMMARY_COLUMNS = {"accession": 0, "taxid": 5, "organism": 7}

TAXONOMY_RANKS = (
    "tax_name",
    "species",
    "genus",
    "family",
    "order",
    "class",
    "phylum",
    "kingdom",
    "superkingdom",
)

_BATCH = 2000


@dataclass
class IngestManifest:
    store_name: str
    source_files: list
    record_count: int
    build_timestamp: str
    format_version: int = STORE_FORMAT_VERSION
    malformed_count: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "store_name": self.store_name,
            "source_files": [str(p) for p in self.source_files],
            "record_count": self.record_count,
            "build_timestamp": self.build_timestamp,
            "format_version": self.format_version,
            "malformed_count": self.malformed_count,
            "extra": self.extra,
        }

    def save(self, out_dir) -> Path:
        path = Path(out_dir) / f"{self.store_name}.manifest.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")
        return path


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _open_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def _fresh_db(path: Path) -> sqlite3.Connection:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists():
        path.unlink()
    conn = sqlite3.connect(path)
    conn.execute("PRAGMA synchronous = OFF")
    return conn


def _write_meta(conn: sqlite3.Connection, store_name: str, **extra) -> None:
    conn.execute("CREATE TABLE meta (key TEXT PRIMARY KEY, value TEXT)")
    rows = [("store_name", store_name), ("format_version", str(STORE_FORMAT_VERSION))]
    rows += [(k, str(v)) for k, v in extra.items()]
    conn.executemany("INSERT INTO meta VALUES (?, ?)", rows)


def build_mappings_store(idmapping_tsv, out_dir, columns: dict | None = None) -> IngestManifest:
    """Build mappings.db: every housed standard indexes the full record.

    Rows with fewer columns than the largest configured index are counted as
    malformed and skipped. Cells may hold several values separated by `;`;
    each value becomes a lookup key.
    """
    columns = dict(columns or IDMAPPING_COLUMNS)
    needed = max(columns.values()) + 1
    out_dir = Path(out_dir)
    db_path = out_dir / STORE_FILENAMES["mappings"]
    conn = _fresh_db(db_path)
    standards = sorted(columns)
    cols_sql = ", ".join(f'"{s}" TEXT' for s in standards)
    conn.execute(f"CREATE TABLE records (rec_id INTEGER PRIMARY KEY, {cols_sql})")
    conn.execute("CREATE TABLE keys (standard TEXT NOT NULL, id TEXT NOT NULL, rec_id INTEGER NOT NULL)")

    record_count = 0
    malformed = 0
    rec_rows: list[tuple] = []
    key_rows: list[tuple] = []

    def flush():
        nonlocal rec_rows, key_rows
        if rec_rows:
            placeholders = ", ".join("?" for _ in range(len(standards) + 1))
            conn.executemany(f"INSERT INTO records VALUES ({placeholders})", rec_rows)
            rec_rows = []
        if key_rows:
            conn.executemany("INSERT INTO keys VALUES (?, ?, ?)", key_rows)
            key_rows = []

    with _open_text(idmapping_tsv) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split("\t")
            if len(cells) < needed:
                malformed += 1
                continue
            values = {s: cells[columns[s]].strip() for s in standards}
            if not any(values.values()):
                malformed += 1
                continue
            record_count += 1
            rec_id = record_count
            rec_rows.append((rec_id, *[values[s] or None for s in standards]))
            for s in standards:
                for token in values[s].split(";"):
                    token = token.strip()
                    if token:
                        key_rows.append((s, token, rec_id))
            if len(rec_rows) >= _BATCH:
                flush()
    flush()
    if record_count == 0:
        conn.close()
        db_path.unlink(missing_ok=True)
        raise DataError(f"no valid rows in {idmapping_tsv}")
    conn.execute("CREATE INDEX idx_keys ON keys (standard, id)")
    _write_meta(conn, "mappings", columns=json.dumps(columns, sort_keys=True))
    conn.commit()
    conn.close()
    manifest = IngestManifest(
        store_name="mappings",
        source_files=[str(idmapping_tsv)],
        record_count=record_count,
        build_timestamp=_utc_now(),
        malformed_count=malformed,
    )
    manifest.save(out_dir)
    return manifest


def _find_annotation_file(gff_root: Path, accession: str) -> str | None:
    """Annotation files are named by accession under gff_root."""
    for name in (f"{accession}_genomic.gff.gz", f"{accession}_genomic.gff", f"{accession}.gff.gz", f"{accession}.gff"):
        if (gff_root / name).is_file():
            return name
    return None


def build_assemblies_store(summary_tables, gff_root, out_dir, columns: dict | None = None) -> IngestManifest:
    """Build assemblies.db from assembly summary tables plus one scan over
    each annotation file for CDS protein ids.

    Rows for accessions whose annotation file is absent are kept but flagged
    file_missing (no links can be harvested for them). Duplicate accessions:
    last row wins, counted.
    """
    from .collect import parse_gff_cds  # late import; collect has no ingest dependency

    columns = dict(columns or SUMMARY_COLUMNS)
    needed = max(columns.values()) + 1
    gff_root = Path(gff_root)
    out_dir = Path(out_dir)
    db_path = out_dir / STORE_FILENAMES["assemblies"]

    assemblies: dict[str, tuple] = {}
    malformed = 0
    duplicates = 0
    missing = 0
    for table in summary_tables:
        with _open_text(table) as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                cells = line.split("\t")
                if len(cells) < needed:
                    malformed += 1
                    continue
                accession = cells[columns["accession"]].strip()
                if accession.startswith("GCF_"):
                    source_db = "RefSeq"
                elif accession.startswith("GCA_"):
                    source_db = "GenBank"
                else:
                    malformed += 1
                    continue
                try:
                    taxid = int(cells[columns["taxid"]])
                except ValueError:
                    malformed += 1
                    continue
                organism = cells[columns["organism"]].strip()
                annotation = _find_annotation_file(gff_root, accession)
                file_missing = annotation is None
                if file_missing:
                    missing += 1
                    annotation = f"{accession}_genomic.gff.gz"
                    logger.warning("no annotation file for %s under %s", accession, gff_root)
                if accession in assemblies:
                    duplicates += 1
                    logger.warning("duplicate assembly accession %s, last row wins", accession)
                assemblies[accession] = (accession, taxid, organism, annotation, source_db, int(file_missing))
    if not assemblies:
        raise DataError(f"no valid assembly rows in {', '.join(str(t) for t in summary_tables)}")

    conn = _fresh_db(db_path)
    conn.execute(
        "CREATE TABLE assemblies (accession TEXT PRIMARY KEY, taxid INTEGER, organism TEXT,"
        " annotation_file TEXT, source_db TEXT, file_missing INTEGER)"
    )
    conn.execute("CREATE TABLE protein_links (code TEXT NOT NULL, accession TEXT NOT NULL)")
    conn.executemany("INSERT INTO assemblies VALUES (?, ?, ?, ?, ?, ?)", assemblies.values())

    n_links = 0
    for accession, row in sorted(assemblies.items()):
        if row[5]:
            continue
        genes = parse_gff_cds(gff_root / row[3])
        codes = sorted({g.protein_code for g in genes})
        conn.executemany("INSERT INTO protein_links VALUES (?, ?)", [(c, accession) for c in codes])
        n_links += len(codes)
    conn.execute("CREATE INDEX idx_links ON protein_links (code)")
    _write_meta(conn, "assemblies", gff_root=str(gff_root.resolve()))
    conn.commit()
    conn.close()
    manifest = IngestManifest(
        store_name="assemblies",
        source_files=[str(t) for t in summary_tables],
        record_count=len(assemblies),
        build_timestamp=_utc_now(),
        malformed_count=malformed,
        extra={"protein_links": n_links, "duplicates": duplicates, "missing_annotation_files": missing},
    )
    manifest.save(out_dir)
    return manifest


def _iter_fasta(path):
    """Yields (code, sequence) pairs; malformed headers yield (None, None)."""
    code = None
    parts: list[str] = []
    with _open_text(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                if code is not None:
                    yield code, "".join(parts)
                header = line[1:].strip()
                code = header.split()[0] if header else None
                parts = []
                if code is None:
                    yield None, None  # bare '>' header
            elif code is not None:
                parts.append(line)
    if code is not None:
        yield code, "".join(parts)


def build_sequences_store(faa_files, out_dir) -> IngestManifest:
    """Build sequences.db: FASTA header token -> uppercased sequence, `*`
    stripped. First record wins on conflicting duplicates; identical
    duplicates collapse silently; empty sequences are skipped."""
    out_dir = Path(out_dir)
    db_path = out_dir / STORE_FILENAMES["sequences"]
    conn = _fresh_db(db_path)
    conn.execute("CREATE TABLE sequences (code TEXT PRIMARY KEY, sequence TEXT NOT NULL)")

    record_count = 0
    malformed = 0
    conflicts = 0
    empty = 0
    for path in faa_files:
        for code, seq in _iter_fasta(path):
            if code is None:
                malformed += 1
                continue
            seq = seq.upper().replace("*", "")
            if not seq:
                empty += 1
                continue
            row = conn.execute("SELECT sequence FROM sequences WHERE code = ?", (code,)).fetchone()
            if row is not None:
                if row[0] != seq:
                    conflicts += 1
                    logger.warning("conflicting sequence for %s, keeping first", code)
                continue
            conn.execute("INSERT INTO sequences VALUES (?, ?)", (code, seq))
            record_count += 1
    if record_count == 0:
        conn.close()
        db_path.unlink(missing_ok=True)
        raise DataError(f"no sequences parsed from {', '.join(str(p) for p in faa_files)}")
    _write_meta(conn, "sequences")
    conn.commit()
    conn.close()
    manifest = IngestManifest(
        store_name="sequences",
        source_files=[str(p) for p in faa_files],
        record_count=record_count,
        build_timestamp=_utc_now(),
        malformed_count=malformed,
        extra={"conflicts": conflicts, "empty_sequences": empty},
    )
    manifest.save(out_dir)
    return manifest


def build_taxonomy_table(rankedlineage_dmp, out_dir) -> IngestManifest:
    """Convert a rankedlineage dump (fields separated by `\\t|\\t`, lines
    terminated `\\t|`) into a single-pass-loadable TSV keyed by taxid."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tbl_path = out_dir / STORE_FILENAMES["taxonomy"]
    record_count = 0
    malformed = 0
    with _open_text(rankedlineage_dmp) as fh, open(tbl_path, "w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out, delimiter="\t", lineterminator="\n")
        writer.writerow(["taxid", *TAXONOMY_RANKS])
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.endswith("\t|"):
                line = line[: -len("\t|")]
            fields = line.split("\t|\t")
            if len(fields) != 10:
                malformed += 1
                continue
            try:
                taxid = int(fields[0])
            except ValueError:
                malformed += 1
                continue
            writer.writerow([taxid, *[f.strip() for f in fields[1:]]])
            record_count += 1
    if record_count == 0:
        tbl_path.unlink(missing_ok=True)
        raise DataError(f"no valid lines in {rankedlineage_dmp}")
    manifest = IngestManifest(
        store_name="taxonomy",
        source_files=[str(rankedlineage_dmp)],
        record_count=record_count,
        build_timestamp=_utc_now(),
        malformed_count=malformed,
    )
    manifest.save(out_dir)
    return manifest
