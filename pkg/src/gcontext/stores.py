"""Read-side store handlers. All query APIs are batch-first and misses are
values (None / empty list), never errors: a 10 000-target run must not abort
on absent records.

Store files live under the data directory with fixed names (mappings.db,
assemblies.db, sequences.db, rankedlineage.tbl). Handles are read-only and
immutable after open; any number of concurrent readers is safe.
"""

from __future__ import annotations

import json
import sqlite3
from dataclasses import dataclass
from pathlib import Path

import pandas as pd

from .errors import StoreError
from .ingest import STORE_FILENAMES, STORE_FORMAT_VERSION

# A MappingRecord is a plain dict: ID standard -> value or None, with at
# least one value populated (guaranteed at build time).

_IN_BATCH = 400


@dataclass
class AssemblyRecord:
    assembly_accession: str
    taxid: int
    organism_name: str
    annotation_file: str  # relative to the store's gff_root
    source_db: str  # GenBank | RefSeq
    file_missing: bool = False


@dataclass
class StoreHandle:
    store_name: str
    path: Path
    format_version: int
    read_only: bool = True
    conn: sqlite3.Connection | None = None
    meta: dict | None = None

    def close(self) -> None:
        if self.conn is not None:
            self.conn.close()
            self.conn = None


def open_store(data_dir, store_name: str) -> StoreHandle:
    """Open one of the sqlite-backed stores read-only, checking identity and
    format version."""
    if store_name not in ("mappings", "assemblies", "sequences"):
        raise StoreError(f"unknown store '{store_name}'")
    path = Path(data_dir) / STORE_FILENAMES[store_name]
    if not path.is_file():
        raise StoreError(f"store file not found: {path}")
    conn = sqlite3.connect(f"file:{path}?mode=ro", uri=True)
    try:
        meta = dict(conn.execute("SELECT key, value FROM meta").fetchall())
    except sqlite3.DatabaseError as exc:
        conn.close()
        raise StoreError(f"unreadable store {path}: {exc}") from exc
    if meta.get("store_name") != store_name:
        conn.close()
        raise StoreError(f"{path} is a '{meta.get('store_name')}' store, expected '{store_name}'")
    version = int(meta.get("format_version", -1))
    if version != STORE_FORMAT_VERSION:
        conn.close()
        raise StoreError(f"{path}: format version {version} not supported (reader supports {STORE_FORMAT_VERSION})")
    return StoreHandle(store_name=store_name, path=path, format_version=version, conn=conn, meta=meta)


def _require(handle: StoreHandle, store_name: str) -> sqlite3.Connection:
    if handle.store_name != store_name:
        raise StoreError(f"operation needs the {store_name} store, got '{handle.store_name}'")
    if handle.conn is None:
        raise StoreError(f"store {handle.path} is closed")
    return handle.conn


def _chunks(seq, size=_IN_BATCH):
    for i in range(0, len(seq), size):
        yield seq[i : i + size]


def housed_standards(handle: StoreHandle) -> list[str]:
    _require(handle, "mappings")
    return sorted(json.loads(handle.meta["columns"]))


def map_ids(handle: StoreHandle, ids, from_standard: str, to_standard: str) -> dict:
    """Batched translation between ID standards; absent ids map to None.

    Multi-valued cells were split into keys at build time; the returned value
    is the first token of the target cell.
    """
    conn = _require(handle, "mappings")
    standards = housed_standards(handle)
    for std in (from_standard, to_standard):
        if std not in standards:
            raise StoreError(f"standard '{std}' not housed in mappings store ({', '.join(standards)})")
    result = {i: None for i in ids}
    wanted = sorted(result)
    id_to_rec: dict[str, int] = {}
    for chunk in _chunks(wanted):
        marks = ", ".join("?" for _ in chunk)
        rows = conn.execute(
            f"SELECT id, rec_id FROM keys WHERE standard = ? AND id IN ({marks})",
            (from_standard, *chunk),
        ).fetchall()
        for ident, rec_id in rows:
            # duplicate keys across records: keep the first-built record
            if ident not in id_to_rec or rec_id < id_to_rec[ident]:
                id_to_rec[ident] = rec_id
    rec_ids = sorted(set(id_to_rec.values()))
    rec_value: dict[int, str | None] = {}
    for chunk in _chunks(rec_ids):
        marks = ", ".join("?" for _ in chunk)
        rows = conn.execute(
            f'SELECT rec_id, "{to_standard}" FROM records WHERE rec_id IN ({marks})', chunk
        ).fetchall()
        for rec_id, value in rows:
            first = value.split(";")[0].strip() if value else None
            rec_value[rec_id] = first or None
    for ident, rec_id in id_to_rec.items():
        result[ident] = rec_value.get(rec_id)
    return result


def get_mapping_record(handle: StoreHandle, ident: str, standard: str) -> dict | None:
    """Full equivalence record for one id, or None."""
    conn = _require(handle, "mappings")
    standards = housed_standards(handle)
    if standard not in standards:
        raise StoreError(f"standard '{standard}' not housed in mappings store")
    row = conn.execute(
        "SELECT rec_id FROM keys WHERE standard = ? AND id = ? ORDER BY rec_id LIMIT 1", (standard, ident)
    ).fetchone()
    if row is None:
        return None
    cols = ", ".join(f'"{s}"' for s in standards)
    values = conn.execute(f"SELECT {cols} FROM records WHERE rec_id = ?", (row[0],)).fetchone()
    return {s: (v or None) for s, v in zip(standards, values)}


def _assembly_from_row(row) -> AssemblyRecord:
    accession, taxid, organism, annotation, source_db, missing = row
    return AssemblyRecord(
        assembly_accession=accession,
        taxid=taxid,
        organism_name=organism,
        annotation_file=annotation,
        source_db=source_db,
        file_missing=bool(missing),
    )


def lookup_assembly(handle: StoreHandle, protein_codes) -> dict:
    """code -> AssemblyRecord list (sorted by accession); unknown codes get
    an empty list."""
    conn = _require(handle, "assemblies")
    result = {c: [] for c in protein_codes}
    wanted = sorted(result)
    for chunk in _chunks(wanted):
        marks = ", ".join("?" for _ in chunk)
        rows = conn.execute(
            "SELECT l.code, a.accession, a.taxid, a.organism, a.annotation_file, a.source_db, a.file_missing"
            f" FROM protein_links l JOIN assemblies a ON a.accession = l.accession WHERE l.code IN ({marks})"
            " ORDER BY l.code, a.accession",
            chunk,
        ).fetchall()
        for row in rows:
            result[row[0]].append(_assembly_from_row(row[1:]))
    return result


def get_assembly_records(handle: StoreHandle, accessions) -> dict:
    """accession -> AssemblyRecord or None."""
    conn = _require(handle, "assemblies")
    result = {a: None for a in accessions}
    for chunk in _chunks(sorted(result)):
        marks = ", ".join("?" for _ in chunk)
        rows = conn.execute(
            "SELECT accession, taxid, organism, annotation_file, source_db, file_missing"
            f" FROM assemblies WHERE accession IN ({marks})",
            chunk,
        ).fetchall()
        for row in rows:
            result[row[0]] = _assembly_from_row(row)
    return result


def assembly_gff_root(handle: StoreHandle) -> Path:
    _require(handle, "assemblies")
    return Path(handle.meta["gff_root"])


def fetch_sequences(handle: StoreHandle, protein_codes) -> dict:
    """code -> sequence or None, batched."""
    conn = _require(handle, "sequences")
    result = {c: None for c in protein_codes}
    for chunk in _chunks(sorted(result)):
        marks = ", ".join("?" for _ in chunk)
        rows = conn.execute(f"SELECT code, sequence FROM sequences WHERE code IN ({marks})", chunk).fetchall()
        for code, seq in rows:
            result[code] = seq
    return result


_TAXONOMY_LOAD_COUNT = 0


def taxonomy_load_count() -> int:
    """How many times a taxonomy table has been loaded in this process.
    The pipeline must load it exactly once per run."""
    return _TAXONOMY_LOAD_COUNT


class TaxonomyTable:
    """The ranked-lineage table as one pandas frame indexed by taxid."""

    RANKS = ("tax_name", "species", "genus", "family", "order", "class", "phylum", "kingdom", "superkingdom")

    def __init__(self, frame: pd.DataFrame):
        self.frame = frame

    @property
    def n_records(self) -> int:
        return len(self.frame)

    def join(self, taxids) -> pd.DataFrame:
        """Batch join: one row per input taxid, rank columns empty-string
        filled, plus a boolean `found` column."""
        left = pd.DataFrame({"taxid": pd.Series(list(taxids), dtype="int64")})
        merged = left.merge(self.frame, how="left", left_on="taxid", right_index=True)
        merged["found"] = merged["tax_name"].notna()
        for rank in self.RANKS:
            merged[rank] = merged[rank].fillna("")
        return merged

    def lookup_batch(self, taxids) -> dict:
        """taxid -> {rank: value} for found taxids only."""
        joined = self.join(taxids)
        out = {}
        for i in range(len(joined)):
            if bool(joined["found"].iat[i]):
                taxid = int(joined["taxid"].iat[i])
                out[taxid] = {rank: str(joined[rank].iat[i]) for rank in self.RANKS}
        return out


def load_taxonomy_table(data_dir) -> TaxonomyTable:
    """One-pass load of rankedlineage.tbl; increments the load probe."""
    global _TAXONOMY_LOAD_COUNT
    path = Path(data_dir) / STORE_FILENAMES["taxonomy"]
    if not path.is_file():
        raise StoreError(f"taxonomy table not found: {path}")
    frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False, na_values=[])
    expected = ["taxid", *TaxonomyTable.RANKS]
    if list(frame.columns) != expected:
        raise StoreError(f"{path}: unexpected column layout {list(frame.columns)}")
    frame["taxid"] = frame["taxid"].astype("int64")
    frame = frame.drop_duplicates(subset="taxid", keep="first").set_index("taxid", drop=True)
    _TAXONOMY_LOAD_COUNT += 1
    return TaxonomyTable(frame)
