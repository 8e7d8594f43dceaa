"""Step 1: resolve targets, locate assemblies, parse annotation files, and
extract flanking genes.

Flanking distance is measured in gene count on the same contig. For targets
encoded on the `-` strand the neighbor order is reversed so that negative
relative positions are always biological upstream.
"""

from __future__ import annotations

import gzip
import logging
import urllib.parse
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import DataError
from .stores import AssemblyRecord, assembly_gff_root, fetch_sequences, lookup_assembly, map_ids
from .targets import Target

logger = logging.getLogger(__name__)

# context failure flags; a flagged context is excluded from Steps 2-3
NO_ASSEMBLY = "no_assembly"
FILE_MISSING = "file_missing"
NOT_ANNOTATED = "not_annotated"

_PASSTHROUGH_STANDARDS = ("RefSeq", "GenBank")


@dataclass
class Gene:
    protein_code: str
    contig: str
    start: int  # 1-based, inclusive
    end: int
    strand: str  # + | -
    product: str = ""
    relative_position: int = 0  # 0 = target, negative upstream

    def to_dict(self) -> dict:
        return {
            "protein_code": self.protein_code,
            "contig": self.contig,
            "start": self.start,
            "end": self.end,
            "strand": self.strand,
            "product": self.product,
            "relative_position": self.relative_position,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Gene":
        return cls(
            protein_code=d["protein_code"],
            contig=d["contig"],
            start=d["start"],
            end=d["end"],
            strand=d["strand"],
            product=d.get("product", ""),
            relative_position=d.get("relative_position", 0),
        )


@dataclass
class GenomicContext:
    target: Target
    assembly_accession: str = ""
    genes: list = field(default_factory=list)  # ordered by relative_position
    sequences: dict = field(default_factory=dict)  # protein_code -> sequence
    complete: bool = False
    family_ids: dict = field(default_factory=dict)  # protein_code -> family id
    operon_type: int | None = None
    lineage: dict | None = None
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None

    def codes(self) -> list:
        return [g.protein_code for g in self.genes]

    def to_dict(self) -> dict:
        return {
            "target": self.target.to_dict(),
            "assembly_accession": self.assembly_accession,
            "genes": [g.to_dict() for g in self.genes],
            "sequences": dict(sorted(self.sequences.items())),
            "complete": self.complete,
            "family_ids": dict(sorted(self.family_ids.items())),
            "operon_type": self.operon_type,
            "lineage": self.lineage,
            "failure": self.failure,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenomicContext":
        return cls(
            target=Target.from_dict(d["target"]),
            assembly_accession=d.get("assembly_accession", ""),
            genes=[Gene.from_dict(g) for g in d.get("genes", [])],
            sequences=dict(d.get("sequences", {})),
            complete=d.get("complete", False),
            family_ids={k: int(v) for k, v in d.get("family_ids", {}).items()},
            operon_type=d.get("operon_type"),
            lineage=d.get("lineage"),
            failure=d.get("failure"),
        )


def resolve_targets(targets, mappings_handle):
    """Fill canonical_code on each target; returns (resolved, unresolved).

    RefSeq/GenBank ids pass through as their own canonical code; other
    standards are translated via the mappings store. Unknown-standard and
    unmappable ids land in the unresolved list.
    """
    resolved: list[Target] = []
    unresolved: list[Target] = []
    by_standard: dict[str, list[str]] = {}
    for t in targets:
        if t.id_standard in _PASSTHROUGH_STANDARDS:
            continue
        if t.id_standard != "Unknown":
            by_standard.setdefault(t.id_standard, []).append(t.raw_id)
    translations: dict[str, dict] = {}
    for standard, ids in by_standard.items():
        translations[standard] = map_ids(mappings_handle, ids, standard, "RefSeq")
    for t in targets:
        if t.id_standard in _PASSTHROUGH_STANDARDS:
            resolved.append(replace(t, canonical_code=t.raw_id))
        elif t.id_standard == "Unknown":
            unresolved.append(t)
        else:
            code = translations[t.id_standard].get(t.raw_id)
            if code:
                resolved.append(replace(t, canonical_code=code))
            else:
                unresolved.append(t)
    return resolved, unresolved


def _attr_map(attr_col: str) -> dict:
    attrs = {}
    for part in attr_col.split(";"):
        part = part.strip()
        if not part or "=" not in part:
            continue
        key, _, value = part.partition("=")
        attrs[key.strip()] = urllib.parse.unquote(value.strip())
    return attrs


def _protein_code(attrs: dict) -> str | None:
    if attrs.get("protein_id"):
        return attrs["protein_id"]
    if attrs.get("Name"):
        return attrs["Name"]
    ident = attrs.get("ID")
    if ident:
        return ident[4:] if ident.startswith("cds-") else ident
    return None


def parse_gff_cds(gff_path) -> list:
    """CDS features of a GFF3 file (optionally gzipped) as Genes sorted by
    (contig, start). Multi-line CDS sharing a protein id on one contig are
    merged to min(start)/max(end). Features without a protein identifier are
    skipped."""
    gff_path = Path(gff_path)
    merged: dict[tuple, Gene] = {}
    try:
        opener = gzip.open if gff_path.suffix == ".gz" else open
        with opener(gff_path, "rt", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip() or line.startswith("#"):
                    continue
                cols = line.rstrip("\n").split("\t")
                if len(cols) != 9 or cols[2] != "CDS":
                    continue
                try:
                    start, end = int(cols[3]), int(cols[4])
                except ValueError:
                    continue
                strand = cols[6]
                if strand not in ("+", "-") or end < start:
                    continue
                attrs = _attr_map(cols[8])
                code = _protein_code(attrs)
                if not code:
                    continue
                product = attrs.get("product", "")
                key = (cols[0], code)
                gene = merged.get(key)
                if gene is None:
                    merged[key] = Gene(code, cols[0], start, end, strand, product)
                else:
                    gene.start = min(gene.start, start)
                    gene.end = max(gene.end, end)
                    if not gene.product:
                        gene.product = product
    except (OSError, gzip.BadGzipFile, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse annotation file {gff_path}: {exc}") from exc
    return sorted(merged.values(), key=lambda g: (g.contig, g.start, g.protein_code))


def extract_flanking(genes, target_code: str, n_up: int, n_down: int):
    """Select the target plus its n_up/n_down neighbors on the same contig.

    Returns (genes ordered by relative_position, complete). Upstream means
    biological upstream: on the `-` strand, positional order is reversed.
    """
    target = None
    for g in genes:
        if g.protein_code == target_code:
            target = g
            break
    if target is None:
        raise DataError(f"target {target_code} not annotated in assembly")
    contig_genes = [g for g in genes if g.contig == target.contig]
    idx = next(i for i, g in enumerate(contig_genes) if g is target)
    if target.strand == "-":
        before_n, after_n = n_down, n_up  # positional-before is biological downstream
    else:
        before_n, after_n = n_up, n_down
    before = contig_genes[max(0, idx - before_n) : idx]
    after = contig_genes[idx + 1 : idx + 1 + after_n]
    complete = len(before) == before_n and len(after) == after_n
    if target.strand == "-":
        ordered = list(reversed(after)) + [target] + list(reversed(before))
    else:
        ordered = before + [target] + after
    t_index = len(after) if target.strand == "-" else len(before)
    out = [replace(g, relative_position=i - t_index) for i, g in enumerate(ordered)]
    return out, complete


def flanking_for_unit(unit: dict, gff_root, n_up: int, n_down: int, cache: dict | None = None) -> dict:
    """Per-target work: parse (cached) GFF, extract flanking genes.

    Pure with respect to shared state; safe as an executor task body. The
    cache maps absolute annotation paths to parsed gene lists and belongs to
    one worker."""
    if unit.get("accession") is None:
        return {"genes": [], "complete": False, "failure": NO_ASSEMBLY}
    if unit.get("file_missing"):
        return {"genes": [], "complete": False, "failure": FILE_MISSING}
    path = Path(gff_root) / unit["annotation_file"]
    key = str(path)
    genes = cache.get(key) if cache is not None else None
    if genes is None:
        try:
            genes = parse_gff_cds(path)
        except DataError:
            logger.warning("annotation file unreadable at runtime: %s", path)
            return {"genes": [], "complete": False, "failure": FILE_MISSING}
        if cache is not None:
            cache[key] = genes
    try:
        flanked, complete = extract_flanking(genes, unit["canonical_code"], n_up, n_down)
    except DataError:
        return {"genes": [], "complete": False, "failure": NOT_ANNOTATED}
    return {"genes": [g.to_dict() for g in flanked], "complete": complete, "failure": None}


def choose_assembly(records) -> AssemblyRecord:
    """Deterministic pick among multiple assemblies: RefSeq before GenBank,
    then smallest accession."""
    return min(records, key=lambda r: (0 if r.source_db == "RefSeq" else 1, r.assembly_accession))


def build_work_units(resolved_targets, assemblies_handle) -> list:
    codes = sorted({t.canonical_code for t in resolved_targets})
    links = lookup_assembly(assemblies_handle, codes)
    units = []
    for t in resolved_targets:
        recs = links.get(t.canonical_code) or []
        unit = {"raw_id": t.raw_id, "canonical_code": t.canonical_code, "accession": None}
        if recs:
            best = choose_assembly(recs)
            unit.update(
                accession=best.assembly_accession,
                annotation_file=best.annotation_file,
                file_missing=best.file_missing,
            )
        units.append(unit)
    return units


def collect_contexts(resolved_targets, cfg, store_handles: dict, pool=None, profiler=None) -> list:
    """Build one GenomicContext per resolved target, in input order.

    store_handles needs "assemblies" and "sequences". With a pool, the
    parse/flank step is distributed; serially it runs in-process with a
    shared parse cache. Per-target failures become context flags, never
    exceptions.
    """

    def step(name, thunk, parallel=False):
        if profiler is not None:
            return profiler.record_step(name, thunk, parallel=parallel)
        return thunk()

    h_asm = store_handles["assemblies"]
    h_seq = store_handles["sequences"]

    units = step("assemblies", lambda: build_work_units(resolved_targets, h_asm))

    gff_root = str(assembly_gff_root(h_asm))
    n_up, n_down = cfg.n_flanking_up, cfg.n_flanking_down

    def _parse():
        if pool is None:
            cache: dict = {}
            return [flanking_for_unit(u, gff_root, n_up, n_down, cache) for u in units]
        from .executor import ChunkingPolicy

        policy = ChunkingPolicy(cfg.chunking, cfg.dynamic_chunk_size)
        params = {"gff_root": gff_root, "n_up": n_up, "n_down": n_down}
        results, records = pool.parallel_map(units, "gc.parse_flanking", policy, params=params, step="parse_assemblies")
        if profiler is not None:
            profiler.add_task_records(records)
        return results

    parsed = step("parse_assemblies", _parse, parallel=pool is not None)

    contexts = []
    for target, unit, result in zip(resolved_targets, units, parsed):
        contexts.append(
            GenomicContext(
                target=target,
                assembly_accession=unit.get("accession") or "",
                genes=[Gene.from_dict(g) for g in result["genes"]],
                complete=result["complete"],
                failure=result["failure"],
            )
        )

    def _sequences():
        all_codes = sorted({g.protein_code for ctx in contexts if ctx.ok for g in ctx.genes})
        seqs = fetch_sequences(h_seq, all_codes)
        for ctx in contexts:
            if not ctx.ok:
                continue
            ctx.sequences = {c: seqs[c] for c in ctx.codes() if seqs.get(c)}

    step("sequences", _sequences)
    return contexts
