"""Step 3: operon typing, taxonomy lineages and tree, user annotations.

Operon similarity is the Jaccard overlap of family-id fingerprints; two
contexts with empty fingerprints are at distance 1 (no shared evidence), so
all-unknown contexts never collapse into one type. The taxonomy table is
loaded once per run and joined against all contexts in one batch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .families import UNASSIGNED_FAMILY, DistanceMatrix, single_linkage
from .stores import get_assembly_records

logger = logging.getLogger(__name__)

LINEAGE_RANKS = ("superkingdom", "phylum", "class", "order", "genus", "species")

FAMILY_ANNOTATION_KINDS = ("pdb_structure", "function")
MEMBER_ANNOTATION_KINDS = ("tm_segments", "signal_peptide")


@dataclass
class Lineage:
    taxid: int
    superkingdom: str = ""
    phylum: str = ""
    class_: str = ""
    order: str = ""
    genus: str = ""
    species: str = ""
    found: bool = True

    def to_dict(self) -> dict:
        return {
            "taxid": self.taxid,
            "superkingdom": self.superkingdom,
            "phylum": self.phylum,
            "class": self.class_,
            "order": self.order,
            "genus": self.genus,
            "species": self.species,
            "found": self.found,
        }


@dataclass
class OperonType:
    operon_id: int
    member_targets: list  # raw target ids, sorted
    fingerprint: list  # family ids shared by every member context


@dataclass
class UserAnnotation:
    kind: str
    code: str
    payload: str
    source: str = ""


def context_fingerprint(ctx) -> list:
    """Sorted distinct family ids of the context; the -1 sentinel is not
    evidence and is excluded."""
    return sorted({fid for fid in ctx.family_ids.values() if fid != UNASSIGNED_FAMILY})


def jaccard_distance(a, b) -> float:
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 1.0  # two empty fingerprints share no evidence
    return 1.0 - len(sa & sb) / len(union)


def cluster_operons(contexts, cutoff: float) -> list:
    """Group ok contexts into operon types by fingerprint similarity.

    Returns OperonTypes numbered by smallest member target, ascending, and
    fills operon_type on each member context.
    """
    eligible = [ctx for ctx in contexts if ctx.ok]
    if not eligible:
        return []
    by_target = {}
    for ctx in eligible:
        if ctx.target.raw_id in by_target:
            raise DataError(f"duplicate target raw_id '{ctx.target.raw_id}' in operon clustering")
        by_target[ctx.target.raw_id] = ctx
    labels = sorted(by_target)
    prints = {t: context_fingerprint(by_target[t]) for t in labels}
    n = len(labels)
    values = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = jaccard_distance(prints[labels[i]], prints[labels[j]])
            values[i, j] = values[j, i] = d
    matrix = DistanceMatrix(labels=labels, values=values)
    matrix.validate()
    clusters = single_linkage(matrix, cutoff)
    operons = []
    for fam in clusters:  # already numbered by smallest member, ascending
        members = sorted(fam.members)
        shared = set(prints[members[0]])
        for t in members[1:]:
            shared &= set(prints[t])
        operons.append(OperonType(operon_id=fam.family_id, member_targets=members, fingerprint=sorted(shared)))
        for t in members:
            by_target[t].operon_type = fam.family_id
    return operons


def attach_lineages(contexts, taxonomy_table, assemblies_handle) -> int:
    """Fill lineage on every ok context via assembly -> taxid -> ranked
    lineage, as one batch join. Returns the count of taxids that were not in
    the table (their lineages are empty and flagged)."""
    eligible = [ctx for ctx in contexts if ctx.ok and ctx.assembly_accession]
    accessions = sorted({ctx.assembly_accession for ctx in eligible})
    records = get_assembly_records(assemblies_handle, accessions)
    taxids = sorted({rec.taxid for rec in records.values() if rec is not None})
    found = taxonomy_table.lookup_batch(taxids)
    missing = 0
    for ctx in eligible:
        rec = records.get(ctx.assembly_accession)
        if rec is None:
            continue
        ranks = found.get(rec.taxid)
        if ranks is None:
            missing += 1
            lineage = Lineage(taxid=rec.taxid, found=False)
        else:
            lineage = Lineage(
                taxid=rec.taxid,
                superkingdom=ranks["superkingdom"],
                phylum=ranks["phylum"],
                class_=ranks["class"],
                order=ranks["order"],
                genus=ranks["genus"],
                species=ranks["species"],
            )
        ctx.lineage = lineage.to_dict()
    if missing:
        logger.warning("%d context(s) have taxids absent from the taxonomy table", missing)
    return missing


def build_taxonomy_tree(contexts) -> dict:
    """Nest contexts by rank: superkingdom > phylum > class > order > genus >
    species -> sorted target list. Empty rank values group under 'unknown'."""
    tree: dict = {}
    for ctx in contexts:
        if ctx.lineage is None:
            continue
        node = tree
        for rank in LINEAGE_RANKS[:-1]:
            key = ctx.lineage.get(rank) or "unknown"
            node = node.setdefault(key, {})
        leaf_key = ctx.lineage.get(LINEAGE_RANKS[-1]) or "unknown"
        node.setdefault(leaf_key, []).append(ctx.target.raw_id)
    def _sort_leaves(node):
        for key, child in node.items():
            if isinstance(child, list):
                child.sort()
            else:
                _sort_leaves(child)
    _sort_leaves(tree)
    return tree


def parse_annotation_file(path, kind: str):
    """TSV `code<TAB>payload` with # comments; returns (annotations,
    malformed count)."""
    annotations = []
    malformed = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cells = line.split("\t")
            if len(cells) != 2 or not cells[0].strip() or not cells[1].strip():
                malformed += 1
                continue
            annotations.append(UserAnnotation(kind=kind, code=cells[0].strip(), payload=cells[1].strip(), source=str(path)))
    return annotations, malformed


def apply_user_annotations(contexts, families, annotation_files: dict) -> dict:
    """Join user annotation files onto families and members.

    Family-level kinds (pdb_structure, function) attach to a family via any
    member code; member-level kinds (tm_segments, signal_peptide) attach to
    the member itself. Returns the annotation tables plus unmatched and
    malformed counters. No files is a valid, empty result.
    """
    code_to_family: dict[str, int] = {}
    for fam in families:
        for code in fam.members:
            code_to_family[code] = fam.family_id
    known_codes = set(code_to_family)
    for ctx in contexts:
        known_codes.update(ctx.codes())

    tables: dict = {
        "families": {},
        "members": {},
        "unmatched": 0,
        "malformed": 0,
        "sources": {},
    }
    for kind in sorted(annotation_files):
        path = annotation_files[kind]
        if kind not in FAMILY_ANNOTATION_KINDS + MEMBER_ANNOTATION_KINDS:
            raise DataError(f"unknown annotation kind '{kind}'")
        annotations, malformed = parse_annotation_file(path, kind)
        tables["malformed"] += malformed
        tables["sources"][kind] = str(path)
        for ann in annotations:
            if kind in FAMILY_ANNOTATION_KINDS:
                fam_id = code_to_family.get(ann.code)
                if fam_id is None:
                    tables["unmatched"] += 1
                    continue
                slot = tables["families"].setdefault(fam_id, {k: [] for k in FAMILY_ANNOTATION_KINDS})
                if ann.payload not in slot[kind]:
                    slot[kind].append(ann.payload)
            else:
                if ann.code not in known_codes:
                    tables["unmatched"] += 1
                    continue
                slot = tables["members"].setdefault(ann.code, {k: [] for k in MEMBER_ANNOTATION_KINDS})
                if ann.payload not in slot[kind]:
                    slot[kind].append(ann.payload)
    for slot in tables["families"].values():
        for kind in FAMILY_ANNOTATION_KINDS:
            slot[kind].sort()
    for slot in tables["members"].values():
        for kind in MEMBER_ANNOTATION_KINDS:
            slot[kind].sort()
    return tables
