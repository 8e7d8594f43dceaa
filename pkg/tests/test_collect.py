"""Tests for target resolution, GFF parsing, and flanking extraction."""

import gzip

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcontext import stores
from gcontext.collect import (
    FILE_MISSING,
    NO_ASSEMBLY,
    NOT_ANNOTATED,
    Gene,
    GenomicContext,
    build_work_units,
    choose_assembly,
    extract_flanking,
    flanking_for_unit,
    parse_gff_cds,
    resolve_targets,
)
from gcontext.errors import DataError
from gcontext.stores import AssemblyRecord
from gcontext.targets import Target


GFF_LINE = ("ctg1\tminiature\tCDS\t100\t400\t.\t+\t0\t"
            "ID=cds-XYZ_01;protein_id=WP_000000001.1;product=demo protein\n")


def write_gff(path, body, gz=False):
    text = "##gff-version 3\n" + body
    if gz:
        with gzip.open(path, "wt") as fh:
            fh.write(text)
    else:
        path.write_text(text)
    return path


def test_parse_single_cds(tmp_path):
    gff = write_gff(tmp_path / "a.gff", GFF_LINE)
    genes = parse_gff_cds(gff)
    assert genes == [Gene("WP_000000001.1", "ctg1", 100, 400, "+", "demo protein")]


def test_parse_gzipped_equals_plain(tmp_path):
    plain = write_gff(tmp_path / "a.gff", GFF_LINE)
    zipped = write_gff(tmp_path / "a.gff.gz", GFF_LINE, gz=True)
    assert parse_gff_cds(plain) == parse_gff_cds(zipped)


def test_parse_merges_split_cds(tmp_path):
    body = (
        "c\tx\tCDS\t100\t200\t.\t+\t0\tprotein_id=WP_1.1\n"
        "c\tx\tCDS\t250\t400\t.\t+\t2\tprotein_id=WP_1.1;product=joined\n"
    )
    genes = parse_gff_cds(write_gff(tmp_path / "a.gff", body))
    assert len(genes) == 1
    assert (genes[0].start, genes[0].end) == (100, 400)
    assert genes[0].product == "joined"


def test_parse_skips_non_cds_and_broken_rows(tmp_path):
    body = (
        "c\tx\tgene\t100\t400\t.\t+\t.\tID=gene-1\n"
        "c\tx\tCDS\t100\tnotanumber\t.\t+\t0\tprotein_id=WP_1.1\n"
        "c\tx\tCDS\t100\t400\t.\t?\t0\tprotein_id=WP_2.1\n"
        "too\tfew\tcolumns\n"
        "c\tx\tCDS\t100\t400\t.\t+\t0\tproduct=anonymous\n"
        "c\tx\tCDS\t500\t900\t.\t-\t0\tprotein_id=WP_3.1\n"
    )
    genes = parse_gff_cds(write_gff(tmp_path / "a.gff", body))
    assert [g.protein_code for g in genes] == ["WP_3.1"]


def test_parse_decodes_percent_escapes(tmp_path):
    body = "c\tx\tCDS\t1\t9\t.\t+\t0\tprotein_id=WP_1.1;product=helix%2C winged\n"
    genes = parse_gff_cds(write_gff(tmp_path / "a.gff", body))
    assert genes[0].product == "helix, winged"


def test_parse_code_precedence(tmp_path):
    body = (
        "c\tx\tCDS\t1\t9\t.\t+\t0\tID=cds-A1;Name=NAME1;protein_id=PID1\n"
        "c\tx\tCDS\t20\t29\t.\t+\t0\tID=cds-A2;Name=NAME2\n"
        "c\tx\tCDS\t40\t49\t.\t+\t0\tID=cds-A3\n"
    )
    genes = parse_gff_cds(write_gff(tmp_path / "a.gff", body))
    assert [g.protein_code for g in genes] == ["PID1", "NAME2", "A3"]


def test_parse_sorted_by_contig_then_start(tmp_path):
    body = (
        "c2\tx\tCDS\t50\t80\t.\t+\t0\tprotein_id=B\n"
        "c1\tx\tCDS\t300\t400\t.\t+\t0\tprotein_id=C\n"
        "c1\tx\tCDS\t10\t20\t.\t+\t0\tprotein_id=A\n"
    )
    genes = parse_gff_cds(write_gff(tmp_path / "a.gff", body))
    assert [g.protein_code for g in genes] == ["A", "C", "B"]


def test_parse_missing_file_raises(tmp_path):
    with pytest.raises(DataError, match="cannot parse annotation file"):
        parse_gff_cds(tmp_path / "ghost.gff")


def make_contig(codes, strand="+"):
    return [Gene(code, "ctg", 100 * (i + 1), 100 * (i + 1) + 50, strand)
            for i, code in enumerate(codes)]


def test_flanking_plus_strand_window():
    genes = make_contig(["g0", "g1", "g2", "g3", "g4", "g5", "g6"])
    out, complete = extract_flanking(genes, "g3", 2, 2)
    assert [g.protein_code for g in out] == ["g1", "g2", "g3", "g4", "g5"]
    assert [g.relative_position for g in out] == [-2, -1, 0, 1, 2]
    assert complete is True


def test_flanking_truncated_at_contig_edge():
    genes = make_contig(["g0", "g1", "g2"])
    out, complete = extract_flanking(genes, "g0", 2, 2)
    assert [g.protein_code for g in out] == ["g0", "g1", "g2"]
    assert complete is False


def test_flanking_minus_strand_reverses_orientation():
    # Positional neighbors A (left) and B (right) of a - strand target:
    # A is biologically downstream, B upstream.
    genes = make_contig(["A", "T", "B"], strand="-")
    out, complete = extract_flanking(genes, "T", 1, 1)
    assert [(g.protein_code, g.relative_position) for g in out] == [
        ("B", -1), ("T", 0), ("A", 1)]
    assert complete is True


def test_flanking_ignores_other_contigs():
    near = Gene("far", "ctg2", 100, 150, "+")
    genes = make_contig(["g0", "g1", "g2"]) + [near]
    out, complete = extract_flanking(genes, "g2", 1, 1)
    assert [g.protein_code for g in out] == ["g1", "g2"]
    assert complete is False


def test_flanking_unknown_target_raises():
    with pytest.raises(DataError, match="not annotated"):
        extract_flanking(make_contig(["a"]), "zz", 1, 1)


def naive_flanking(genes, target_code, n_up, n_down):
    """Independent oracle: index arithmetic on the positional list."""
    target = next(g for g in genes if g.protein_code == target_code)
    contig = [g for g in genes if g.contig == target.contig]
    i = next(k for k, g in enumerate(contig) if g is target)
    if target.strand == "-":
        lo, hi = max(0, i - n_down), min(len(contig), i + n_up + 1)
        window = contig[lo:hi][::-1]
    else:
        lo, hi = max(0, i - n_up), min(len(contig), i + n_down + 1)
        window = contig[lo:hi]
    t = next(k for k, g in enumerate(window) if g is target)
    rel = [k - t for k in range(len(window))]
    complete = (hi - lo) == n_up + n_down + 1
    return [g.protein_code for g in window], rel, complete


@settings(max_examples=300, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=15),
    t_idx=st.integers(min_value=0, max_value=14),
    n_up=st.integers(min_value=0, max_value=6),
    n_down=st.integers(min_value=0, max_value=6),
    strand=st.sampled_from("+-"),
)
def test_flanking_matches_naive_oracle(n, t_idx, n_up, n_down, strand):
    t_idx %= n
    genes = make_contig([f"g{i}" for i in range(n)], strand=strand)
    out, complete = extract_flanking(genes, f"g{t_idx}", n_up, n_down)
    codes, rel, want_complete = naive_flanking(genes, f"g{t_idx}", n_up, n_down)
    assert [g.protein_code for g in out] == codes
    assert [g.relative_position for g in out] == rel
    assert complete == want_complete


def _rec(acc, source):
    return AssemblyRecord(assembly_accession=acc, taxid=1, organism_name="x",
                          annotation_file=f"{acc}.gff", source_db=source)


def test_choose_assembly_prefers_refseq_then_accession():
    recs = [_rec("GCA_000001.1", "GenBank"), _rec("GCF_000009.1", "RefSeq"),
            _rec("GCF_000002.1", "RefSeq")]
    assert choose_assembly(recs).assembly_accession == "GCF_000002.1"
    only_genbank = [_rec("GCA_000005.1", "GenBank"), _rec("GCA_000001.1", "GenBank")]
    assert choose_assembly(only_genbank).assembly_accession == "GCA_000001.1"


def test_resolve_targets_against_mini_store(mini_data):
    handle = stores.open_store(mini_data, "mappings")
    try:
        targets = [
            Target("WP_000100010.1", "RefSeq", source_label="t.txt"),
            Target("P23002", "UniProtKB-AC", source_label="t.txt"),
            Target("Q54321", "UniProtKB-AC", source_label="t.txt"),
            Target("hypothetical-orf-12", "Unknown", source_label="t.txt"),
        ]
        resolved, unresolved = resolve_targets(targets, handle)
        assert [(t.raw_id, t.canonical_code) for t in resolved] == [
            ("WP_000100010.1", "WP_000100010.1"),
            ("P23002", "WP_000500011.1"),
        ]
        assert [t.raw_id for t in unresolved] == ["Q54321", "hypothetical-orf-12"]
    finally:
        handle.close()


def test_build_work_units_marks_missing_assembly(mini_data):
    handle = stores.open_store(mini_data, "assemblies")
    try:
        targets = [
            Target("WP_000100010.1", "RefSeq", "WP_000100010.1"),
            Target("WP_888888888.1", "RefSeq", "WP_888888888.1"),
        ]
        units = build_work_units(targets, handle)
        assert units[0]["accession"] == "GCF_000001.1"
        assert units[1]["accession"] is None
    finally:
        handle.close()


def test_flanking_for_unit_no_assembly(tmp_path):
    unit = {"raw_id": "x", "canonical_code": "x", "accession": None}
    got = flanking_for_unit(unit, tmp_path, 2, 2)
    assert got == {"genes": [], "complete": False, "failure": NO_ASSEMBLY}


def test_flanking_for_unit_file_missing_flag(tmp_path):
    unit = {"raw_id": "x", "canonical_code": "x", "accession": "GCF_1",
            "annotation_file": "gone.gff", "file_missing": True}
    got = flanking_for_unit(unit, tmp_path, 2, 2)
    assert got["failure"] == FILE_MISSING


def test_flanking_for_unit_unreadable_file(tmp_path):
    unit = {"raw_id": "x", "canonical_code": "x", "accession": "GCF_1",
            "annotation_file": "gone.gff", "file_missing": False}
    got = flanking_for_unit(unit, tmp_path, 2, 2)
    assert got["failure"] == FILE_MISSING


def test_flanking_for_unit_not_annotated(tmp_path):
    write_gff(tmp_path / "a.gff", GFF_LINE)
    unit = {"raw_id": "x", "canonical_code": "WP_OTHER.1", "accession": "GCF_1",
            "annotation_file": "a.gff", "file_missing": False}
    got = flanking_for_unit(unit, tmp_path, 2, 2)
    assert got["failure"] == NOT_ANNOTATED


def test_flanking_for_unit_uses_cache(tmp_path):
    write_gff(tmp_path / "a.gff", GFF_LINE)
    unit = {"raw_id": "x", "canonical_code": "WP_000000001.1", "accession": "GCF_1",
            "annotation_file": "a.gff", "file_missing": False}
    cache = {}
    first = flanking_for_unit(unit, tmp_path, 0, 0, cache=cache)
    assert first["failure"] is None
    assert len(cache) == 1
    (tmp_path / "a.gff").unlink()  # second call must be served from the cache
    second = flanking_for_unit(unit, tmp_path, 0, 0, cache=cache)
    assert second == first


def test_context_roundtrip():
    ctx = GenomicContext(
        target=Target("P1", "UniProtKB-AC", "WP_9.1", "t.txt"),
        assembly_accession="GCF_9.1",
        genes=[Gene("WP_9.1", "c", 1, 9, "+", "p", 0)],
        sequences={"WP_9.1": "MK"},
        complete=True,
        family_ids={"WP_9.1": 3},
        operon_type=1,
        lineage={"genus": "Escherichia"},
    )
    again = GenomicContext.from_dict(ctx.to_dict())
    assert again.to_dict() == ctx.to_dict()
    assert again.ok and again.codes() == ["WP_9.1"]
