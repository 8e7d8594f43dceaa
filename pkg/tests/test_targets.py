"""Tests for target list parsing and ID standard detection."""

import pytest
from hypothesis import given, strategies as st

from gcontext.errors import DataError
from gcontext.targets import (
    ID_STANDARDS,
    Target,
    detect_id_standard,
    matching_standards,
    parse_targets,
)


def test_detect_refseq():
    assert detect_id_standard("WP_000123456.1") == "RefSeq"
    assert detect_id_standard("NP_418483.1") == "RefSeq"
    assert detect_id_standard("YP_009724390") == "RefSeq"
    assert detect_id_standard("XP_011513.2") == "RefSeq"


def test_detect_uniparc():
    assert detect_id_standard("UPI0000000001") == "UniParc"
    assert detect_id_standard("UPI00001234AB") == "UniParc"


def test_detect_uniprot_accession():
    assert detect_id_standard("P0A7G6") == "UniProtKB-AC"
    assert detect_id_standard("Q54321") == "UniProtKB-AC"
    assert detect_id_standard("A0A0B4J2F2") == "UniProtKB-AC"


def test_detect_uniprot_id():
    assert detect_id_standard("RL1_ECOLI") == "UniProtKB-ID"
    assert detect_id_standard("Y0001_MINI") == "UniProtKB-ID"


def test_detect_geneid():
    assert detect_id_standard("944799") == "GeneID"


def test_detect_embl_cds():
    assert detect_id_standard("AAC73112.1") == "EMBL-CDS"
    assert detect_id_standard("AAC73112") == "EMBL-CDS"


def test_detect_genbank():
    # 6-digit runs fall outside the EMBL-CDS shape (exactly 5 digits).
    assert detect_id_standard("CAA901005.1") == "GenBank"
    assert detect_id_standard("U49845.1") == "GenBank"


def test_detect_unknown():
    assert detect_id_standard("hypothetical-orf-12") == "Unknown"
    assert detect_id_standard("") == "Unknown"
    assert detect_id_standard("wp_000123456.1") == "Unknown"


def test_refseq_is_only_match():
    assert matching_standards("WP_000123456.1") == ["RefSeq"]


def test_priority_embl_before_genbank():
    assert matching_standards("AAC73112.1") == ["EMBL-CDS", "GenBank"]


@given(st.text(min_size=1, max_size=20))
def test_detection_matches_first_pattern(raw):
    got = detect_id_standard(raw)
    matches = matching_standards(raw)
    if matches:
        assert got == matches[0]
        assert got == min(matches, key=ID_STANDARDS.index)
    else:
        assert got == "Unknown"


def test_parse_plain_lines(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("P0A7G6\nWP_000123456.1\n")
    targets = parse_targets([p])
    assert [t.raw_id for t in targets] == ["P0A7G6", "WP_000123456.1"]
    assert [t.id_standard for t in targets] == ["UniProtKB-AC", "RefSeq"]
    assert targets[0].source_label is None


def test_parse_fasta_header_token(tmp_path):
    p = tmp_path / "t.fa"
    p.write_text(">WP_000123456.1 hypothetical\nMKVLA\n>P0A7G6\nGG\n")
    targets = parse_targets([p])
    assert [t.raw_id for t in targets] == ["WP_000123456.1", "P0A7G6"]


def test_parse_dedup_keeps_first(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("P0A7G6\nWP_1.1\nP0A7G6\n")
    targets = parse_targets([p])
    assert [t.raw_id for t in targets] == ["P0A7G6", "WP_1.1"]


def test_parse_skips_comments_and_blanks(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("# header\n\nP0A7G6\n   \n# done\n")
    targets = parse_targets([p])
    assert [t.raw_id for t in targets] == ["P0A7G6"]


def test_parse_multiple_files_labeled(tmp_path):
    a = tmp_path / "setA.txt"
    b = tmp_path / "setB.txt"
    a.write_text("P0A7G6\n")
    b.write_text("WP_000123456.1\n")
    targets = parse_targets([a, b])
    assert [t.source_label for t in targets] == ["setA", "setB"]


def test_parse_crlf(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("P0A7G6\r\nWP_1.1\r\n")
    assert [t.raw_id for t in parse_targets([p])] == ["P0A7G6", "WP_1.1"]


def test_parse_empty_file_rejected(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("# only a comment\n")
    with pytest.raises(DataError, match="no targets parsed"):
        parse_targets([p])


def test_parse_missing_file_rejected(tmp_path):
    with pytest.raises(DataError):
        parse_targets([tmp_path / "absent.txt"])


def test_unknown_standard_kept_not_dropped(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("lowercase-junk\nWP_1.1\n")
    targets = parse_targets([p])
    assert len(targets) == 2
    assert targets[0].id_standard == "Unknown"


def test_target_roundtrip_dict():
    t = Target(raw_id="P0A7G6", id_standard="UniProtKB-AC",
               canonical_code="NP_418483.1", source_label="setA")
    assert Target.from_dict(t.to_dict()) == t
