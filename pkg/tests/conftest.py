"""Session fixtures: mini-dataset stores and a canonical pipeline run."""

import pytest

from pathlib import Path

from gcontext import ingest
from gcontext.config import parse_config
from gcontext.pipeline import run_pipeline

ROOT = Path(__file__).resolve().parent.parent
RAW = ROOT / "data" / "mini" / "raw"
GOLDEN = ROOT / "tests" / "golden" / "mini"

# profile.json and gantt.csv carry wall-clock timings and are compared
# structurally, never byte-wise.
GOLDEN_FILES = (
    "contexts.json",
    "contexts.svg",
    "families.tsv",
    "operons.tsv",
    "taxonomy_tree.json",
    "unresolved.tsv",
)


def build_mini_stores(data_dir) -> dict:
    """Ingest the raw mini dataset into data_dir; returns the manifests."""
    return {
        "mappings": ingest.build_mappings_store(
            RAW / "idmapping_selected.tab.gz", data_dir),
        "assemblies": ingest.build_assemblies_store(
            [RAW / "assembly_summary_refseq.txt",
             RAW / "assembly_summary_genbank.txt"],
            RAW / "gff", data_dir),
        "sequences": ingest.build_sequences_store(
            [RAW / "proteins.faa.gz", RAW / "proteins_extra.faa"], data_dir),
        "taxonomy": ingest.build_taxonomy_table(
            RAW / "rankedlineage.dmp", data_dir),
    }


def run_mini(data_dir, out_dir, **overrides):
    """Run the pipeline on the mini dataset with the pinned golden config."""
    argv = [
        "--targets", str(RAW / "targets.txt"),
        "--out", str(out_dir),
        "--data", str(data_dir),
        "--annotation", f"pdb_structure={RAW / 'annotations' / 'pdb_structures.tsv'}",
        "--annotation", f"function={RAW / 'annotations' / 'functions.tsv'}",
        "--log-level", "warning",
    ]
    for key, value in overrides.items():
        argv += [f"--{key.replace('_', '-')}", str(value)]
    return run_pipeline(parse_config(argv))


@pytest.fixture(scope="session")
def mini_manifests(tmp_path_factory):
    data_dir = tmp_path_factory.mktemp("mini-data")
    return data_dir, build_mini_stores(data_dir)


@pytest.fixture(scope="session")
def mini_data(mini_manifests):
    return mini_manifests[0]


@pytest.fixture(scope="session")
def mini_run(mini_data, tmp_path_factory):
    """One canonical single-worker run, shared by read-only tests."""
    out_dir = tmp_path_factory.mktemp("mini-out")
    report = run_mini(mini_data, out_dir)
    return out_dir, report
