"""Command line entry points.

Subcommands:

  ingest          build a local store from raw source files
  run             run the genomic context pipeline on a target list
  bench           print simulated scheduling makespans
  profile-report  render a text report from a run's profile.json
  worker          join a socket-transport pool as a remote worker
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import RaisingParser, add_run_arguments, config_from_values, read_config_file
from .errors import ConfigError, DataError, GcontextError
from .executor import (
    ChunkingPolicy,
    DISTRIBUTIONS,
    bench_scheduling,
    format_bench_table,
    make_durations,
    parse_endpoint,
    run_socket_worker,
)
from .ingest import (
    build_assemblies_store,
    build_mappings_store,
    build_sequences_store,
    build_taxonomy_table,
)
from .pipeline import run_pipeline
from .profiler import render_report

log = logging.getLogger(__name__)

INGEST_KINDS = ("mappings", "assemblies", "sequences", "taxonomy")


def build_parser() -> argparse.ArgumentParser:
    parser = RaisingParser(prog="gcontext", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p_ingest = sub.add_parser("ingest", help="build a store from raw source files")
    p_ingest.add_argument("--kind", required=True, choices=INGEST_KINDS,
                          help="which store to build")
    p_ingest.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="FILE",
                          help="input file(s); .gz accepted")
    p_ingest.add_argument("--out", required=True, metavar="DATA_DIR",
                          help="directory the store is written into")
    p_ingest.add_argument("--gff-root", default=None, metavar="DIR",
                          help="directory holding per-assembly annotation files "
                               "(required for --kind assemblies)")

    p_run = sub.add_parser("run", help="run the pipeline on a target list")
    add_run_arguments(p_run)

    p_bench = sub.add_parser("bench", help="simulate chunking policies on synthetic workloads")
    p_bench.add_argument("--tasks", type=int, default=200, help="number of tasks (default 200)")
    p_bench.add_argument("--workers", type=int, default=8, help="number of workers (default 8)")
    p_bench.add_argument("--seed", type=int, default=0, help="workload seed (default 0)")
    p_bench.add_argument("--distribution", default="all", choices=DISTRIBUTIONS + ("all",),
                         help="task duration distribution (default all)")
    p_bench.add_argument("--chunk-size", type=int, default=1,
                         help="extra dynamic chunk size to simulate alongside 1")

    p_prof = sub.add_parser("profile-report", help="render a text report for a finished run")
    p_prof.add_argument("run_dir", metavar="RUN_DIR", help="output directory of a previous run")

    p_worker = sub.add_parser("worker", help="connect to a coordinator as a socket worker")
    p_worker.add_argument("--connect", required=True, metavar="HOST:PORT",
                          help="coordinator endpoint to connect to")
    p_worker.add_argument("--worker-id", type=int, required=True,
                          help="identity announced in the handshake")
    p_worker.add_argument("--cores", type=int, default=1,
                          help="cores available to this worker (default 1)")
    p_worker.add_argument("--task-module", action="append", default=None, metavar="MODULE",
                          help="extra module to import for task registration (repeatable)")

    return parser


def cmd_ingest(ns: argparse.Namespace) -> None:
    out_dir = Path(ns.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if ns.kind == "mappings":
        if len(ns.inputs) != 1:
            raise ConfigError("--kind mappings takes exactly one input file")
        manifest = build_mappings_store(ns.inputs[0], out_dir)
    elif ns.kind == "assemblies":
        if not ns.gff_root:
            raise ConfigError("--kind assemblies requires --gff-root")
        manifest = build_assemblies_store(ns.inputs, ns.gff_root, out_dir)
    elif ns.kind == "sequences":
        manifest = build_sequences_store(ns.inputs, out_dir)
    else:
        if len(ns.inputs) != 1:
            raise ConfigError("--kind taxonomy takes exactly one input file")
        manifest = build_taxonomy_table(ns.inputs[0], out_dir)
    print(f"built {manifest.store_name}: {manifest.record_count} records, "
          f"{manifest.malformed_count} malformed rows skipped")


def cmd_run(ns: argparse.Namespace) -> None:
    file_values = read_config_file(ns.config) if ns.config else None
    cfg = config_from_values(vars(ns), file_values)
    logging.getLogger().setLevel(cfg.log_level.upper())
    report = run_pipeline(cfg)
    for line in report.summary_lines():
        print(line)


def cmd_bench(ns: argparse.Namespace) -> None:
    if ns.tasks < 1:
        raise ConfigError("--tasks must be >= 1")
    if ns.workers < 1:
        raise ConfigError("--workers must be >= 1")
    names = DISTRIBUTIONS if ns.distribution == "all" else (ns.distribution,)
    durations = {name: make_durations(name, ns.tasks, ns.seed) for name in names}
    policies = [ChunkingPolicy("static"), ChunkingPolicy("dynamic", 1)]
    if ns.chunk_size != 1:
        policies.append(ChunkingPolicy("dynamic", ns.chunk_size))
    rows = bench_scheduling(durations, ns.workers, policies)
    print(format_bench_table(rows))


def cmd_profile_report(ns: argparse.Namespace) -> None:
    path = Path(ns.run_dir) / "profile.json"
    if not path.is_file():
        raise DataError(f"no profile.json found under {ns.run_dir}")
    profile = json.loads(path.read_text(encoding="utf-8"))
    print(render_report(profile))


def cmd_worker(ns: argparse.Namespace) -> None:
    host, port = parse_endpoint(ns.connect)
    modules = list(ns.task_module or ())
    if "gcontext.tasks" not in modules:
        modules.append("gcontext.tasks")
    log.info("worker %d connecting to %s:%d", ns.worker_id, host, port)
    run_socket_worker(host, port, ns.worker_id, ns.cores, task_modules=tuple(modules))


_HANDLERS = {
    "ingest": cmd_ingest,
    "run": cmd_run,
    "bench": cmd_bench,
    "profile-report": cmd_profile_report,
    "worker": cmd_worker,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        ns = build_parser().parse_args(argv)
        _HANDLERS[ns.command](ns)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except GcontextError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
