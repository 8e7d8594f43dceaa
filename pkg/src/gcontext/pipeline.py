"""Run orchestration: targets -> collect -> families -> annotate -> output.

The orchestrator is single-threaded; it owns the worker pool and the
profiler. Every stage is wall-timed; stage failures abort the run with a
stage-tagged error and the bundle stays incomplete (no DONE sentinel).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from . import tasks  # noqa: F401  (registers pipeline tasks in this process)
from .annotate import apply_user_annotations, attach_lineages, build_taxonomy_tree, cluster_operons
from .collect import collect_contexts, resolve_targets
from .config import RunConfig
from .errors import GcontextError, StageError
from .executor import ChunkingPolicy, open_pool
from .families import assign_families, find_families
from .output import DONE_SENTINEL, mark_done, write_tables
from .profiler import Profiler
from .stores import load_taxonomy_table, open_store
from .targets import parse_targets

logger = logging.getLogger(__name__)


@dataclass
class ExitReport:
    targets_total: int
    targets_resolved: int
    targets_unresolved: int
    contexts_built: int
    contexts_ok: int
    families_found: int
    operon_types: int
    out_dir: str
    profile_path: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def summary_lines(self) -> list:
        return [
            f"targets: {self.targets_total} ({self.targets_resolved} resolved, {self.targets_unresolved} unresolved)",
            f"contexts: {self.contexts_built} built, {self.contexts_ok} usable",
            f"families: {self.families_found}",
            f"operon types: {self.operon_types}",
            f"output: {self.out_dir}",
            f"profile: {self.profile_path}",
        ]


def run_pipeline(cfg: RunConfig) -> ExitReport:
    profiler = Profiler()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stale = out_dir / DONE_SENTINEL
    if stale.exists():
        stale.unlink()  # this run decides completeness afresh

    def staged(name, thunk, parallel=False):
        try:
            return profiler.record_step(name, thunk, parallel=parallel)
        except StageError:
            raise
        except GcontextError as exc:
            raise StageError(name, str(exc)) from exc

    targets = parse_targets([cfg.targets_path])
    handles = {}
    pool = None
    try:
        for name in ("mappings", "assemblies", "sequences"):
            handles[name] = open_store(cfg.data_dir, name)
        pool = open_pool(
            cfg.transport,
            cfg.workers,
            cores_per_worker=cfg.cores_per_worker,
            listen=cfg.listen,
            task_modules=("gcontext.tasks",),
        )
        policy = ChunkingPolicy(cfg.chunking, cfg.dynamic_chunk_size)

        resolved, unresolved = staged("mapping", lambda: resolve_targets(targets, handles["mappings"]))
        logger.info("resolved %d/%d targets", len(resolved), len(targets))

        # records its own assemblies / parse_assemblies / sequences steps
        try:
            contexts = collect_contexts(resolved, cfg, handles, pool=pool, profiler=profiler)
        except StageError:
            raise
        except GcontextError as exc:
            raise StageError("parse_assemblies", str(exc)) from exc

        sequences = {}
        for ctx in contexts:
            if ctx.ok:
                sequences.update(ctx.sequences)
        families = staged(
            "find_families",
            lambda: find_families(
                sequences,
                cfg.family_distance_cutoff,
                backend=cfg.similarity_backend,
                tool_path=cfg.external_tool_path,
                threads=cfg.cores_per_worker,
            ),
        )
        try:
            assign_families(contexts, families, pool=pool, policy=policy, profiler=profiler)
        except StageError:
            raise
        except GcontextError as exc:
            raise StageError("assign_families", str(exc)) from exc

        operons = staged("operons", lambda: cluster_operons(contexts, cfg.operon_distance_cutoff))

        def _taxonomy():
            table = load_taxonomy_table(cfg.data_dir)
            attach_lineages(contexts, table, handles["assemblies"])
            return build_taxonomy_tree(contexts)

        tree = staged("taxonomy", _taxonomy)

        annotations = staged(
            "annotate_functions", lambda: apply_user_annotations(contexts, families, cfg.annotation_files)
        )

        staged(
            "output",
            lambda: write_tables(
                contexts, families, operons, tree, annotations, out_dir, unresolved=unresolved, done=False
            ),
        )
    finally:
        if pool is not None:
            pool.close()
        for handle in handles.values():
            handle.close()

    profiler.finalize()
    profile_path, _ = profiler.emit(out_dir)
    mark_done(out_dir)

    return ExitReport(
        targets_total=len(targets),
        targets_resolved=len(resolved),
        targets_unresolved=len(unresolved),
        contexts_built=len(contexts),
        contexts_ok=sum(1 for c in contexts if c.ok),
        families_found=len(families),
        operon_types=len(operons),
        out_dir=str(out_dir),
        profile_path=str(profile_path),
    )
