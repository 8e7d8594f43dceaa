"""Task functions served by pool workers.

Importing this module registers the tasks; worker entry points import it via
the pool's task_modules argument, so the same names resolve in worker
threads, spawned processes, and socket workers.
"""

from __future__ import annotations

from .collect import flanking_for_unit
from .executor import task
from .families import assign_for_codes

# Parsed annotation files, keyed by absolute path. One per worker process;
# worker threads of the inprocess transport share it, which is safe because
# entries are write-once.
_GFF_CACHE: dict = {}


@task("gc.parse_flanking")
def parse_flanking(items, ctx):
    """items: per-target work units; params: gff_root, n_up, n_down."""
    gff_root = ctx.params["gff_root"]
    n_up = ctx.params["n_up"]
    n_down = ctx.params["n_down"]
    return [flanking_for_unit(unit, gff_root, n_up, n_down, _GFF_CACHE) for unit in items]


@task("gc.assign_families")
def assign_families_task(items, ctx):
    """items: per-context protein code lists; params: families table."""
    table = ctx.params["families"]
    return [assign_for_codes(codes, table) for codes in items]
