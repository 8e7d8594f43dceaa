"""Step 2: all-against-all similarity, distance matrix, single-linkage
families.

Flat clusters at cutoff t are the connected components of the graph whose
edges are distances strictly below t, mathematically identical to cutting a
single-linkage dendrogram at t. The dendrogram comes from scipy; the cut and
the family numbering are implemented here so tie-breaking stays fixed:
family ids ascend by each family's lexicographically smallest member.
"""

from __future__ import annotations

import logging
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform

from .errors import BackendError, ConfigError, DataError

logger = logging.getLogger(__name__)

# Dense-matrix ceiling: above this, refuse rather than degrade.
MAX_DENSE_N = 20000

UNASSIGNED_FAMILY = -1


@dataclass
class SimilarityHit:
    query: str
    subject: str
    score: float
    self_score_query: float
    self_score_subject: float


@dataclass
class DistanceMatrix:
    labels: list  # unique, sorted
    values: np.ndarray  # symmetric, zero diagonal, entries in [0, 1]

    def validate(self) -> None:
        n = len(self.labels)
        if sorted(set(self.labels)) != list(self.labels):
            raise DataError("distance matrix labels must be unique and sorted")
        if self.values.shape != (n, n):
            raise DataError(f"distance matrix shape {self.values.shape} does not match {n} labels")
        if n == 0:
            return
        if not np.array_equal(self.values, self.values.T):
            raise DataError("distance matrix must be symmetric")
        if np.any(np.diagonal(self.values) != 0.0):
            raise DataError("distance matrix diagonal must be zero")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise DataError("distance matrix entries must lie in [0, 1]")


@dataclass
class Family:
    family_id: int
    members: list
    representative: str


def _kmer_set(seq: str, k: int) -> set:
    return {seq[i : i + k] for i in range(len(seq) - k + 1)}


def builtin_all_vs_all(sequences: dict, k: int = 5) -> list:
    """Shared-distinct-k-mer similarity for every unordered pair.

    score = count of k-mers the two sequences share; self score = a
    sequence's own distinct k-mer count. Pairs sharing nothing are omitted.
    Sequences shorter than k simply have an empty k-mer set.
    """
    if not sequences:
        raise DataError("similarity backend needs at least one sequence")
    if k < 2:
        raise ConfigError("k-mer length must be >= 2")
    codes = sorted(sequences)
    kmers = {c: _kmer_set(sequences[c], k) for c in codes}
    hits = []
    for i, a in enumerate(codes):
        ka = kmers[a]
        if not ka:
            continue
        for b in codes[i + 1 :]:
            shared = len(ka & kmers[b])
            if shared:
                hits.append(
                    SimilarityHit(
                        query=a,
                        subject=b,
                        score=float(shared),
                        self_score_query=float(len(ka)),
                        self_score_subject=float(len(kmers[b])),
                    )
                )
    return hits


def external_all_vs_all(sequences: dict, tool_path, threads: int = 1, columns=(0, 1, 2)) -> list:
    """All-against-all via an external aligner subprocess.

    Contract: the tool is invoked as `tool FASTA_PATH THREADS` and prints
    tab-separated rows with query, subject, and bitscore at the given column
    indices. Self-hits (query == subject) define self scores; a sequence
    without one gets its maximum observed score instead, with a warning.
    """
    if not sequences:
        raise DataError("similarity backend needs at least one sequence")
    qcol, scol, bcol = columns
    need = max(columns) + 1
    with tempfile.TemporaryDirectory(prefix="gcontext-sim-") as tmp:
        fasta = Path(tmp) / "all.faa"
        with open(fasta, "w", encoding="utf-8") as fh:
            for code in sorted(sequences):
                fh.write(f">{code}\n{sequences[code]}\n")
        proc = subprocess.run(
            [str(tool_path), str(fasta), str(threads)],
            capture_output=True,
            text=True,
        )
    if proc.returncode != 0:
        raise BackendError(f"similarity tool exited {proc.returncode}: {proc.stderr.strip()}")
    rows = []
    skipped = 0
    for line in proc.stdout.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.split("\t")
        if len(cells) < need:
            skipped += 1
            continue
        try:
            rows.append((cells[qcol].strip(), cells[scol].strip(), float(cells[bcol])))
        except ValueError:
            skipped += 1
    if skipped:
        logger.warning("similarity tool output: skipped %d unparseable rows", skipped)
    self_scores: dict[str, float] = {}
    best_seen: dict[str, float] = {}
    for q, s, score in rows:
        if q == s:
            self_scores[q] = max(self_scores.get(q, 0.0), score)
        for code in (q, s):
            best_seen[code] = max(best_seen.get(code, 0.0), score)
    hits = []
    for q, s, score in rows:
        if q == s:
            continue
        sq = self_scores.get(q)
        ss = self_scores.get(s)
        if sq is None:
            sq = best_seen[q]
            logger.warning("no self-hit for %s, estimating self score %.3f", q, sq)
        if ss is None:
            ss = best_seen[s]
            logger.warning("no self-hit for %s, estimating self score %.3f", s, ss)
        hits.append(SimilarityHit(query=q, subject=s, score=score, self_score_query=sq, self_score_subject=ss))
    return hits


def hits_to_distance(hits, labels) -> DistanceMatrix:
    """Normalized-score distances: d = 1 - min(1, score / min(self scores)).

    Pairs without a hit sit at distance 1; the two directions of a pair are
    symmetrized by keeping the smaller distance.
    """
    labels = sorted(set(labels))
    index = {code: i for i, code in enumerate(labels)}
    n = len(labels)
    values = np.ones((n, n), dtype=np.float64)
    np.fill_diagonal(values, 0.0)
    for hit in hits:
        if hit.query not in index or hit.subject not in index:
            raise DataError(f"hit endpoint not in label set: {hit.query}/{hit.subject}")
        if hit.query == hit.subject:
            continue
        low = min(hit.self_score_query, hit.self_score_subject)
        if low <= 0:
            raise DataError(f"non-positive self score for pair {hit.query}/{hit.subject}")
        d = 1.0 - min(1.0, hit.score / low)
        i, j = index[hit.query], index[hit.subject]
        if d < values[i, j]:
            values[i, j] = d
            values[j, i] = d
    matrix = DistanceMatrix(labels=labels, values=values)
    matrix.validate()
    return matrix


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def single_linkage(matrix: DistanceMatrix, cutoff: float, sequences: dict | None = None) -> list:
    """Flat single-linkage families: merges strictly below the cutoff.

    The representative is the member with the longest sequence (ties by
    lexicographic order); without sequences it is the smallest member code.
    """
    if not 0.0 <= cutoff <= 1.0:
        raise ConfigError(f"clustering cutoff must be in [0, 1], got {cutoff}")
    labels = matrix.labels
    n = len(labels)
    if n > MAX_DENSE_N:
        raise DataError(f"refusing dense clustering for n={n} (bound {MAX_DENSE_N})")
    if n == 0:
        return []
    uf = _UnionFind(n)
    if n >= 2:
        condensed = squareform(matrix.values, checks=False)
        z = linkage(condensed, method="single")
        # walk the dendrogram, applying only merges strictly below the cutoff
        comp_root = {i: i for i in range(n)}
        for step, (a, b, dist, _count) in enumerate(z):
            ra, rb = comp_root[int(a)], comp_root[int(b)]
            if dist < cutoff:
                uf.union(ra, rb)
            comp_root[n + step] = uf.find(ra)
    groups: dict[int, list] = {}
    for i, code in enumerate(labels):
        groups.setdefault(uf.find(i), []).append(code)
    ordered = sorted(groups.values(), key=lambda members: min(members))
    families = []
    for fam_id, members in enumerate(ordered):
        members = sorted(members)
        if sequences:
            rep = min(members, key=lambda c: (-len(sequences.get(c, "")), c))
        else:
            rep = members[0]
        families.append(Family(family_id=fam_id, members=members, representative=rep))
    return families


def find_families(sequences: dict, cutoff: float, backend: str = "builtin", tool_path=None, threads: int = 1, k: int = 5) -> list:
    """Similarity + distance + clustering in one call; [] for no sequences."""
    labels = sorted(sequences)
    if not labels:
        return []
    if backend == "builtin":
        hits = builtin_all_vs_all(sequences, k=k)
    elif backend == "external":
        hits = external_all_vs_all(sequences, tool_path, threads=threads)
    else:
        raise ConfigError(f"unknown similarity backend '{backend}'")
    matrix = hits_to_distance(hits, labels)
    return single_linkage(matrix, cutoff, sequences=sequences)


def assign_for_codes(codes, table: dict) -> dict:
    """family id per code; codes outside every family get the -1 sentinel."""
    return {c: table.get(c, UNASSIGNED_FAMILY) for c in codes}


def family_table(families) -> dict:
    table: dict[str, int] = {}
    for fam in families:
        for code in fam.members:
            table[code] = fam.family_id
    return table


def assign_families(contexts, families, pool=None, policy=None, profiler=None) -> None:
    """Fill family_ids on every ok context (chunk-parallel with a pool).

    Codes that never entered clustering (e.g. sequence missing from the
    store) get family -1 and a warning.
    """
    table = family_table(families)
    items = [ctx.codes() if ctx.ok else [] for ctx in contexts]

    def _assign():
        if pool is None:
            return [assign_for_codes(codes, table) for codes in items]
        results, records = pool.parallel_map(
            items, "gc.assign_families", policy, params={"families": table}, step="assign_families"
        )
        if profiler is not None:
            profiler.add_task_records(records)
        return results

    if profiler is not None:
        results = profiler.record_step("assign_families", _assign, parallel=pool is not None)
    else:
        results = _assign()

    missing = 0
    for ctx, fam_map in zip(contexts, results):
        if not ctx.ok:
            continue
        ctx.family_ids = {code: int(fid) for code, fid in fam_map.items()}
        missing += sum(1 for fid in ctx.family_ids.values() if fid == UNASSIGNED_FAMILY)
    if missing:
        logger.warning("%d gene(s) not in any family, assigned sentinel %d", missing, UNASSIGNED_FAMILY)
