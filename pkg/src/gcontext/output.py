"""Result bundle writers: context JSON, family/operon tables, taxonomy tree,
unresolved report, and a static SVG diagram.

Everything written here is deterministic: JSON is canonical (sorted keys, no
insignificant whitespace) except that contexts.json keeps its top-level keys
in input order; tables sort their rows; floats are fixed-format. Reruns over
the same inputs produce identical bytes. A DONE sentinel file marks a
completely written bundle.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

DONE_SENTINEL = "DONE"

# Fixed 20-color palette; family ids map in by modulo. Unassigned genes
# (family -1) render grey.
PALETTE = (
    "#1f77b4",
    "#aec7e8",
    "#ff7f0e",
    "#ffbb78",
    "#2ca02c",
    "#98df8a",
    "#d62728",
    "#ff9896",
    "#9467bd",
    "#c5b0d5",
    "#8c564b",
    "#c49c94",
    "#e377c2",
    "#f7b6d2",
    "#7f7f7f",
    "#c7c7c7",
    "#bcbd22",
    "#dbdb8d",
    "#17becf",
    "#9edae5",
)
UNASSIGNED_COLOR = "#cccccc"


@dataclass
class OutputBundle:
    out_dir: Path
    contexts_json: Path
    families_tsv: Path
    operons_tsv: Path
    taxonomy_tree_json: Path
    contexts_svg: Path
    unresolved_tsv: Path
    profile_json: Path | None = None

    def files(self) -> list:
        paths = [
            self.contexts_json,
            self.families_tsv,
            self.operons_tsv,
            self.taxonomy_tree_json,
            self.contexts_svg,
            self.unresolved_tsv,
        ]
        if self.profile_json is not None:
            paths.append(self.profile_json)
        return paths

    def is_complete(self) -> bool:
        return (self.out_dir / DONE_SENTINEL).is_file() and all(p.is_file() for p in self.files())


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def mark_done(out_dir) -> Path:
    path = Path(out_dir) / DONE_SENTINEL
    path.write_text("", encoding="utf-8")
    return path


def _contexts_json_text(contexts) -> str:
    # top-level keys keep target input order; every nested object is
    # canonical (sorted keys)
    parts = []
    for ctx in contexts:
        key = json.dumps(ctx.target.raw_id, ensure_ascii=False)
        parts.append(f"{key}:{_canonical(ctx.to_dict())}")
    return "{" + ",".join(parts) + "}\n"


def family_color(family_id, palette=None) -> str:
    palette = palette or PALETTE
    if family_id is None or family_id < 0:
        return UNASSIGNED_COLOR
    return palette[family_id % len(palette)]


def render_context_svg(contexts, family_palette=None) -> str:
    """One row per drawable context: genes as strand-oriented arrows scaled
    to length and colored by family; the target gene is outlined. A legend
    maps colors to family ids."""
    rows = [ctx for ctx in contexts if ctx.ok and ctx.genes]
    fam_ids = sorted({fid for ctx in rows for fid in ctx.family_ids.values()})
    width = 960.0
    label_w = 170.0
    row_h = 34.0
    top = 24.0
    legend_row_h = 18.0
    legend_top = top + row_h * len(rows) + 16.0
    height = legend_top + legend_row_h * (len(fam_ids) + 1) + 10.0
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.2f}" height="{height:.2f}" '
        f'viewBox="0 0 {width:.2f} {height:.2f}" font-family="monospace" font-size="11">',
    ]
    for r, ctx in enumerate(rows):
        y0 = top + r * row_h
        mid = y0 + row_h / 2.0
        out.append(f'<text x="6.00" y="{mid + 4.0:.2f}">{escape(ctx.target.raw_id)}</text>')
        row_min = min(g.start for g in ctx.genes)
        row_max = max(g.end for g in ctx.genes)
        scale = (width - label_w - 20.0) / max(1, row_max - row_min)
        for g in ctx.genes:
            x0 = label_w + (g.start - row_min) * scale
            x1 = label_w + (g.end - row_min) * scale
            ya = mid - 9.0
            yb = mid + 9.0
            tip = min(9.0, max(2.0, (x1 - x0) * 0.35))
            if g.strand == "+":
                points = [(x0, ya), (x1 - tip, ya), (x1, mid), (x1 - tip, yb), (x0, yb)]
            else:
                points = [(x1, ya), (x0 + tip, ya), (x0, mid), (x0 + tip, yb), (x1, yb)]
            pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
            fid = ctx.family_ids.get(g.protein_code, -1)
            fill = family_color(fid, family_palette)
            if g.relative_position == 0:
                stroke = 'stroke="#000000" stroke-width="1.50"'
            else:
                stroke = 'stroke="#555555" stroke-width="0.50"'
            title = escape(f"{g.protein_code} {g.product}".strip())
            out.append(f'<polygon class="gene" points="{pts}" fill="{fill}" {stroke}><title>{title}</title></polygon>')
    out.append(f'<text x="6.00" y="{legend_top + 12.0:.2f}" font-weight="bold">families</text>')
    for i, fid in enumerate(fam_ids):
        y = legend_top + legend_row_h * (i + 1)
        color = family_color(fid, family_palette)
        label = "unassigned" if fid < 0 else f"family {fid}"
        out.append(f'<rect x="6.00" y="{y:.2f}" width="12.00" height="12.00" fill="{color}" stroke="#555555" stroke-width="0.50"/>')
        out.append(f'<text x="24.00" y="{y + 10.0:.2f}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_tables(contexts, families, operon_types, tree, annotations, out_dir, unresolved=(), done=True) -> OutputBundle:
    """Write the result bundle under out_dir; returns the bundle paths.

    With done=True the DONE sentinel is written last; orchestrators that
    still have files to add (the profile) pass done=False and mark
    completion themselves.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sentinel = out_dir / DONE_SENTINEL
    if sentinel.exists():
        sentinel.unlink()  # rewriting the bundle invalidates prior completeness
    annotations = annotations or {"families": {}, "members": {}, "unmatched": 0, "malformed": 0, "sources": {}}

    bundle = OutputBundle(
        out_dir=out_dir,
        contexts_json=out_dir / "contexts.json",
        families_tsv=out_dir / "families.tsv",
        operons_tsv=out_dir / "operons.tsv",
        taxonomy_tree_json=out_dir / "taxonomy_tree.json",
        contexts_svg=out_dir / "contexts.svg",
        unresolved_tsv=out_dir / "unresolved.tsv",
    )

    _write_text(bundle.contexts_json, _contexts_json_text(contexts))

    with open(bundle.families_tsv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["family_id", "representative", "size", "members", "pdb", "function"])
        for fam in sorted(families, key=lambda f: f.family_id):
            slot = annotations["families"].get(fam.family_id, {})
            writer.writerow(
                [
                    fam.family_id,
                    fam.representative,
                    len(fam.members),
                    ";".join(fam.members),
                    ";".join(slot.get("pdb_structure", [])),
                    ";".join(slot.get("function", [])),
                ]
            )

    with open(bundle.operons_tsv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["operon_id", "size", "fingerprint", "members"])
        for op in sorted(operon_types, key=lambda o: o.operon_id):
            writer.writerow(
                [
                    op.operon_id,
                    len(op.member_targets),
                    ";".join(str(f) for f in op.fingerprint),
                    ";".join(op.member_targets),
                ]
            )

    _write_text(bundle.taxonomy_tree_json, _canonical(tree) + "\n")
    _write_text(bundle.contexts_svg, render_context_svg(contexts))

    with open(bundle.unresolved_tsv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["raw_id", "id_standard", "source_label", "reason"])
        for t in unresolved:
            reason = "unknown_standard" if t.id_standard == "Unknown" else "unmapped"
            writer.writerow([t.raw_id, t.id_standard, t.source_label or "", reason])

    if done:
        mark_done(out_dir)
    return bundle
