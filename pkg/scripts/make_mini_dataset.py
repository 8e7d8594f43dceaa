#!/usr/bin/env python3
"""Regenerate the bundled mini dataset under data/mini/raw.

Everything is derived from a fixed seed so the raw files, and therefore the
stores and golden outputs built from them, are reproducible byte for byte.

The world it builds:

  * 20 assemblies (16 RefSeq GCF, 4 GenBank GCA), 1-2 contigs each.
  * Each assembly carries a 9-gene "island" of related genes surrounded by
    filler genes. Islands follow one of 4 family layouts (archetypes), so
    operon clustering should recover 4 groups (plus unknowns).
  * 18 island family prototypes; members are point-mutated copies, so
    single-linkage at the default cutoff reunites them.
  * 50 targets in targets.txt spread over every supported ID standard,
    including 2 that resolve but match no assembly, 2 that cannot be mapped,
    and 2 with unrecognizable identifiers.
  * Deliberate warts: malformed idmapping/summary/GFF rows, a duplicated
    summary accession, a two-exon CDS here and there, URL-encoded product
    strings, sequences missing from the FASTA, and taxids missing from the
    ranked lineage dump.
"""

import gzip
import random
from pathlib import Path


def write_gz(path, text):
    # mtime pinned so regenerating the dataset never dirties the tree.
    with gzip.GzipFile(filename=str(path), mode="wb", mtime=0) as fh:
        fh.write(text.encode("utf-8"))

ROOT = Path(__file__).resolve().parent.parent
RAW = ROOT / "data" / "mini" / "raw"

SEED = 734
AA = "ACDEFGHIKLMNPQRSTVWY"

# Archetype -> (target family, flank families inner-to-outer).
ARCHETYPES = {
    "A": (0, [1, 2, 3, 4]),
    "B": (0, [5, 6, 7, 8]),
    "C": (9, [10, 11, 12, 13]),
    "D": (9, [14, 15, 16, 17]),
}
ASSEMBLY_ARCHETYPE = ["A"] * 6 + ["B"] * 5 + ["C"] * 4 + ["D"] * 5

FAMILY_PRODUCTS = [
    "response regulator transcription factor",
    "sensor histidine kinase",
    "ABC transporter ATP-binding protein",
    "ABC transporter permease",
    "MFS transporter",
    "DNA-binding protein%2C winged helix",
    "aminotransferase class I",
    "GNAT family N-acetyltransferase",
    "SDR family oxidoreductase",
    "site-specific integrase",
    "phage tail protein",
    "recombination protein RecA",
    "cold-shock protein",
    "TonB-dependent receptor",
    "efflux RND transporter permease",
    "sigma-54 dependent transcriptional regulator",
    "PTS sugar transporter subunit IIA",
    "tRNA pseudouridine synthase",
]
FILLER_PRODUCTS = [
    "hypothetical protein",
    "DUF1043 domain-containing protein",
    "membrane protein",
    "acyl carrier protein",
    "ribosomal protein L33",
    "GTP-binding protein",
    "peptidase M23",
    "glycosyltransferase family 2 protein",
]

# taxid -> (organism, species, genus, family, order, class, phylum, kingdom,
# superkingdom). Organism doubles as the summary column value.
LINEAGES = {
    562: ("Escherichia coli", "Escherichia coli", "Escherichia",
          "Enterobacteriaceae", "Enterobacterales", "Gammaproteobacteria",
          "Pseudomonadota", "", "Bacteria"),
    590: ("Salmonella enterica", "Salmonella enterica", "Salmonella",
          "Enterobacteriaceae", "Enterobacterales", "Gammaproteobacteria",
          "Pseudomonadota", "", "Bacteria"),
    1423: ("Bacillus subtilis", "Bacillus subtilis", "Bacillus",
           "Bacillaceae", "Bacillales", "Bacilli", "Bacillota", "", "Bacteria"),
    1148: ("Synechocystis sp. PCC 6803", "Synechocystis sp.", "Synechocystis",
           "Merismopediaceae", "Synechococcales", "Cyanophyceae",
           "Cyanobacteriota", "", "Bacteria"),
    274: ("Thermus thermophilus", "Thermus thermophilus", "Thermus",
          "Thermaceae", "Thermales", "Deinococci", "Deinococcota", "",
          "Bacteria"),
    1773: ("Mycobacterium tuberculosis", "Mycobacterium tuberculosis",
           "Mycobacterium", "Mycobacteriaceae", "Mycobacteriales",
           "Actinomycetes", "Actinomycetota", "", "Bacteria"),
    287: ("Pseudomonas aeruginosa", "Pseudomonas aeruginosa", "Pseudomonas",
          "Pseudomonadaceae", "Pseudomonadales", "Gammaproteobacteria",
          "Pseudomonadota", "", "Bacteria"),
    1280: ("Staphylococcus aureus", "Staphylococcus aureus", "Staphylococcus",
           "Staphylococcaceae", "Caryophanales", "Bacilli", "Bacillota", "",
           "Bacteria"),
    2287: ("Saccharolobus solfataricus", "Saccharolobus solfataricus",
           "Saccharolobus", "Sulfolobaceae", "Sulfolobales", "Thermoprotei",
           "Thermoproteota", "", "Archaea"),
    2188: ("Methanococcus voltae", "Methanococcus voltae", "Methanococcus",
           "Methanococcaceae", "Methanococcales", "Methanococci",
           "Methanobacteriota", "", "Archaea"),
    # Genus intentionally blank: exercises the "unknown" tree branch.
    1219: ("Prochlorococcus marinus", "Prochlorococcus marinus", "",
           "Prochlorococcaceae", "Synechococcales", "Cyanophyceae",
           "Cyanobacteriota", "", "Bacteria"),
}
# Assigned per assembly; 99901 and 99902 are deliberately absent from the
# ranked lineage dump.
ASSEMBLY_TAXIDS = [562, 562, 590, 1423, 1148, 274,
                   1773, 287, 1280, 2287, 2188,
                   562, 1423, 99901, 590, 274,
                   287, 1280, 2287, 99902]
ORGANISM_FALLBACK = {99901: "Candidatus Minimus primus",
                     99902: "Candidatus Minimus secundus"}


def organism_of(taxid):
    if taxid in LINEAGES:
        return LINEAGES[taxid][0]
    return ORGANISM_FALLBACK[taxid]


def random_protein(rng, lo=120, hi=240):
    return "".join(rng.choice(AA) for _ in range(rng.randint(lo, hi)))


def mutate(rng, seq, n_mut):
    chars = list(seq)
    for pos in rng.sample(range(len(chars)), n_mut):
        old = chars[pos]
        chars[pos] = rng.choice([c for c in AA if c != old])
    return "".join(chars)


def wrap_fasta(seq, width=60):
    return "\n".join(seq[i:i + width] for i in range(0, len(seq), width))


class Gene:
    def __init__(self, code, contig, start, end, strand, product, attrs_style,
                 two_exon=False):
        self.code = code
        self.contig = contig
        self.start = start
        self.end = end
        self.strand = strand
        self.product = product
        self.attrs_style = attrs_style
        self.two_exon = two_exon


def build_assembly(rng, idx, prototypes, filler_seqs):
    """Lay out one assembly; returns (record, genes, sequences)."""
    arch = ASSEMBLY_ARCHETYPE[idx]
    target_fam, flanks = ARCHETYPES[arch]
    layout = list(reversed(flanks)) + [target_fam] + flanks  # positions -4..+4

    if idx < 16:
        accession = f"GCF_{idx + 1:06d}.1"
        source = "refseq"
    else:
        accession = f"GCA_{900000 + idx - 15:06d}.1"
        source = "genbank"
    genbank_codes = idx in (17, 18)

    def new_code(serial):
        if genbank_codes:
            return f"CAA{(idx - 9) * 10000 + serial:06d}.1"
        return f"WP_{(idx + 1) * 100000 + serial:09d}.1"

    n_contigs = 2 if idx % 2 == 0 else 1
    island_contig = 2 if (n_contigs == 2 and idx % 4 == 0) else 1
    contig_names = [f"NZ_MC{idx:03d}{c}.1" for c in range(1, n_contigs + 1)]
    island_strand = "+" if idx % 2 == 0 else "-"

    genes = []
    sequences = {}
    serial = 0

    def add_gene(contig, pos, strand, product, seq):
        nonlocal serial
        serial += 1
        code = new_code(serial)
        length_nt = 3 * (len(seq) + 1)
        start = pos
        end = start + length_nt - 1
        style = serial % 3
        genes.append(Gene(code, contig, start, end, strand, product, style))
        sequences[code] = seq
        return code, end

    # Filler genes before the island. Assembly 2 starts its island contig
    # cold so the core target is truncated upstream.
    island_genes = []
    pos = rng.randint(150, 400)
    island_contig_name = contig_names[island_contig - 1]
    n_before = 0 if idx == 2 else rng.randint(4, 7)
    for _ in range(n_before):
        seq = filler_seqs.pop()
        _, end = add_gene(island_contig_name, pos,
                          rng.choice("+-"), rng.choice(FILLER_PRODUCTS), seq)
        pos = end + rng.randint(20, 200)

    # The island itself: 9 related genes on one strand, contiguous.
    island_positions = list(range(-4, 5))
    if idx == 2:
        island_positions = island_positions[3:]   # drop -4..-2
    if idx == 9:
        island_positions = island_positions[:-3]  # drop +2..+4
    for rel in island_positions:
        fam = layout[rel + 4]
        seq = mutate(rng, prototypes[fam], rng.randint(0, 4))
        code, end = add_gene(island_contig_name, pos, island_strand,
                             FAMILY_PRODUCTS[fam], seq)
        island_genes.append((rel, code, fam))
        pos = end + rng.randint(20, 120)

    # Filler genes after the island; one is two-exon in every 4th assembly.
    n_after = 0 if idx == 9 else rng.randint(4, 7)
    for j in range(n_after):
        seq = filler_seqs.pop()
        _, end = add_gene(island_contig_name, pos,
                          rng.choice("+-"), rng.choice(FILLER_PRODUCTS), seq)
        if j == 0 and idx % 4 == 3:
            genes[-1].two_exon = True
        pos = end + rng.randint(20, 200)

    # A second contig of pure filler for half the assemblies.
    for contig in contig_names:
        if contig == island_contig_name:
            continue
        cpos = rng.randint(200, 500)
        for _ in range(rng.randint(5, 9)):
            seq = filler_seqs.pop()
            _, end = add_gene(contig, cpos, rng.choice("+-"),
                              rng.choice(FILLER_PRODUCTS), seq)
            cpos = end + rng.randint(20, 200)

    record = {
        "idx": idx,
        "accession": accession,
        "source": source,
        "taxid": ASSEMBLY_TAXIDS[idx],
        "contigs": contig_names,
        "archetype": arch,
        "island": island_genes,
        "genbank_codes": genbank_codes,
    }
    return record, genes, sequences


def gff_lines(rng, record, genes):
    acc = record["accession"]
    lines = [
        "##gff-version 3",
        f"#!genome-build-accession NCBI_Assembly:{acc}",
    ]
    per_contig = {}
    for g in genes:
        per_contig.setdefault(g.contig, []).append(g)
    for contig, cg in per_contig.items():
        top = max(g.end for g in cg) + rng.randint(100, 5000)
        lines.append(f"##sequence-region {contig} 1 {top}")
    source = "RefSeq" if record["source"] == "refseq" else "Genbank"
    for g in genes:
        gid = g.code.split(".")[0]
        lines.append("\t".join([
            g.contig, source, "gene", str(g.start), str(g.end), ".",
            g.strand, ".", f"ID=gene-{gid};gbkey=Gene;gene_biotype=protein_coding",
        ]))
        if g.attrs_style == 0:
            attrs = (f"ID=cds-{g.code};Parent=gene-{gid};gbkey=CDS;"
                     f"product={g.product};protein_id={g.code}")
        elif g.attrs_style == 1:
            attrs = (f"ID=cds-{g.code};Parent=gene-{gid};Name={g.code};"
                     f"gbkey=CDS;product={g.product}")
        else:
            attrs = f"ID=cds-{g.code};Parent=gene-{gid};product={g.product}"
        if g.two_exon:
            cut = g.start + ((g.end - g.start) // 6) * 3
            first = [g.contig, source, "CDS", str(g.start), str(cut), ".",
                     g.strand, "0", attrs]
            second = [g.contig, source, "CDS", str(cut + 4), str(g.end), ".",
                      g.strand, "0", attrs]
            lines.append("\t".join(first))
            lines.append("\t".join(second))
        else:
            lines.append("\t".join(
                [g.contig, source, "CDS", str(g.start), str(g.end), ".",
                 g.strand, "0", attrs]))
    # A few deliberately broken feature rows; parsers must skip them.
    if record["idx"] % 5 == 0:
        lines.append("ctg_broken\tRefSeq\tCDS\tnot_a_number\t500\t.\t+\t0\tID=cds-BAD1")
        lines.append("short\trow")
    if record["idx"] % 7 == 0:
        lines.append("ctg_broken\tRefSeq\tCDS\t900\t100\t.\t+\t0\tID=cds-BAD2")
    lines.append("###")
    return lines


GFF_NAME_PATTERNS = (
    "{acc}_genomic.gff.gz",
    "{acc}_genomic.gff",
    "{acc}.gff.gz",
    "{acc}.gff",
)


def target_slots():
    """(assembly idx, island position) pairs that become pipeline targets."""
    slots = [(i, 0) for i in range(20)]
    slots += [(i, 1) for i in range(18)]
    slots += [(i, -1) for i in range(6)]
    return slots


def main():
    rng = random.Random(SEED)
    raw = RAW
    for sub in ("gff", "annotations"):
        (raw / sub).mkdir(parents=True, exist_ok=True)

    prototypes = [random_protein(rng) for _ in range(len(FAMILY_PRODUCTS))]
    filler_seqs = [random_protein(rng, 100, 200) for _ in range(420)]

    records, all_genes, all_seqs = [], {}, {}
    for idx in range(20):
        record, genes, seqs = build_assembly(rng, idx, prototypes, filler_seqs)
        records.append(record)
        all_genes[idx] = genes
        all_seqs.update(seqs)

    # --- GFF files, one naming pattern per assembly, half gzipped.
    for record in records:
        acc = record["accession"]
        name = GFF_NAME_PATTERNS[record["idx"] % 4].format(acc=acc)
        text = "\n".join(gff_lines(rng, record, all_genes[record["idx"]])) + "\n"
        path = raw / "gff" / name
        if name.endswith(".gz"):
            write_gz(path, text)
        else:
            path.write_text(text, encoding="utf-8")

    # --- Assembly summaries.
    header = ("# assembly_accession\tbioproject\tbiosample\twgs_master\t"
              "refseq_category\ttaxid\tspecies_taxid\torganism_name\t"
              "infraspecific_name\tisolate\tversion_status\tassembly_level")
    def summary_row(record, organism=None):
        taxid = record["taxid"]
        return "\t".join([
            record["accession"], f"PRJNA{57000 + record['idx']}",
            f"SAMN{2600000 + record['idx']:08d}", "",
            "representative genome", str(taxid), str(taxid),
            organism or organism_of(taxid), "", "", "latest", "Complete Genome",
        ])

    refseq_rows = ["#   See assembly help for column definitions.", header]
    for record in records[:16]:
        if record["idx"] == 3:
            # Stale duplicate first; the later row must win.
            refseq_rows.append(summary_row(record, organism="Bacillus sp. draft"))
        refseq_rows.append(summary_row(record))
    refseq_rows.append("BOGUS_000001.1\tPRJNA0\tSAMN0\t\tna\t562\t562\tbroken row\t\t\tlatest\tContig")
    (raw / "assembly_summary_refseq.txt").write_text(
        "\n".join(refseq_rows) + "\n", encoding="utf-8")

    genbank_rows = [header]
    for record in records[16:]:
        genbank_rows.append(summary_row(record))
    (raw / "assembly_summary_genbank.txt").write_text(
        "\n".join(genbank_rows) + "\n", encoding="utf-8")

    # --- Targets and the ID standards each one uses.
    slots = target_slots()
    slot_code = {}
    for idx, rel in slots:
        for srel, code, _fam in records[idx]["island"]:
            if srel == rel:
                slot_code[(idx, rel)] = code
    assert len(slot_code) == len(slots)

    genbank_slots = [(17, 0), (17, 1), (18, 0)]
    plain_slots = [s for s in slots if s not in genbank_slots]
    rng.shuffle(plain_slots)
    standard_plan = (["RefSeq"] * 22 + ["UniProtKB-AC"] * 7 +
                     ["UniProtKB-ID"] * 4 + ["GeneID"] * 3 +
                     ["UniParc"] * 2 + ["EMBL-CDS"] * 3)
    assert len(standard_plan) == len(plain_slots)

    mapping_rows = []   # (ac, upid, geneid, refseq_cell, uniparc, embl)
    mapped_codes = set()
    targets = []        # raw ids in file order

    def mapping_row_for(code, k, refseq_cell=None):
        return (f"P{23000 + k:05d}", f"Y{k:04d}_MINI", str(944000 + k),
                refseq_cell or code, f"UPI{k:010X}", f"AAC{73000 + k:05d}.1")

    k = 0
    for slot, standard in zip(plain_slots, standard_plan):
        code = slot_code[slot]
        if standard == "RefSeq":
            targets.append(code)
            continue
        k += 1
        refseq_cell = code
        if standard == "UniProtKB-AC" and k == 1:
            # Multi-valued RefSeq cell: resolution takes the first token.
            refseq_cell = f"{code}; WP_999999001.1"
        row = mapping_row_for(code, k, refseq_cell)
        mapping_rows.append(row)
        mapped_codes.add(code)
        targets.append({"UniProtKB-AC": row[0], "UniProtKB-ID": row[1],
                        "GeneID": row[2], "UniParc": row[4],
                        "EMBL-CDS": row[5]}[standard])
    for slot in genbank_slots:
        targets.append(slot_code[slot])

    # Resolvable but matching no assembly: one raw RefSeq id and one
    # accession that maps to an unhoused code.
    targets.append("WP_888888888.1")
    mapping_rows.append(("P77777", "YNOAS_MINI", "999001", "WP_777777777.1",
                         "UPI00000EEEEE", "AAC99999.1"))
    targets.append("P77777")
    # Unmappable (valid standard, absent from the mapping store).
    targets.append("Q54321")
    targets.append("UPI00000FFFFF")
    # Unrecognizable.
    targets.append("hypothetical-orf-12")
    targets.append("trna-leu2")

    rng.shuffle(targets)
    lines = ["# mini dataset target list", "# one identifier per line"]
    lines.extend(targets)
    lines.append(targets[0])   # duplicate; parsing keeps the first
    (raw / "targets.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    # --- idmapping table: target rows, decoys for other island genes, warts.
    decoy_n = 0
    for record in records:
        if record["genbank_codes"]:
            continue
        for rel, code, _fam in record["island"]:
            if code in mapped_codes:
                continue
            decoy_n += 1
            mapping_rows.append((f"Q{60000 + decoy_n:05d}",
                                 f"Z{decoy_n:04d}_MINI",
                                 str(800000 + decoy_n), code,
                                 f"UPI{0xAA0000 + decoy_n:010X}",
                                 f"ABD{10000 + decoy_n:05d}.1"))

    def mapping_line(row):
        cells = [""] * 18
        cells[0], cells[1], cells[2], cells[3] = row[0], row[1], row[2], row[3]
        cells[10], cells[17] = row[4], row[5]
        return "\t".join(cells)

    mapping_rows.sort(key=lambda r: r[0])
    mapping_lines = [mapping_line(r) for r in mapping_rows]
    mapping_lines.insert(7, "broken\trow")
    mapping_lines.insert(19, "\t".join([""] * 18))
    mapping_lines.append("trailing\tjunk")
    write_gz(raw / "idmapping_selected.tab.gz", "\n".join(mapping_lines) + "\n")

    # --- Protein FASTA: bulk gzipped file plus a small plain-text extras
    # file. Three codes are withheld so their genes stay unassigned: two
    # island genes and the filler right before assembly 0's island (it sits
    # inside the window of that assembly's offset targets).
    def island_code(idx, rel):
        return next(c for r, c, _f in records[idx]["island"] if r == rel)

    first_island_idx = next(i for i, g in enumerate(all_genes[0])
                            if g.code == island_code(0, -4))
    missing = {island_code(4, 3), island_code(12, -2),
               all_genes[0][first_island_idx - 1].code}
    organisms = {g.code: organism_of(records[idx]["taxid"])
                 for idx, genes in all_genes.items() for g in genes}
    products = {g.code: g.product.replace("%2C", ",")
                for genes in all_genes.values() for g in genes}

    codes = sorted(all_seqs)
    extras = set(codes[::23])
    bulk, extra = [], []
    for code in codes:
        if code in missing:
            continue
        entry = f">{code} {products[code]} [{organisms[code]}]\n{wrap_fasta(all_seqs[code])}\n"
        (extra if code in extras else bulk).append(entry)
    # One conflicting re-definition; the first-seen sequence must win.
    dup = codes[5]
    if dup not in missing:
        extra.append(f">{dup} duplicated entry\n{wrap_fasta(mutate(rng, all_seqs[dup], 6))}\n")
    write_gz(raw / "proteins.faa.gz", "".join(bulk))
    (raw / "proteins_extra.faa").write_text("".join(extra), encoding="utf-8")

    # --- Ranked lineage dump (taxids 99901/99902 intentionally absent).
    dmp_rows = []
    for taxid, lin in LINEAGES.items():
        fields = [str(taxid)] + list(lin)
        dmp_rows.append("\t|\t".join(fields) + "\t|")
    for i in range(15):
        taxid = 7000000 + i
        fields = [str(taxid), f"Decoya specimen {i}", f"Decoya specimen {i}",
                  "Decoya", "Decoyaceae", "Decoyales", "Decoyia",
                  "Decoyota", "", "Bacteria"]
        dmp_rows.append("\t|\t".join(fields) + "\t|")
    dmp_rows.sort(key=lambda r: int(r.split("\t", 1)[0]))
    (raw / "rankedlineage.dmp").write_text("\n".join(dmp_rows) + "\n",
                                           encoding="utf-8")

    # --- User annotation tables keyed by member protein codes.
    pdb_codes = [slot_code[(i, 0)] for i in (0, 3, 6, 9, 11, 15)]
    pdb_ids = ["1ABC", "2DEF", "3GHI", "4JKL", "5MNO", "6PQR"]
    pdb_lines = ["# protein_code\tpdb_id"]
    pdb_lines += [f"{c}\t{p}" for c, p in zip(pdb_codes, pdb_ids)]
    pdb_lines.append("WP_000000404.1\t9ZZZ")   # matches nothing
    (raw / "annotations" / "pdb_structures.tsv").write_text(
        "\n".join(pdb_lines) + "\n", encoding="utf-8")

    fn_codes = [slot_code[(i, 0)] for i in (0, 6, 9, 15)]
    fn_lines = ["# protein_code\tfunction"]
    fn_lines += [f"{c}\ttwo-component system {w}" for c, w in
                 zip(fn_codes, ("regulator", "kinase", "integrase", "regulator"))]
    fn_lines.append("only_one_column")          # malformed
    (raw / "annotations" / "functions.tsv").write_text(
        "\n".join(fn_lines) + "\n", encoding="utf-8")

    n_genes = sum(len(g) for g in all_genes.values())
    print(f"assemblies: {len(records)}  genes: {n_genes}  "
          f"sequences: {len(all_seqs)}  targets: {len(targets)}  "
          f"mapping rows: {len(mapping_rows)}")


if __name__ == "__main__":
    main()
