"""Genomic context analysis pipeline: collect, cluster, annotate, render."""

__version__ = "0.1.0"
