"""Retrieval-augmented engine for reasoning over hierarchical grid-code
regulations: dual terminology/factual knowledge bases, recursive summary
trees, multi-stage query refinement, guarded synthesis, and a three-metric
evaluation harness."""

__version__ = "0.1.0"
