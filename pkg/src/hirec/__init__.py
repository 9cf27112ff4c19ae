"""Hierarchical retrieval with iterative evidence curation for
open-domain QA over page-separated document corpora."""

__version__ = "0.1.0"
