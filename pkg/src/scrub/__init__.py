"""repo-scrub: repository ingestion, metadata, selection, anonymization."""

__version__ = "0.1.0"
