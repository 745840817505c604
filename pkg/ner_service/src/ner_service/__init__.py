"""ner-service: HTTP named-entity recognition with a deterministic test mode."""

__version__ = "0.1.0"
