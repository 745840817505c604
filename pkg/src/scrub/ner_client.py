"""Clients for the named-entity recognition wire protocol.

The scanner talks to an HTTP service (``POST /ner`` with
``{"text": ..., "min_score": ...}`` returning ``{"entities": [...]}``)
or, for hermetic runs, an in-process gazetteer with identical semantics:
exact case-insensitive matches of a configured name list at score 1.0.
Entity offsets are character offsets into the request text.
"""

from __future__ import annotations

import json
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Protocol

from .errors import NerUnavailable

Entity = dict  # {"start": int, "end": int, "label": "PER"|"ORG", "score": float}


class NerClient(Protocol):
    def analyze(self, text: str, min_score: float) -> list[Entity]: ...


def gazetteer_entities(text: str, names: list, min_score: float) -> list[Entity]:
    """Exact case-insensitive occurrences of configured names, score 1.0.

    ``names`` entries are strings (label PER) or {"name": ..., "label": ...}
    mappings. This is the reference behaviour the HTTP service's gazetteer
    mode must reproduce byte-for-byte.
    """
    entities: list[Entity] = []
    for item in names:
        if isinstance(item, str):
            name, label = item, "PER"
        else:
            name, label = item["name"], item.get("label", "PER")
        if not name:
            continue
        for m in re.finditer(re.escape(name), text, re.IGNORECASE):
            entities.append({"start": m.start(), "end": m.end(), "label": label, "score": 1.0})
    entities.sort(key=lambda e: (e["start"], e["end"], e["label"]))
    return [e for e in entities if e["score"] >= min_score]


@dataclass
class GazetteerNerClient:
    """In-process stub used when no service is deployed."""

    names: list = field(default_factory=list)

    def analyze(self, text: str, min_score: float) -> list[Entity]:
        return gazetteer_entities(text, self.names, min_score)


@dataclass
class HttpNerClient:
    url: str
    timeout: float = 10.0

    def analyze(self, text: str, min_score: float) -> list[Entity]:
        payload = json.dumps({"text": text, "min_score": min_score}).encode("utf-8")
        request = urllib.request.Request(
            self.url.rstrip("/") + "/ner",
            data=payload,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise NerUnavailable(f"NER service at {self.url} unreachable: {exc}") from exc
        entities = body.get("entities")
        if not isinstance(entities, list):
            raise NerUnavailable(f"NER service returned malformed body: {body!r}")
        return entities


@dataclass
class NerConfig:
    """Detector-side settings; chunking constants are overridable."""

    mode: str = "disabled"  # disabled | gazetteer | http
    url: str | None = None
    min_score: float = 0.5
    chunk_size: int = 4000
    overlap: int = 200
    timeout: float = 10.0
    gazetteer: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, raw: dict) -> "NerConfig":
        return cls(
            mode=raw.get("mode", "disabled"),
            url=raw.get("url"),
            min_score=float(raw.get("min_score", 0.5)),
            chunk_size=int(raw.get("chunk_size", 4000)),
            overlap=int(raw.get("overlap", 200)),
            timeout=float(raw.get("timeout", 10.0)),
            gazetteer=list(raw.get("gazetteer", [])),
        )


def make_client(config: NerConfig) -> NerClient | None:
    if config.mode == "disabled":
        return None
    if config.mode == "gazetteer":
        return GazetteerNerClient(names=config.gazetteer)
    if config.mode == "http":
        if not config.url:
            raise NerUnavailable("NER mode 'http' requires a url")
        return HttpNerClient(url=config.url, timeout=config.timeout)
    raise NerUnavailable(f"unknown NER mode {config.mode!r}")
