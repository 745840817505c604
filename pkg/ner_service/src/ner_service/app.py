"""HTTP named-entity recognition service.

Two operating modes behind one wire protocol:

* ``model`` — wraps a multilingual token-classification transformer;
  loads in the background, answers 503 until ready.
* ``gazetteer`` — deterministic exact case-insensitive matching of a
  configured name list at score 1.0; used for tests and hermetic runs.

Protocol: ``POST /ner`` with ``{"text": str, "min_score": float}``
returns ``{"entities": [{"start", "end", "label", "score"}, ...]}``
where offsets are character offsets into the request text and labels
are PER or ORG. The server applies the score threshold but no entity
length filter — length filtering is a client-side rule.
"""

from __future__ import annotations

import os
import re
import threading
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

DEFAULT_MAX_CHARS = 100_000
DEFAULT_MODEL = "Babelscape/wikineural-multilingual-ner"

_LABEL_MAP = {"PER": "PER", "ORG": "ORG"}


class NerRequest(BaseModel):
    text: str
    min_score: float = Field(default=0.5, ge=0.0, le=1.0)


def gazetteer_entities(text: str, names: list, min_score: float) -> list[dict]:
    """Exact case-insensitive occurrences of configured names, score 1.0.

    Entries are plain strings (label PER) or {"name", "label"} mappings.
    Output is sorted by (start, end, label) so identical requests yield
    identical response bytes.
    """
    entities: list[dict] = []
    for item in names:
        if isinstance(item, str):
            name, label = item, "PER"
        else:
            name, label = item["name"], item.get("label", "PER")
        if not name or label not in _LABEL_MAP:
            continue
        for m in re.finditer(re.escape(name), text, re.IGNORECASE):
            entities.append(
                {"start": m.start(), "end": m.end(), "label": label, "score": 1.0}
            )
    entities.sort(key=lambda e: (e["start"], e["end"], e["label"]))
    return [e for e in entities if e["score"] >= min_score]


class ModelRunner:
    """Lazy transformer wrapper; ``ready`` flips once the pipeline loads."""

    def __init__(self, model_name: str = DEFAULT_MODEL):
        self.model_name = model_name
        self._pipeline = None
        self._lock = threading.Lock()

    @property
    def ready(self) -> bool:
        return self._pipeline is not None

    def load(self) -> None:
        from transformers import pipeline  # deferred: heavy import

        pipe = pipeline(
            "token-classification", model=self.model_name, aggregation_strategy="simple"
        )
        with self._lock:
            self._pipeline = pipe

    def load_in_background(self) -> None:
        threading.Thread(target=self.load, daemon=True).start()

    def entities(self, text: str, min_score: float) -> list[dict]:
        results = self._pipeline(text)
        out = []
        for ent in results:
            label = _LABEL_MAP.get(ent.get("entity_group", ""))
            if label is None:
                continue
            score = float(ent["score"])
            if score < min_score:
                continue
            out.append(
                {"start": int(ent["start"]), "end": int(ent["end"]),
                 "label": label, "score": score}
            )
        out.sort(key=lambda e: (e["start"], e["end"], e["label"]))
        return out


def load_gazetteer_file(path: str) -> list[dict]:
    """One name per line; an ``ORG:`` prefix overrides the PER default."""
    names = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" in line and line.split(":", 1)[0] in _LABEL_MAP:
                label, name = line.split(":", 1)
                names.append({"name": name.strip(), "label": label})
            else:
                names.append({"name": line, "label": "PER"})
    return names


def create_app(
    mode: str = "gazetteer",
    gazetteer: Optional[list] = None,
    max_chars: int = DEFAULT_MAX_CHARS,
    model_name: str = DEFAULT_MODEL,
    autoload: bool = True,
) -> FastAPI:
    app = FastAPI(title="ner-service")
    runner = ModelRunner(model_name) if mode == "model" else None
    names = list(gazetteer or [])
    if mode == "model" and autoload:
        runner.load_in_background()

    @app.exception_handler(RequestValidationError)
    async def malformed_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": "malformed request"})

    @app.get("/health")
    def health() -> dict:
        ready = runner.ready if runner is not None else True
        return {"mode": mode, "ready": ready}

    @app.post("/ner")
    async def ner(request: Request) -> dict:
        try:
            payload = await request.json()
        except Exception:
            raise HTTPException(status_code=400, detail="malformed JSON")
        try:
            parsed = NerRequest(**payload) if isinstance(payload, dict) else None
        except Exception:
            parsed = None
        if parsed is None:
            raise HTTPException(status_code=400, detail="malformed request")
        if len(parsed.text) > max_chars:
            raise HTTPException(status_code=413, detail="text too long")
        if runner is not None:
            if not runner.ready:
                raise HTTPException(status_code=503, detail="model not loaded")
            return {"entities": runner.entities(parsed.text, parsed.min_score)}
        return {"entities": gazetteer_entities(parsed.text, names, parsed.min_score)}

    return app


def create_app_from_env() -> FastAPI:
    mode = os.environ.get("NER_MODE", "gazetteer")
    gazetteer: list = []
    gz_file = os.environ.get("NER_GAZETTEER_FILE")
    if gz_file:
        gazetteer = load_gazetteer_file(gz_file)
    return create_app(
        mode=mode,
        gazetteer=gazetteer,
        max_chars=int(os.environ.get("NER_MAX_CHARS", DEFAULT_MAX_CHARS)),
        model_name=os.environ.get("NER_MODEL", DEFAULT_MODEL),
    )


app = create_app_from_env()
