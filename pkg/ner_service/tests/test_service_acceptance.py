"""Acceptance gate for the service: protocol conformance in one pass."""

from __future__ import annotations

import json
import os
import socket
import subprocess
import sys
import time
import urllib.request
from contextlib import contextmanager

from fastapi.testclient import TestClient

from ner_service.app import create_app
from scrub.detect import Locator, Surface, detect_ner
from scrub.ner_client import GazetteerNerClient, HttpNerClient, NerConfig

from test_protocol import GAZETTEER, GOLDEN_CASES


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE FAIL: {name}")
        raise
    print(f"\nACCEPTANCE PASS: {name}")


@contextmanager
def live_gazetteer_service(tmp_path):
    gz = tmp_path / "gazetteer.txt"
    lines = [e if isinstance(e, str) else f"{e['label']}:{e['name']}" for e in GAZETTEER]
    gz.write_text("\n".join(lines) + "\n", "utf-8")
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
    env = dict(os.environ, NER_MODE="gazetteer", NER_GAZETTEER_FILE=str(gz))
    proc = subprocess.Popen(
        [sys.executable, "-m", "uvicorn", "--host", "127.0.0.1", "--port", str(port),
         "--log-level", "error", "ner_service.app:app"],
        env=env, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
    )
    url = f"http://127.0.0.1:{port}"
    try:
        for _ in range(100):
            try:
                with urllib.request.urlopen(url + "/health", timeout=1) as resp:
                    if json.loads(resp.read())["ready"]:
                        break
            except OSError:
                time.sleep(0.1)
        else:
            raise RuntimeError("service did not come up")
        yield url
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def test_ner_protocol_conformance(tmp_path):
    with criterion("NER protocol conformance (golden suite, live-vs-stub, constants)"):
        # 10 golden request/response pairs, exact JSON equality
        client = TestClient(create_app(mode="gazetteer", gazetteer=GAZETTEER, max_chars=1000))
        assert len(GOLDEN_CASES) == 10
        for request_body, expected in GOLDEN_CASES:
            response = client.post("/ner", json=request_body)
            assert response.status_code == 200
            assert response.json() == expected

        # primary client against the live service == in-process stub, exactly
        loc = Locator(surface=Surface.WORKING_TREE, path="doc.md")
        corpus = [
            b"# reviewed by Alice Zhang\n",
            "ALICE ZHANG & Acme Corp met Теодор Voslin".encode(),
            b"",
            b"plain text",
        ]
        with live_gazetteer_service(tmp_path) as url:
            http_client = HttpNerClient(url=url)
            stub_client = GazetteerNerClient(names=GAZETTEER)
            for text in corpus:
                assert detect_ner(text, loc, http_client) == detect_ner(text, loc, stub_client)

            # published constants: min_score default 0.5; <3-char client discard
            assert NerConfig().min_score == 0.5
            short = TestClient(create_app(mode="gazetteer", gazetteer=["Al"]))
            served = short.post("/ner", json={"text": "met Al"}).json()["entities"]
            assert served == [{"start": 4, "end": 6, "label": "PER", "score": 1.0}]
            assert detect_ner(b"met Al", loc, GazetteerNerClient(names=["Al"])) == []
