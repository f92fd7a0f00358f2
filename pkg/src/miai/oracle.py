"""Black-box query access to a target model.

Attacks only ever see an :class:`Oracle`.  Every answered query is counted
in a :class:`QueryLedger`; with caching enabled, repeated queries are served
from memory and counted as cache hits instead.
"""

from __future__ import annotations

import contextlib
import contextvars
import json
import logging
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Iterable, Mapping

import numpy as np
import pandas as pd

from .dataset import Schema
from .models.target import MalformedQueryError, PredictionResponse, TargetModel

logger = logging.getLogger(__name__)

_current_run: contextvars.ContextVar[str] = contextvars.ContextVar("miai_run", default="default")

__all__ = [
    "HTTPOracle",
    "LocalOracle",
    "MalformedQueryError",
    "Oracle",
    "OracleError",
    "OracleModelError",
    "OracleTransportError",
    "PredictionResponse",
    "QueryBatch",
    "QueryLedger",
    "make_server",
    "serve",
]


class OracleError(RuntimeError):
    pass


class OracleTransportError(OracleError):
    """The oracle could not be reached or answered with garbage."""


class OracleModelError(OracleError):
    """The oracle was reached but the model failed to answer."""


class QueryLedger:
    """Thread-safe query accounting, split by attack run."""

    def __init__(self):
        self._lock = threading.Lock()
        self.total = 0
        self.cache_hits = 0
        self.runs: dict[str, int] = {}

    def record(self, n: int = 1, run: str | None = None) -> None:
        run = run or _current_run.get()
        with self._lock:
            self.total += n
            self.runs[run] = self.runs.get(run, 0) + n

    def record_hits(self, n: int = 1) -> None:
        with self._lock:
            self.cache_hits += n

    def snapshot(self) -> dict:
        with self._lock:
            return {"total": self.total, "cache_hits": self.cache_hits, "runs": dict(self.runs)}


@dataclass(frozen=True)
class QueryBatch:
    labels: np.ndarray
    confidences: np.ndarray
    scores: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.labels)


def _jsonable(v: Any) -> Any:
    if isinstance(v, np.generic):
        return v.item()
    return v


class Oracle:
    """Query interface shared by all backends.

    Subclasses implement :meth:`_answer`, which receives a frame of raw
    attribute values and returns a :class:`QueryBatch`.
    """

    def __init__(self, cache: bool = False, ledger: QueryLedger | None = None, expose_scores: bool = False):
        self.cache = cache
        self.ledger = ledger if ledger is not None else QueryLedger()
        self.expose_scores = expose_scores
        self._cache: dict[tuple, tuple] = {}
        self._cache_lock = threading.Lock()

    @property
    def schema(self) -> Schema:
        raise NotImplementedError

    @property
    def input_names(self) -> list[str]:
        return [a.name for a in self.schema.inputs]

    @contextlib.contextmanager
    def run(self, name: str, keep_outer: bool = False):
        """Attribute queries issued inside the block to the run ``name``.

        With ``keep_outer`` an already active run label wins.
        """
        if keep_outer and _current_run.get() != "default":
            yield self
            return
        token = _current_run.set(name)
        try:
            yield self
        finally:
            _current_run.reset(token)

    def _answer(self, frame: pd.DataFrame) -> QueryBatch:
        raise NotImplementedError

    def _validate(self, frame: pd.DataFrame) -> pd.DataFrame:
        names = self.input_names
        for n in names:
            if n not in frame.columns:
                raise MalformedQueryError(f"missing attribute {n!r}", n)
        return frame[names]

    def query(self, features: Mapping[str, Any]) -> PredictionResponse:
        if not isinstance(features, Mapping):
            raise MalformedQueryError("features must be a mapping of attribute name to value")
        batch = self.query_many(pd.DataFrame([dict(features)]))
        scores = None
        if batch.scores is not None:
            scores = dict(zip(self.schema.target.domain, batch.scores[0].tolist()))
        return PredictionResponse(batch.labels[0], float(batch.confidences[0]), scores)

    def query_many(self, rows: pd.DataFrame | Iterable[Mapping[str, Any]]) -> QueryBatch:
        """Answer many queries; the ledger grows by one per uncached row."""
        frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
        frame = self._validate(frame).reset_index(drop=True)
        if not self.cache:
            batch = self._answer(frame)
            self.ledger.record(len(frame))
            return batch
        return self._cached(frame)

    def _cached(self, frame: pd.DataFrame) -> QueryBatch:
        keys = list(frame.itertuples(index=False, name=None))
        n = len(keys)
        labels = np.empty(n, dtype=object)
        conf = np.empty(n)
        scores = None
        todo: dict[tuple, list[int]] = {}
        with self._cache_lock:
            for i, key in enumerate(keys):
                hit = self._cache.get(key)
                if hit is None:
                    todo.setdefault(key, []).append(i)
                else:
                    labels[i], conf[i], _ = hit
        fresh = [rows[0] for rows in todo.values()]
        if fresh:
            batch = self._answer(frame.iloc[fresh].reset_index(drop=True))
            self.ledger.record(len(fresh))
            with self._cache_lock:
                for j, (key, rows) in enumerate(todo.items()):
                    row_scores = batch.scores[j] if batch.scores is not None else None
                    self._cache[key] = (batch.labels[j], batch.confidences[j], row_scores)
                    for i in rows:
                        labels[i], conf[i] = batch.labels[j], batch.confidences[j]
        hits = n - len(fresh)
        if hits:
            self.ledger.record_hits(hits)
        if self.expose_scores:
            scores = np.vstack([self._cache[k][2] for k in keys]) if n else np.zeros((0, 0))
        return QueryBatch(labels, conf, scores)


class LocalOracle(Oracle):
    """In-process backend wrapping a :class:`TargetModel`."""

    def __init__(self, model: TargetModel, **kwargs):
        super().__init__(**kwargs)
        self.model = model

    @property
    def schema(self) -> Schema:
        return self.model.schema

    def _answer(self, frame: pd.DataFrame) -> QueryBatch:
        labels, conf, scores = self.model.predict_many(frame)
        return QueryBatch(labels, conf, scores if (self.expose_scores or self.cache) else None)


class HTTPOracle(Oracle):
    """Backend talking to a server started with :func:`serve`."""

    def __init__(self, url: str, timeout: float = 10.0, **kwargs):
        super().__init__(**kwargs)
        self.url = url.rstrip("/")
        self.timeout = timeout
        self._schema: Schema | None = None

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        data = json.dumps(body).encode() if body is not None else None
        req = urllib.request.Request(self.url + path, data=data, method=method,
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = resp.read()
        except urllib.error.HTTPError as e:
            detail = {}
            try:
                detail = json.loads(e.read() or b"{}")
            except ValueError:
                pass
            if e.code == 400:
                raise MalformedQueryError(detail.get("error", "bad request"), detail.get("attribute")) from None
            raise OracleModelError(f"server returned {e.code}: {detail.get('error', '')}") from None
        except (urllib.error.URLError, OSError) as e:
            raise OracleTransportError(f"cannot reach {self.url}: {e}") from e
        try:
            return json.loads(payload)
        except ValueError as e:
            raise OracleTransportError(f"invalid JSON from {self.url}") from e

    @property
    def schema(self) -> Schema:
        if self._schema is None:
            self._schema = Schema.from_dict(self._request("GET", "/schema"))
        return self._schema

    def _answer(self, frame: pd.DataFrame) -> QueryBatch:
        n = len(frame)
        labels = np.empty(n, dtype=object)
        conf = np.empty(n)
        want_scores = self.expose_scores or self.cache
        scores = np.zeros((n, len(self.schema.target.domain))) if want_scores else None
        domain = [str(v) for v in self.schema.target.domain]
        for i, row in enumerate(frame.to_dict(orient="records")):
            body = {"attributes": {k: _jsonable(v) for k, v in row.items()}}
            resp = PredictionResponse.from_dict(self._request("POST", "/predict", body))
            labels[i], conf[i] = resp.label, resp.confidence
            if want_scores:
                if resp.scores is None:
                    raise OracleTransportError("server does not expose score vectors")
                scores[i] = [resp.scores[c] for c in domain]
        return QueryBatch(labels, conf, scores)


def _handler(model: TargetModel, expose_scores: bool):
    names = [a.name for a in model.schema.inputs]

    class Handler(BaseHTTPRequestHandler):
        server_version = "miai-oracle/1"

        def log_message(self, fmt, *args):
            logger.debug("%s - %s", self.address_string(), fmt % args)

        def _send(self, code: int, doc: dict) -> None:
            body = json.dumps(doc).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/schema":
                self._send(200, model.schema.to_dict())
            else:
                self._send(404, {"error": f"no route {self.path}"})

        def do_POST(self):
            if self.path != "/predict":
                self._send(404, {"error": f"no route {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                doc = json.loads(self.rfile.read(length) or b"null")
            except ValueError:
                self._send(400, {"error": "body is not valid JSON"})
                return
            attrs = doc.get("attributes") if isinstance(doc, dict) else None
            if not isinstance(attrs, dict):
                self._send(400, {"error": "body must be {\"attributes\": {...}}"})
                return
            for n in names:
                if n not in attrs:
                    self._send(400, {"error": f"missing attribute {n!r}", "attribute": n})
                    return
            try:
                resp = model.predict({n: attrs[n] for n in names})
            except MalformedQueryError as e:
                self._send(400, {"error": str(e), "attribute": e.attribute})
                return
            except Exception as e:  # model failure, never leak internals
                logger.exception("prediction failed")
                self._send(500, {"error": type(e).__name__})
                return
            out = resp.to_dict()
            if not expose_scores:
                out.pop("scores", None)
            self._send(200, out)

    return Handler


def make_server(model: TargetModel, host: str = "127.0.0.1", port: int = 0,
                expose_scores: bool = False) -> ThreadingHTTPServer:
    """Bind a prediction server without starting it; ``port=0`` picks a free port."""
    try:
        server = ThreadingHTTPServer((host, port), _handler(model, expose_scores))
    except OSError as e:
        raise OracleTransportError(f"cannot bind {host}:{port}: {e}") from e
    server.daemon_threads = True
    return server


def parse_bind(bind: str) -> tuple[str, int]:
    host, _, port = bind.rpartition(":")
    return (host or "127.0.0.1"), int(port)


def serve(model: TargetModel, bind: str = "127.0.0.1:8000", expose_scores: bool = False) -> None:
    host, port = parse_bind(bind)
    server = make_server(model, host, port, expose_scores)
    logger.info("serving %s model on http://%s:%d", model.family, *server.server_address[:2])
    try:
        server.serve_forever()
    finally:
        server.server_close()
