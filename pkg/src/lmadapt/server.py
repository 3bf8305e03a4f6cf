"""HTTP service for the human-evaluation workflow.

Endpoints (JSON, UTF-8):
  GET  /api/lists/{A|B}           blinded item array (no origin/model fields)
  POST /api/annotations           one annotation; 409 on duplicate
  GET  /api/report                aggregated error report
  GET  /api/progress/{evaluator}  submission counts for one evaluator

Optionally serves a static frontend directory at /.
"""

from __future__ import annotations

import json
import logging
import mimetypes
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .humeval import Annotation, AnnotationStore, DuplicateAnnotation, Experiment, aggregate

logger = logging.getLogger(__name__)


def make_handler(experiment: Experiment, store: AnnotationStore, static_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            logger.debug("%s - %s", self.address_string(), fmt % args)

        def _send_json(self, payload, status: int = 200) -> None:
            body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            if parts[:2] == ["api", "lists"] and len(parts) == 3:
                try:
                    payload = experiment.blinded_list(parts[2])
                except KeyError:
                    self._send_json({"error": f"unknown list {parts[2]!r}"}, 404)
                    return
                self._send_json(payload)
            elif parts == ["api", "report"]:
                report = aggregate(store.annotations(), experiment)
                self._send_json(report.to_dict())
            elif parts[:2] == ["api", "progress"] and len(parts) == 3:
                evaluator = parts[2]
                assigned = None
                for list_id, evs in experiment.metadata.get("evaluators", {}).items():
                    if evaluator in evs:
                        assigned = list_id
                self._send_json({
                    "evaluator": evaluator,
                    "annotated": store.count_for(evaluator),
                    "list": assigned,
                    "total": len(experiment.lists[assigned]) if assigned else None,
                })
            elif static_dir is not None and not parts[:1] == ["api"]:
                self._serve_static(parts)
            else:
                self._send_json({"error": "not found"}, 404)

        def _serve_static(self, parts: list[str]) -> None:
            rel = "/".join(parts) if parts else "index.html"
            target = (static_dir / rel).resolve()
            if not str(target).startswith(str(static_dir.resolve())) or not target.is_file():
                self._send_json({"error": "not found"}, 404)
                return
            body = target.read_bytes()
            ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            if self.path.rstrip("/") != "/api/annotations":
                self._send_json({"error": "not found"}, 404)
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                rec = json.loads(self.rfile.read(length).decode("utf-8"))
                ann = Annotation(
                    item_id=rec["item_id"],
                    evaluator_id=rec["evaluator_id"],
                    flags={k: bool(v) for k, v in rec["flags"].items()},
                    timestamp=rec.get("timestamp", ""),
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as err:
                self._send_json({"error": f"malformed annotation: {err}"}, 400)
                return
            try:
                experiment.item_by_id(ann.item_id)
            except KeyError:
                self._send_json({"error": f"unknown item {ann.item_id!r}"}, 400)
                return
            try:
                store.add(ann)
            except DuplicateAnnotation as err:
                self._send_json({"error": str(err)}, 409)
                return
            self._send_json({"status": "ok", "item_id": ann.item_id}, 201)

    return Handler


def make_server(
    experiment: Experiment,
    store: AnnotationStore,
    host: str = "127.0.0.1",
    port: int = 8765,
    static_dir: str | Path | None = None,
) -> ThreadingHTTPServer:
    static = Path(static_dir) if static_dir else None
    handler = make_handler(experiment, store, static)
    return ThreadingHTTPServer((host, port), handler)
