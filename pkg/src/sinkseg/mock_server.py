"""In-process mock of the box-prompt segmentation service.

Speaks exactly the wire protocol the :class:`~sinkseg.segmenter.HttpBackend`
client expects: ``POST /segment`` with a base64 PPM and box list, JSON reply
with one base64 PGM mask per box plus scores.  Mask content is configurable
(``constant`` paints every pixel the same value, ``boxfill`` paints only the
prompted boxes), and a ``fault`` can be injected to produce each of the
protocol violations a robust client must reject.

Runs on a background thread bound to 127.0.0.1; intended for tests and for
manual experiments via ``python -m sinkseg.mock_server``.
"""

from __future__ import annotations

import argparse
import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .image import image_from_ppm_bytes, pgm_bytes

FAULTS = ("count_mismatch", "bad_dims", "bad_maxval", "bad_score", "http_500")


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, format, *args):  # noqa: A002 - BaseHTTPRequestHandler API
        pass

    def _reply(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode("ascii")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self) -> None:  # noqa: N802 - BaseHTTPRequestHandler API
        owner: MockSegmentServer = self.server.owner  # type: ignore[attr-defined]
        if self.path != "/segment":
            self._reply(404, {"error": f"no such route: {self.path}"})
            return
        with owner._lock:
            owner.request_count += 1
        if owner.fault == "http_500":
            self._reply(500, {"error": "induced server failure"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            doc = json.loads(self.rfile.read(length))
            image = image_from_ppm_bytes(base64.b64decode(doc["image_ppm_b64"]))
            boxes = doc["boxes"]
        except Exception as exc:  # noqa: BLE001 - report malformed requests
            self._reply(400, {"error": f"bad request: {exc}"})
            return

        h, w = image.height, image.width
        masks = []
        for box in boxes:
            if owner.mode == "constant":
                mask = np.full((h, w), owner.value, dtype=np.uint8)
            else:  # boxfill
                mask = np.zeros((h, w), dtype=np.uint8)
                x0, y0, x1, y1 = box
                mask[y0:y1, x0:x1] = owner.value
            masks.append(mask)
        scores = [1.0] * len(boxes)

        maxval = 255
        if owner.fault == "count_mismatch" and masks:
            masks = masks[:-1]
        elif owner.fault == "bad_dims":
            masks = [m[: max(1, h - 1), :] for m in masks]
        elif owner.fault == "bad_maxval":
            maxval = 200
        elif owner.fault == "bad_score" and scores:
            scores[0] = 1.5

        self._reply(
            200,
            {
                "masks_pgm_b64": [
                    base64.b64encode(pgm_bytes(m, maxval)).decode("ascii") for m in masks
                ],
                "scores": scores,
            },
        )


class MockSegmentServer:
    """Tiny threaded HTTP server implementing the segmentation protocol.

    Parameters
    ----------
    mode : {"constant", "boxfill"}
        Mask content: the whole patch, or only the prompted box.
    value : int
        Pixel value (0..255) painted by the chosen mode.
    fault : str or None
        One of :data:`FAULTS` to violate the protocol on purpose.
    port : int
        TCP port; 0 picks a free one.
    """

    def __init__(self, mode: str = "boxfill", value: int = 255, fault: str | None = None, port: int = 0):
        if mode not in ("constant", "boxfill"):
            raise ValueError(f"unknown mode {mode!r}")
        if fault is not None and fault not in FAULTS:
            raise ValueError(f"unknown fault {fault!r} (expected one of {FAULTS})")
        if not 0 <= value <= 255:
            raise ValueError(f"value must be 0..255, got {value}")
        self.mode = mode
        self.value = value
        self.fault = fault
        self.request_count = 0
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer(("127.0.0.1", port), _Handler)
        self._server.owner = self  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockSegmentServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self) -> "MockSegmentServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Run the mock segmentation service")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--mode", choices=("constant", "boxfill"), default="boxfill")
    parser.add_argument("--value", type=int, default=255)
    parser.add_argument("--fault", choices=FAULTS, default=None)
    args = parser.parse_args(argv)
    server = MockSegmentServer(args.mode, args.value, args.fault, args.port)
    print(f"mock segmentation service listening on {server.endpoint}", flush=True)
    try:
        server._server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
