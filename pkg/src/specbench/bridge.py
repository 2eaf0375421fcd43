"""Line-delimited subprocess protocol for external models (wire protocol v1).

External learners run as adapter subprocesses exchanging one JSON object
per line over stdin/stdout. Calls are stateless: every ``fit_predict``
ships the calibration block and the query block together, and the adapter
answers with one prediction per query row. Numbers travel as shortest
round-trip decimal text; non-finite values are a protocol error on either
side. The engine stays fully functional with no adapters installed —
external models are then reported as unavailable, never crash the run.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
import time
from typing import Any

import numpy as np

from .errors import BridgeError

PROTOCOL_VERSION = 1
HANDSHAKE_TIMEOUT = 60.0
CALL_TIMEOUT = 900.0
SHUTDOWN_GRACE = 5.0


def encode_message(msg: dict[str, Any]) -> str:
    """One protocol message as a single JSON line (non-finite rejected)."""
    try:
        return json.dumps(msg, allow_nan=False, separators=(",", ":"))
    except ValueError as exc:
        raise BridgeError(f"non-finite value in message: {exc}") from exc


def decode_message(line: str) -> dict[str, Any]:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise BridgeError(f"malformed protocol line: {line[:200]!r}") from exc
    if not isinstance(msg, dict):
        raise BridgeError("protocol message must be an object")
    return msg


def _flatten(X) -> list[float]:
    return [float(v) for v in np.asarray(X, dtype=np.float64).ravel()]


class ExternalModelClient:
    """Owns one adapter subprocess; all calls are strictly sequential."""

    def __init__(self, model_id: str, command: list[str], run_id: str = "run",
                 handshake_timeout: float = HANDSHAKE_TIMEOUT):
        self.model_id = model_id
        self.command = list(command)
        self.run_id = run_id
        self.capabilities: tuple[str, ...] = ()
        self._closed = False
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BridgeError(f"cannot spawn adapter {self.command[0]!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._handshake(handshake_timeout)

    def _pump(self):
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def _send(self, msg: dict[str, Any]):
        if self._closed or self._proc.poll() is not None:
            raise BridgeError(f"adapter {self.model_id} is not running")
        try:
            self._proc.stdin.write(encode_message(msg) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeError(f"adapter {self.model_id} pipe closed: {exc}") from exc

    def _recv(self, timeout: float) -> dict[str, Any]:
        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BridgeError(f"adapter {self.model_id} timed out after {timeout:.0f}s")
            try:
                line = self._lines.get(timeout=min(remaining, 0.5))
            except queue.Empty:
                continue
            if line is None:
                raise BridgeError(f"adapter {self.model_id} closed its output")
            line = line.strip()
            if line:
                return decode_message(line)

    def _handshake(self, timeout: float):
        self._send({
            "v": PROTOCOL_VERSION,
            "op": "handshake",
            "run_id": self.run_id,
            "model_id": self.model_id,
        })
        reply = self._recv(timeout)
        if reply.get("v") != PROTOCOL_VERSION:
            self.shutdown()
            raise BridgeError(
                f"adapter {self.model_id}: incompatible protocol version {reply.get('v')!r}"
            )
        if reply.get("status") != "ok":
            err = reply.get("error", "handshake refused")
            self.shutdown()
            raise BridgeError(f"adapter {self.model_id}: {err}")
        self.capabilities = tuple(reply.get("tasks", ()))
        self.diagnostics = reply.get("diagnostics", "")

    def fit_predict(self, task: str, X_cal, y_cal, X_query, fixed_params: dict,
                    timeout: float = CALL_TIMEOUT) -> np.ndarray:
        """Single round-trip: adapter trains with the fixed settings and
        predicts the query block."""
        X_cal = np.atleast_2d(np.asarray(X_cal, dtype=np.float64))
        X_query = np.atleast_2d(np.asarray(X_query, dtype=np.float64))
        y_cal = np.asarray(y_cal)
        if not (np.isfinite(X_cal).all() and np.isfinite(X_query).all()):
            raise BridgeError("non-finite values in matrices")
        self._send({
            "v": PROTOCOL_VERSION,
            "op": "fit_predict",
            "run_id": self.run_id,
            "task": task,
            "fixed_params": dict(fixed_params),
            "n_rows": X_cal.shape[0],
            "n_cols": X_cal.shape[1],
            "x": _flatten(X_cal),
            "y": [float(v) for v in y_cal],
            "q_rows": X_query.shape[0],
            "q_cols": X_query.shape[1],
            "q": _flatten(X_query),
        })
        reply = self._recv(timeout)
        if reply.get("status") != "ok":
            raise BridgeError(f"adapter {self.model_id} error: {reply.get('error', 'unknown')}")
        preds = np.asarray(reply.get("predictions", []), dtype=np.float64)
        if preds.shape != (X_query.shape[0],):
            raise BridgeError(
                f"adapter {self.model_id} returned {preds.size} predictions "
                f"for {X_query.shape[0]} query rows"
            )
        if not np.isfinite(preds).all():
            raise BridgeError(f"adapter {self.model_id}: non-finite prediction")
        if task == "classification":
            return preds.astype(np.int64)
        return preds

    def shutdown(self, grace: float = SHUTDOWN_GRACE):
        """Request a graceful exit, then force-terminate. Idempotent."""
        if self._closed:
            return
        self._closed = True
        if self._proc.poll() is None:
            try:
                self._proc.stdin.write(
                    encode_message({"v": PROTOCOL_VERSION, "op": "shutdown",
                                    "run_id": self.run_id}) + "\n"
                )
                self._proc.stdin.flush()
                self._proc.stdin.close()
            except (BrokenPipeError, OSError):
                pass
            try:
                self._proc.wait(timeout=grace)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                try:
                    self._proc.wait(timeout=1.0)
                except subprocess.TimeoutExpired:
                    pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def spawn_external(model_id: str, command: list[str], run_id: str = "run",
                   handshake_timeout: float = HANDSHAKE_TIMEOUT) -> ExternalModelClient:
    """Spawn an adapter and complete the protocol handshake."""
    return ExternalModelClient(model_id, command, run_id, handshake_timeout)


def make_external_runner(client: ExternalModelClient, timeout: float = CALL_TIMEOUT):
    """Adapt a client to the search module's external-runner callable."""

    def runner(task, X_cal, y_cal, X_query, fixed_params):
        return client.fit_predict(task, X_cal, y_cal, X_query, fixed_params, timeout=timeout)

    return runner
