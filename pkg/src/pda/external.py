"""Client side of the external classifier wire protocol.

An adapter is any child process speaking line-delimited JSON on its standard
streams:

    -> {"type":"hello","version":1}
    <- {"type":"hello","version":1,"classes":[...],"width":W,"height":H,
        "channels":C,"concurrent":false}
    -> {"type":"classify","id":n,"images":[<base64 float32 LE pixels>, ...]}
    <- {"type":"result","id":n,"probs":[[...], ...]}
    -> {"type":"shutdown"}        (process must exit 0)

Any {"type":"error","id":n,"message":...} reply maps to a classify error.
Pixel buffers are row-major, channel-interleaved little-endian float32.
"""

from __future__ import annotations

import base64
import json
import select
import shlex
import subprocess
import threading
from typing import Sequence

import numpy as np

from .classifier import Classifier, ClassifierError
from .dataset import ClassCatalog
from .image import Image

__all__ = [
    "PROTOCOL_VERSION",
    "ExternalClassifierError",
    "HandshakeError",
    "ExternalClassifier",
    "open_external_classifier",
    "encode_pixels",
    "decode_pixels",
    "run_conformance_check",
]

PROTOCOL_VERSION = 1
DISTRIBUTION_TOL = 1e-6


class ExternalClassifierError(ClassifierError):
    """Protocol violation, adapter failure, or timeout."""


class HandshakeError(ExternalClassifierError):
    pass


def encode_pixels(image: Image) -> str:
    return base64.b64encode(image.pixels.astype("<f4").tobytes()).decode("ascii")


def decode_pixels(data: str, width: int, height: int, channels: int) -> np.ndarray:
    raw = base64.b64decode(data.encode("ascii"), validate=True)
    expected = width * height * channels * 4
    if len(raw) != expected:
        raise ValueError(f"pixel buffer has {len(raw)} bytes, expected {expected}")
    return (
        np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(height, width, channels)
    )


class _LineChannel:
    """Blocking line transport over a child process's stdio, with timeouts."""

    def __init__(self, command: str | Sequence[str]):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self.proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ExternalClassifierError(f"cannot launch adapter {argv!r}: {exc}") from exc

    def send(self, obj: dict) -> None:
        if self.proc.stdin is None or self.proc.poll() is not None:
            raise ExternalClassifierError("adapter process is not running")
        try:
            self.proc.stdin.write(json.dumps(obj) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ExternalClassifierError(f"adapter closed its input: {exc}") from exc

    def recv(self, timeout: float) -> dict:
        assert self.proc.stdout is not None
        fd = self.proc.stdout.fileno()
        ready, _, _ = select.select([fd], [], [], timeout)
        if not ready:
            raise ExternalClassifierError(f"adapter reply timed out after {timeout}s")
        line = self.proc.stdout.readline()
        if not line:
            raise ExternalClassifierError("adapter closed its output")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ExternalClassifierError(f"adapter sent invalid JSON: {line!r}") from exc
        if not isinstance(obj, dict):
            raise ExternalClassifierError(f"adapter reply is not an object: {obj!r}")
        return obj

    def shutdown(self, timeout: float) -> int:
        try:
            self.send({"type": "shutdown"})
        except ExternalClassifierError:
            pass
        try:
            return self.proc.wait(timeout=timeout)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()
            raise ExternalClassifierError("adapter did not exit after shutdown")

    def kill(self) -> None:
        if self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait()


class ExternalClassifier(Classifier):
    """Routes classify calls to an adapter child process.

    The handshake pins protocol version, class count, and input dimensions;
    replies are validated (length, nonnegativity, sum within 1e-6) and then
    renormalized. A lock serializes requests, so a handle is safe to share
    even when the adapter declares itself non-concurrent.
    """

    kind = "external"

    def __init__(
        self,
        command: str | Sequence[str],
        catalog: ClassCatalog | None = None,
        width: int | None = None,
        height: int | None = None,
        channels: int | None = None,
        timeout: float = 30.0,
    ):
        self.timeout = timeout
        self._lock = threading.Lock()
        self._next_id = 0
        self._channel = _LineChannel(command)
        try:
            self._channel.send({"type": "hello", "version": PROTOCOL_VERSION})
            hello = self._channel.recv(timeout)
        except ExternalClassifierError as exc:
            self._channel.kill()
            raise HandshakeError(f"handshake failed: {exc}") from exc
        try:
            self._validate_hello(hello, catalog, width, height, channels)
        except HandshakeError:
            self._channel.kill()
            raise
        advertised = tuple(str(c) for c in hello["classes"])
        super().__init__(
            catalog if catalog is not None else ClassCatalog(advertised),
            int(hello["width"]),
            int(hello["height"]),
            int(hello["channels"]),
        )
        self.concurrent = bool(hello.get("concurrent", False))

    @staticmethod
    def _validate_hello(hello, catalog, width, height, channels) -> None:
        if hello.get("type") != "hello":
            raise HandshakeError(f"expected hello reply, got {hello.get('type')!r}")
        if hello.get("version") != PROTOCOL_VERSION:
            raise HandshakeError(
                f"adapter speaks protocol version {hello.get('version')!r}, "
                f"need {PROTOCOL_VERSION}"
            )
        for key in ("classes", "width", "height", "channels"):
            if key not in hello:
                raise HandshakeError(f"hello reply is missing {key!r}")
        if catalog is not None and len(hello["classes"]) != len(catalog):
            raise HandshakeError(
                f"adapter advertises {len(hello['classes'])} classes, "
                f"catalog has {len(catalog)}"
            )
        for key, want in (("width", width), ("height", height), ("channels", channels)):
            if want is not None and int(hello[key]) != want:
                raise HandshakeError(
                    f"adapter advertises {key}={hello[key]}, expected {want}"
                )

    def classify_batch(self, images: Sequence[Image]) -> np.ndarray:
        for img in images:
            self._check_image(img)
        if not images:
            return np.empty((0, self.n_classes))
        payload = [encode_pixels(img) for img in images]
        with self._lock:
            request_id = self._next_id
            self._next_id += 1
            self._channel.send({"type": "classify", "id": request_id, "images": payload})
            reply = self._channel.recv(self.timeout)
        if reply.get("type") == "error":
            raise ExternalClassifierError(
                f"adapter error for request {reply.get('id')}: {reply.get('message')}"
            )
        if reply.get("type") != "result" or reply.get("id") != request_id:
            raise ExternalClassifierError(
                f"expected result id={request_id}, got {reply.get('type')!r} "
                f"id={reply.get('id')!r}"
            )
        probs = reply.get("probs")
        if not isinstance(probs, list) or len(probs) != len(images):
            raise ExternalClassifierError(
                f"adapter returned {len(probs) if isinstance(probs, list) else '?'} "
                f"distributions for {len(images)} images"
            )
        return np.stack([self._validate_probs(p) for p in probs])

    def _validate_probs(self, probs) -> np.ndarray:
        arr = np.asarray(probs, dtype=np.float64)
        if arr.shape != (self.n_classes,):
            raise ExternalClassifierError(
                f"adapter distribution has shape {arr.shape}, expected ({self.n_classes},)"
            )
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0:
            raise ExternalClassifierError(f"invalid distribution entries: {arr}")
        total = arr.sum()
        if abs(total - 1.0) > DISTRIBUTION_TOL:
            raise ExternalClassifierError(
                f"adapter distribution sums to {total}, outside 1 +/- {DISTRIBUTION_TOL}"
            )
        return arr / total

    def close(self) -> int:
        """Send shutdown and reap the child; returns its exit code."""
        return self._channel.shutdown(self.timeout)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        try:
            self.close()
        except ExternalClassifierError:
            pass


def open_external_classifier(
    command: str | Sequence[str],
    catalog: ClassCatalog | None = None,
    width: int | None = None,
    height: int | None = None,
    channels: int | None = None,
    timeout: float = 30.0,
) -> ExternalClassifier:
    return ExternalClassifier(command, catalog, width, height, channels, timeout)


# ---------------------------------------------------------------------------
# Conformance runner (backs the `serve-check` CLI subcommand)
# ---------------------------------------------------------------------------


def run_conformance_check(
    command: str | Sequence[str],
    rounds: int = 100,
    seed: int = 0,
    timeout: float = 30.0,
    log=lambda line: None,
) -> bool:
    """Drive an adapter through handshake, random classifies, the error
    path, and shutdown. Returns True iff every check passes."""
    ok = True

    def check(name: str, passed: bool, detail: str = "") -> None:
        nonlocal ok
        ok = ok and passed
        log(("ok - " if passed else "FAIL - ") + name + (f": {detail}" if detail else ""))

    try:
        clf = ExternalClassifier(command, timeout=timeout)
    except ExternalClassifierError as exc:
        check("handshake", False, str(exc))
        return False
    check(
        "handshake",
        True,
        f"K={clf.n_classes} {clf.width}x{clf.height}x{clf.channels} "
        f"concurrent={clf.concurrent}",
    )

    rng = np.random.default_rng(seed)
    failures = 0
    done = 0
    while done < rounds:
        batch = int(rng.integers(1, 5))
        batch = min(batch, rounds - done)
        images = [
            Image(rng.random((clf.height, clf.width, clf.channels)))
            for _ in range(batch)
        ]
        try:
            probs = clf.classify_batch(images)
            if probs.shape != (batch, clf.n_classes):
                failures += 1
        except ExternalClassifierError:
            failures += 1
        done += batch
    check(
        f"classify round-trips ({rounds} images)",
        failures == 0,
        f"{failures} failed" if failures else "",
    )

    # Error path: a bogus pixel buffer must produce an error reply carrying
    # the request id, and the process must keep serving afterwards.
    with clf._lock:
        bad_id = clf._next_id
        clf._next_id += 1
        clf._channel.send({"type": "classify", "id": bad_id, "images": ["@@not-base64@@"]})
        try:
            reply = clf._channel.recv(timeout)
            check(
                "error reply for malformed request",
                reply.get("type") == "error" and reply.get("id") == bad_id,
                f"got {reply!r}" if reply.get("type") != "error" else "",
            )
        except ExternalClassifierError as exc:
            check("error reply for malformed request", False, str(exc))
    try:
        clf.classify(Image(np.full((clf.height, clf.width, clf.channels), 0.5)))
        check("adapter continues after error", True)
    except ExternalClassifierError as exc:
        check("adapter continues after error", False, str(exc))

    try:
        code = clf.close()
        check("clean shutdown (exit 0)", code == 0, f"exit code {code}" if code else "")
    except ExternalClassifierError as exc:
        check("clean shutdown (exit 0)", False, str(exc))
    return ok
