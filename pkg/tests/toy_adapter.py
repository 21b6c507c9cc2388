"""Minimal stdio classifier adapter used as a test double.

Speaks the line-delimited JSON protocol. Modes:
  constant:<p1,p2,...>  fixed distribution
  pixelmean             returns (mean, 1-mean) of the pixel buffer (K=2)
  badsum                replies (0.6, 0.6) to every classify
  crash-on-classify     raises inside predict (must produce an error reply)
"""

import argparse
import base64
import json
import struct
import sys


def read_pixels(b64: str, count: int) -> list[float]:
    raw = base64.b64decode(b64.encode("ascii"), validate=True)
    if len(raw) != count * 4:
        raise ValueError(f"expected {count * 4} bytes, got {len(raw)}")
    return list(struct.unpack(f"<{count}f", raw))


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--mode", default="constant:0.5,0.5")
    ap.add_argument("--classes", default="a,b")
    ap.add_argument("--width", type=int, default=4)
    ap.add_argument("--height", type=int, default=4)
    ap.add_argument("--channels", type=int, default=1)
    ap.add_argument("--version", type=int, default=1)
    args = ap.parse_args()
    classes = args.classes.split(",")
    n_pixels = args.width * args.height * args.channels

    def predict(pixels):
        if args.mode.startswith("constant:"):
            return [float(v) for v in args.mode.split(":", 1)[1].split(",")]
        if args.mode == "pixelmean":
            m = sum(pixels) / len(pixels)
            return [m, 1.0 - m]
        if args.mode == "badsum":
            return [0.6, 0.6]
        if args.mode == "crash-on-classify":
            raise RuntimeError("synthetic predict failure")
        raise ValueError(f"unknown mode {args.mode}")

    for line in sys.stdin:
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            print(json.dumps({"type": "error", "id": None, "message": "bad json"}), flush=True)
            continue
        mtype = msg.get("type")
        if mtype == "hello":
            print(
                json.dumps(
                    {
                        "type": "hello",
                        "version": args.version,
                        "classes": classes,
                        "width": args.width,
                        "height": args.height,
                        "channels": args.channels,
                        "concurrent": False,
                    }
                ),
                flush=True,
            )
        elif mtype == "classify":
            try:
                probs = [predict(read_pixels(b, n_pixels)) for b in msg["images"]]
                print(json.dumps({"type": "result", "id": msg.get("id"), "probs": probs}), flush=True)
            except Exception as exc:
                print(
                    json.dumps({"type": "error", "id": msg.get("id"), "message": str(exc)}),
                    flush=True,
                )
        elif mtype == "shutdown":
            return 0
        else:
            print(
                json.dumps({"type": "error", "id": msg.get("id"), "message": f"unknown type {mtype}"}),
                flush=True,
            )
    return 0


if __name__ == "__main__":
    sys.exit(main())
