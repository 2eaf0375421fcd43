"""Deliberately broken adapters for protocol-robustness tests.

Select the behaviour with argv[1]: bad_version | nan | hang | error.
"""

import json
import sys
import time


def main(mode):
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        msg = json.loads(line)
        op = msg.get("op")
        if op == "handshake":
            if mode == "bad_version":
                reply = {"v": 99, "status": "ok", "tasks": ["regression"]}
            else:
                reply = {"v": 1, "status": "ok", "tasks": ["regression"]}
        elif op == "fit_predict":
            if mode == "nan":
                reply = {"v": 1, "status": "ok",
                         "predictions": [float("nan")] * msg["q_rows"]}
            elif mode == "error":
                reply = {"v": 1, "status": "error", "error": "synthetic failure"}
            else:
                reply = {"v": 1, "status": "ok", "predictions": [0.0] * msg["q_rows"]}
        elif op == "shutdown":
            if mode == "hang":
                time.sleep(60)
            sys.exit(0)
        else:
            reply = {"v": 1, "status": "error", "error": "unknown op"}
        print(json.dumps(reply), flush=True)
    if mode == "hang":
        time.sleep(60)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "ok")
