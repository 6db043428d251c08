"""Line-delimited ask/tell protocol for external objectives.

Messages are JSON objects, one per line:

    ask:  {"type": "ask",  "run_id": str, "t": int, "i": int, "x": [floats]}
    tell: {"type": "tell", "run_id": str, "t": int, "i": int, "y": float}

The engine emits one ask per batch slot, then blocks until every slot of
the iteration has received exactly one matching tell.  Tells may arrive
out of order within an iteration; results are committed in slot order.
Tells for an earlier iteration of the same run are ignored (they can be
left over after a checkpoint resume); any other id mismatch or malformed
message aborts the run.
"""

import json
import os
import sys
import time


class ProtocolError(RuntimeError):
    pass


class StdioTransport:
    """Asks on stdout, tells on stdin."""

    def __init__(self, infile=None, outfile=None):
        self.infile = infile or sys.stdin
        self.outfile = outfile or sys.stdout

    def send(self, msg):
        self.outfile.write(json.dumps(msg) + "\n")
        self.outfile.flush()

    def recv(self, timeout=None):
        line = self.infile.readline()
        if not line:
            raise ProtocolError("counterpart closed the stream")
        return line


class FilePairTransport:
    """Asks appended to one file, tells polled from another."""

    def __init__(self, ask_path, tell_path, timeout=60.0, poll=0.02):
        self.ask_path = ask_path
        self.tell_path = tell_path
        self.timeout = timeout
        self.poll = poll
        self._consumed = 0

    def send(self, msg):
        with open(self.ask_path, "a") as fh:
            fh.write(json.dumps(msg) + "\n")

    def recv(self, timeout=None):
        deadline = time.monotonic() + (timeout if timeout is not None else self.timeout)
        while True:
            if os.path.exists(self.tell_path):
                with open(self.tell_path) as fh:
                    lines = fh.read().splitlines()
                if len(lines) > self._consumed:
                    line = lines[self._consumed]
                    self._consumed += 1
                    return line
            if time.monotonic() > deadline:
                raise ProtocolError("timed out waiting for a tell message")
            time.sleep(self.poll)


def _parse_tell(line):
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed message: {line!r}") from exc
    if msg.get("type") != "tell":
        raise ProtocolError(f"expected a tell message, got {msg.get('type')!r}")
    for key in ("run_id", "t", "i", "y"):
        if key not in msg:
            raise ProtocolError(f"tell message missing field {key!r}")
    return msg


def make_ask_tell_query(transport, run_id, timeout=None):
    """Build a query_fn for run_campaign that speaks the ask/tell protocol."""

    def query_fn(t, points):
        for slot, pt in enumerate(points):
            transport.send({"type": "ask", "run_id": run_id, "t": t, "i": slot,
                            "x": [float(v) for v in pt.x_raw]})
        ys = {}
        while len(ys) < len(points):
            msg = _parse_tell(transport.recv(timeout))
            if msg["run_id"] == run_id and msg["t"] < t:
                continue      # stale tell from an already-committed iteration
            if msg["run_id"] != run_id or msg["t"] != t:
                raise ProtocolError(
                    f"tell for ({msg['run_id']}, t={msg['t']}) does not match "
                    f"the pending iteration ({run_id}, t={t})")
            slot = int(msg["i"])
            if slot < 0 or slot >= len(points) or slot in ys:
                raise ProtocolError(f"unexpected or duplicate slot {slot} at t={t}")
            ys[slot] = float(msg["y"])
        return [ys[slot] for slot in range(len(points))]

    return query_fn
