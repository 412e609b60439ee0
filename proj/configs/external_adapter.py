"""Minimal external environment speaking the newline JSON protocol.

Two retriever knobs and one generator knob on a smooth toy surface.
"""
import json
import math
import sys

SPACE = [
    {"name": "chunk_size", "stage": "retriever", "type": "integer", "range": [128, 1024]},
    {"name": "top_k", "stage": "retriever", "type": "integer", "range": [1, 20]},
    {"name": "temperature", "stage": "generator", "type": "float", "range": [0.0, 1.0]},
]

contexts = {}


def reply(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


for line in sys.stdin:
    req = json.loads(line)
    op = req.get("op")
    if op == "info":
        reply({"query_count": 1, "retrieve_cost_hint": 1.0, "generate_cost_hint": 2.0, "space": SPACE})
    elif op == "retrieve":
        c = req["config"]
        p = math.exp(-((c["chunk_size"] - 512) / 400.0) ** 2) * math.exp(-((c["top_k"] - 8) / 10.0) ** 2)
        cid = "c%d" % len(contexts)
        contexts[cid] = p
        reply({"precision": p, "context_id": cid, "cost": 1.0})
    elif op == "generate":
        p = contexts.get(req["context_id"])
        if p is None:
            reply({"error": "unknown context"})
            continue
        t = req["config"]["temperature"]
        reply({"score": p * math.exp(-((t - 0.3) / 0.4) ** 2), "cost": 2.0})
    elif op == "shutdown":
        reply({})
        break
    else:
        reply({"error": "unknown op %r" % op})
