"""Versioned binary records for network weights.

Layout: 8-byte magic, uint32 format version, uint32 header length, a UTF-8
JSON header (descriptor plus array manifest), then the arrays as
little-endian float64 in manifest order.
"""
from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"SHEDREC\x00"
VERSION = 1


def write_record(path, descriptor: dict, arrays: dict) -> None:
    manifest, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        manifest.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps({"descriptor": descriptor, "arrays": manifest}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def read_record(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint record")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported record version {version}")
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    body = data[16 + hlen:]
    arrays = {}
    for item in header["arrays"]:
        n = int(np.prod(item["shape"], dtype=np.int64))
        start = item["offset"]
        arrays[item["name"]] = np.frombuffer(body, dtype="<f8", count=n, offset=start).reshape(item["shape"]).copy()
    return header["descriptor"], arrays


def save_student(path, policy) -> None:
    write_record(path, policy.descriptor(), {"weights": policy.get_flat()})


def load_student(path):
    from .student import StudentPolicy
    desc, arrays = read_record(path)
    if desc.get("kind") != "student":
        raise ValueError(f"{path}: not a student checkpoint")
    return StudentPolicy.from_descriptor(desc, arrays["weights"])


def save_teacher(path, agent) -> None:
    arrays = {name: net.get_flat() for name, net in agent.nets().items()}
    desc = agent.descriptor()
    desc["nets"] = {name: net.descriptor() for name, net in agent.nets().items()}
    write_record(path, desc, arrays)


def save_worldmodel(path, wm) -> None:
    desc = {"kind": "worldmodel", "state_dim": wm.state_dim, "space": wm.space.to_record(),
            "net": wm.net.descriptor(), "schedule": {"K": wm.schedule.K, "beta_min": wm.schedule.beta_min,
                                                     "beta_max": wm.schedule.beta_max},
            "normalizer": wm.norm.to_record() if wm.norm is not None else None}
    write_record(path, desc, {"eps_net": wm.net.net.get_flat()})
