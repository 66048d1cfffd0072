"""Single-file checkpoint container.

Layout::

    bggan-ckpt-1
    meta <one-line JSON>
    arrays <count>
    <name>\t<dtype>\t<shape>\t<offset>\t<nbytes>\t<sha256>     (one line per array)
    end
    <raw little-endian array bytes, concatenated in manifest order>

Offsets are relative to the first payload byte.  Arrays are float32 (``f4``);
integer buffers such as batch-norm counters are stored as ``i8``.
"""

from dataclasses import dataclass, field
import hashlib
import json

import numpy as np
import torch

from .exceptions import CheckpointError

FORMAT_VERSION = "bggan-ckpt-1"
_DTYPES = {"f4": np.dtype("<f4"), "i8": np.dtype("<i8")}


@dataclass
class Checkpoint:
    arrays: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def _dtype_code(arr):
    if arr.dtype.kind == "f":
        return "f4"
    if arr.dtype.kind in "iub":
        return "i8"
    raise CheckpointError(f"unsupported dtype {arr.dtype}", "manifest")


def to_bytes(ckpt):
    lines = [FORMAT_VERSION, "meta " + json.dumps(ckpt.meta, sort_keys=True),
             f"arrays {len(ckpt.arrays)}"]
    blobs = []
    offset = 0
    for name, arr in ckpt.arrays.items():
        if any(c in name for c in "\t\n"):
            raise CheckpointError(f"invalid array name {name!r}", "manifest")
        code = _dtype_code(np.asarray(arr))
        blob = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        shape = ",".join(str(d) for d in np.shape(arr))
        lines.append(f"{name}\t{code}\t{shape}\t{offset}\t{len(blob)}\t{hashlib.sha256(blob).hexdigest()}")
        blobs.append(blob)
        offset += len(blob)
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("utf-8") + b"".join(blobs)


def _readline(buf, pos, section):
    end = buf.find(b"\n", pos)
    if end < 0:
        raise CheckpointError("file truncated", section)
    try:
        return buf[pos:end].decode("utf-8"), end + 1
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"undecodable text: {exc}", section) from None


def from_bytes(buf):
    line, pos = _readline(buf, 0, "header")
    if line != FORMAT_VERSION:
        raise CheckpointError(
            f"version mismatch: file has {line[:64]!r}, expected {FORMAT_VERSION!r}", "header"
        )
    line, pos = _readline(buf, pos, "meta")
    if not line.startswith("meta "):
        raise CheckpointError("missing meta line", "meta")
    try:
        meta = json.loads(line[5:])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"bad JSON: {exc}", "meta") from None
    line, pos = _readline(buf, pos, "manifest")
    try:
        tag, count = line.split(" ")
        count = int(count)
        assert tag == "arrays"
    except (ValueError, AssertionError):
        raise CheckpointError(f"bad array count line {line[:64]!r}", "manifest") from None
    entries = []
    for _ in range(count):
        line, pos = _readline(buf, pos, "manifest")
        try:
            name, code, shape, offset, nbytes, digest = line.split("\t")
            shape = tuple(int(d) for d in shape.split(",")) if shape else ()
            entries.append((name, _DTYPES[code], shape, int(offset), int(nbytes), digest))
        except (ValueError, KeyError):
            raise CheckpointError(f"bad manifest entry {line[:64]!r}", "manifest") from None
    line, pos = _readline(buf, pos, "manifest")
    if line != "end":
        raise CheckpointError("manifest not terminated", "manifest")
    payload = memoryview(buf)[pos:]
    arrays = {}
    for name, dtype, shape, offset, nbytes, digest in entries:
        blob = bytes(payload[offset:offset + nbytes])
        if len(blob) != nbytes:
            raise CheckpointError(f"truncated: expected {nbytes} bytes, got {len(blob)}", name)
        if hashlib.sha256(blob).hexdigest() != digest:
            raise CheckpointError("checksum mismatch", name)
        arr = np.frombuffer(blob, dtype=dtype)
        if arr.size != int(np.prod(shape)):
            raise CheckpointError(f"size {arr.size} does not match shape {shape}", name)
        arrays[name] = arr.reshape(shape).copy()
    return Checkpoint(arrays, meta)


def save_checkpoint(path, ckpt):
    data = to_bytes(ckpt)
    with open(path, "wb") as f:
        f.write(data)
    return path


def load_checkpoint(path):
    try:
        with open(path, "rb") as f:
            buf = f.read()
    except OSError as exc:
        raise CheckpointError(str(exc), "file") from None
    return from_bytes(buf)


def read_arrays(path):
    return load_checkpoint(path).arrays


# torch <-> array helpers


def module_arrays(prefix, module):
    return {f"{prefix}.{k}": v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def load_module_arrays(prefix, module, arrays):
    state = {}
    p = prefix + "."
    for k, v in module.state_dict().items():
        key = p + k
        if key not in arrays:
            raise CheckpointError("array missing from checkpoint", key)
        state[k] = torch.from_numpy(arrays[key]).to(v.dtype).reshape(v.shape)
    module.load_state_dict(state)


def optimizer_arrays(prefix, opt):
    sd = opt.state_dict()
    out = {}
    for idx, st in sd["state"].items():
        for key, val in st.items():
            out[f"{prefix}.state.{idx}.{key}"] = torch.as_tensor(val).detach().cpu().numpy().copy()
    return out, sd["param_groups"]


def load_optimizer_arrays(prefix, opt, arrays, param_groups):
    p = prefix + ".state."
    state = {}
    for name, arr in arrays.items():
        if not name.startswith(p):
            continue
        idx, key = name[len(p):].split(".", 1)
        state.setdefault(int(idx), {})[key] = torch.from_numpy(arr.copy())
    groups = []
    for g in param_groups:
        g = dict(g)
        if "betas" in g:
            g["betas"] = tuple(g["betas"])
        groups.append(g)
    opt.load_state_dict({"state": state, "param_groups": groups})
