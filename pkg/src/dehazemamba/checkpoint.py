"""DHMB1 named-tensor container.

Layout: the 5-byte magic "DHMB1", then a record count, then per record the
name length, UTF-8 name bytes, rank, one extent per axis, and the raw
float32 payload. All integers are 64-bit little-endian unsigned; floats are
little-endian float32. Values round-trip bit-exactly for float32 inputs.

A model checkpoint is one such container holding the named parameters plus
the optimizer supplement: first/second moments under "adamw.m." / "adamw.v."
prefixes and the step counter under "adamw.step".
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DataError

MAGIC = b"DHMB1"
_U64 = struct.Struct("<Q")


def save_tensors(path, named: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_U64.pack(len(named)))
        for name, arr in named.items():
            # tobytes() always emits C order, and asarray keeps rank-0
            # entries rank 0 (ascontiguousarray would promote them to 1-d)
            data = np.asarray(arr, dtype="<f4")
            raw_name = name.encode("utf-8")
            f.write(_U64.pack(len(raw_name)))
            f.write(raw_name)
            f.write(_U64.pack(data.ndim))
            f.write(np.asarray(data.shape, dtype="<u8").tobytes())
            f.write(data.tobytes())


def load_tensors(path) -> dict[str, np.ndarray]:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    if blob[:len(MAGIC)] != MAGIC:
        raise DataError(f"{path} is not a DHMB1 container (bad magic)")
    pos = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise DataError(f"{path} is truncated")
        out = blob[pos:pos + n]
        pos += n
        return out

    count = _U64.unpack(take(8))[0]
    named: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = _U64.unpack(take(8))[0]
        name = take(name_len).decode("utf-8")
        rank = _U64.unpack(take(8))[0]
        shape = tuple(np.frombuffer(take(8 * rank), dtype="<u8").tolist())
        n_el = 1
        for s in shape:
            n_el *= s
        data = np.frombuffer(take(4 * n_el), dtype="<f4").reshape(shape)
        named[name] = data.astype(np.float32)
    if pos != len(blob):
        raise DataError(f"{path} has {len(blob) - pos} trailing bytes")
    return named


def save_checkpoint(path, model, optim=None) -> None:
    """Serialize model parameters plus optimizer moments and step."""
    named = {name: p.data for name, p in model.named_params()}
    if optim is not None:
        for key, arr in optim.state_tensors().items():
            named[key] = arr
    save_tensors(path, named)


def load_checkpoint(path, model, optim=None) -> int:
    """Restore parameters (and optimizer state); returns the stored step.

    Names must match the model exactly; a missing or surplus parameter,
    or a shape mismatch, is a data error.
    """
    named = load_tensors(path)
    step = 0
    if "adamw.step" in named:
        step = int(named.pop("adamw.step")[()])
    moments = {k: v for k, v in named.items() if k.startswith("adamw.")}
    for k in moments:
        named.pop(k)
    params = dict(model.named_params())
    missing = sorted(set(params) - set(named))
    surplus = sorted(set(named) - set(params))
    if missing or surplus:
        raise DataError(
            f"checkpoint {path} does not match the model: missing "
            f"{missing[:3]}, surplus {surplus[:3]}")
    for name, p in params.items():
        arr = named[name]
        if arr.shape != p.shape:
            raise DataError(
                f"checkpoint {path}: parameter {name} has shape {arr.shape}, "
                f"model wants {p.shape}")
        p.data = arr.astype(p.data.dtype)
    if optim is not None:
        optim.load_state_tensors(moments, step)
    return step
