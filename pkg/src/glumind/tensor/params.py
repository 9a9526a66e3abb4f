"""Named parameter storage and the binary checkpoint format.

Checkpoint layout (all integers little-endian)::

    b"GLUM"  u16 version  u32 count
    count x [ u16 name_len, name (utf-8), u8 rank, rank x u32 dim, f64 payload ]

Records are written in lexicographic name order.
"""

from __future__ import annotations

import struct
from collections.abc import Iterator, Mapping
from pathlib import Path

import numpy as np

from glumind.errors import ContractError, ParseError
from glumind.tensor.core import Tensor

MAGIC = b"GLUM"
FORMAT_VERSION = 1


class ParamStore(Mapping[str, Tensor]):
    """Ordered map of dotted names to trainable tensors.

    Iteration is always lexicographic by name, independent of insertion order.
    """

    def __init__(self, entries: Mapping[str, np.ndarray | Tensor] | None = None):
        self._entries: dict[str, Tensor] = {}
        for name, value in (entries or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> Tensor:
        if name in self._entries:
            raise ContractError(f"duplicate parameter name {name!r}")
        data = value.data if isinstance(value, Tensor) else value
        t = Tensor(data, requires_grad=True, name=name)
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._entries))

    def __len__(self) -> int:
        return len(self._entries)

    def items(self):
        return [(k, self._entries[k]) for k in self]

    def num_values(self) -> int:
        return int(sum(t.size for t in self._entries.values()))

    def copy(self) -> "ParamStore":
        return ParamStore({k: t.data.copy() for k, t in self.items()})

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.items()}

    def assign(self, arrays: Mapping[str, np.ndarray]) -> None:
        """Overwrite values in place (shapes must match)."""
        for name, arr in arrays.items():
            t = self._entries[name]
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != t.shape:
                raise ContractError(f"{name}: shape {arr.shape} != {t.shape}")
            t.data = arr.copy()

    def zero_grad(self) -> None:
        for t in self._entries.values():
            t.grad = None

    def bitwise_equal(self, other: "ParamStore") -> bool:
        if list(self) != list(other):
            return False
        return all(
            self[k].shape == other[k].shape and self[k].data.tobytes() == other[k].data.tobytes()
            for k in self
        )


def to_bytes(params: ParamStore) -> bytes:
    chunks = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(params))]
    for name, t in params.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", t.ndim))
        chunks.append(struct.pack(f"<{t.ndim}I", *t.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(chunks)


def from_bytes(buf: bytes) -> ParamStore:
    if buf[:4] != MAGIC:
        raise ParseError("not a GLUM checkpoint (bad magic)")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise ParseError("truncated checkpoint")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    version, count = take("<HI")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported checkpoint version {version}")
    entries = {}
    for _ in range(count):
        (nlen,) = take("<H")
        name = buf[pos : pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = take("<B")
        dims = take(f"<{rank}I") if rank else ()
        n = int(np.prod(dims)) if dims else 1
        if pos + 8 * n > len(buf):
            raise ParseError("truncated checkpoint payload")
        arr = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).astype(np.float64).reshape(dims)
        pos += 8 * n
        entries[name] = arr
    if pos != len(buf):
        raise ParseError("trailing bytes after checkpoint records")
    return ParamStore(entries)


def save(params: ParamStore, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(params))


def load(path: str | Path) -> ParamStore:
    return from_bytes(Path(path).read_bytes())
