"""Named, ordered float32 weight collections and their manifests."""

from __future__ import annotations

import hashlib

import numpy as np


class ConfigurationError(ValueError):
    """Raised for invalid architecture or optimizer configuration."""


class ShapeMismatchError(ValueError):
    """Raised when tensors do not match the shape a contract requires."""


def as_tensor(data, shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Return a contiguous row-major float32 array, validating finiteness."""
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if shape is not None:
        if arr.size != int(np.prod(shape)):
            raise ShapeMismatchError(
                f"buffer of {arr.size} values cannot fill shape {shape}"
            )
        arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise ShapeMismatchError("tensor contains non-finite values")
    return arr


def manifest_hash(entries: tuple[tuple[str, np.ndarray], ...]) -> str:
    """Digest over tensor names and shapes; equal digests mean shape-compatible."""
    h = hashlib.sha256()
    for name, arr in entries:
        h.update(name.encode("utf-8"))
        h.update(b"(")
        h.update(",".join(str(d) for d in arr.shape).encode("ascii"))
        h.update(b");")
    return h.hexdigest()


class ModelWeights:
    """Ordered (name, float32 tensor) pairs; the unit exchanged between nodes.

    Immutable once constructed: the backing arrays are marked read-only, so a
    value can be handed between threads safely. Entry order is the build order
    of the architecture and is part of the manifest contract.
    """

    __slots__ = ("_entries", "_index", "_manifest")

    def __init__(self, entries):
        seen: set[str] = set()
        frozen = []
        for name, arr in entries:
            if name in seen:
                raise ValueError(f"duplicate tensor name {name!r}")
            seen.add(name)
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            arr.flags.writeable = False
            frozen.append((name, arr))
        self._entries: tuple[tuple[str, np.ndarray], ...] = tuple(frozen)
        self._index = {name: arr for name, arr in self._entries}
        self._manifest = manifest_hash(self._entries)

    @property
    def entries(self) -> tuple[tuple[str, np.ndarray], ...]:
        return self._entries

    @property
    def manifest_hash(self) -> str:
        return self._manifest

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self._entries)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._index[name]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def compatible_with(self, other: "ModelWeights") -> bool:
        return self._manifest == other._manifest

    def as_dict(self) -> dict[str, np.ndarray]:
        """Mutable float32 copies keyed by name, for optimizer updates."""
        return {name: arr.copy() for name, arr in self._entries}

    def replace(self, arrays: dict[str, np.ndarray]) -> "ModelWeights":
        """New ModelWeights with the same names/order and new values."""
        missing = set(self._index) - set(arrays)
        if missing:
            raise ShapeMismatchError(f"missing tensors: {sorted(missing)}")
        out = []
        for name, old in self._entries:
            arr = np.ascontiguousarray(arrays[name], dtype=np.float32)
            if arr.shape != old.shape:
                raise ShapeMismatchError(
                    f"tensor {name!r}: shape {arr.shape} != manifest {old.shape}"
                )
            out.append((name, arr))
        return ModelWeights(out)

    def allclose(self, other: "ModelWeights", atol: float = 0.0) -> bool:
        if not self.compatible_with(other):
            return False
        return all(
            np.allclose(a, b, rtol=0.0, atol=atol)
            for (_, a), (_, b) in zip(self._entries, other._entries)
        )

    def max_abs_diff(self, other: "ModelWeights") -> float:
        if not self.compatible_with(other):
            raise ShapeMismatchError("manifests differ")
        if len(self._entries) == 0:
            return 0.0
        return max(
            float(np.max(np.abs(a.astype(np.float64) - b.astype(np.float64))))
            if a.size
            else 0.0
            for (_, a), (_, b) in zip(self._entries, other._entries)
        )

    def tobytes(self) -> bytes:
        """Concatenated raw little-endian float32 buffers, in entry order."""
        return b"".join(arr.astype("<f4", copy=False).tobytes() for _, arr in self._entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelWeights):
            return NotImplemented
        return self.compatible_with(other) and self.tobytes() == other.tobytes()

    def __hash__(self):
        return hash((self._manifest, len(self._entries)))

    def __repr__(self) -> str:
        n_params = sum(arr.size for _, arr in self._entries)
        return f"ModelWeights({len(self._entries)} tensors, {n_params} params, manifest={self._manifest[:12]})"
