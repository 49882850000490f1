"""Hash-bucketed heavy-hitter sketches over the columns of a turnstile matrix.

A :class:`BasicHH` keeps ``w`` buckets; bucket ``v`` holds the signed sum of
every column hashed to it.  A :class:`CompleteHH` repeats this ``R`` times with
independent seeds and answers a column query with the bucket whose
transformed norm is the (lower) median across repetitions.

Buckets accumulate raw integer stream units, so every sum is exact and the
result does not depend on update order.  Storage starts as a sparse
coordinate map and switches to a dense ``(w, dim)`` array once more than
1/16 of the cells are nonzero; both give identical answers.
"""
from __future__ import annotations

import math
import struct
from fractions import Fraction
from typing import Sequence

import numpy as np

from .hashing import Family, HashSeed, bucket_hash, sign_hash
from .transform import TransformSpec

__all__ = [
    "LIGHT_NOISE_C",
    "StreamUpdateError",
    "BasicHH",
    "CompleteHH",
    "hh_width",
    "hh_reps",
    "hh_merge",
]

LIGHT_NOISE_C = 10.0
DENSITY_THRESHOLD = 1.0 / 16.0
MAGIC = b"HHSK"
VERSION = 1


class StreamUpdateError(IndexError):
    """An update addressed a column or coordinate outside the sketch."""


def hh_width(phi: float, nu: float, cap: int | None = None) -> int:
    """Bucket count ceil(81 C / (phi^2 nu^3)), optionally capped."""
    w = math.ceil(81.0 * LIGHT_NOISE_C / (phi * phi * nu**3))
    return max(1, min(w, cap)) if cap is not None else w


def hh_reps(n: int, delta: float) -> int:
    return max(1, math.ceil(4.0 * math.log(n / delta)))


def _as_index_array(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=np.int64))


class BasicHH:
    """Single repetition: w buckets, each a length-``dim`` vector."""

    def __init__(
        self,
        n_items: int,
        dim: int,
        w: int,
        bucket_seed: HashSeed,
        sign_seed: HashSeed,
        transform: TransformSpec | None = None,
        tail_identity: bool = False,
        storage: str = "auto",
    ):
        if n_items < 1 or dim < 1:
            raise ValueError("sketch dimensions must be positive")
        if w < 1:
            raise ValueError("bucket count must be at least 1")
        if storage not in ("auto", "dense", "sparse"):
            raise ValueError(f"unknown storage mode {storage!r}")
        self.n_items = n_items
        self.dim = dim
        self.w = w
        self.bucket_seed = bucket_seed
        self.sign_seed = sign_seed
        self.transform = transform or TransformSpec()
        self.tail_identity = tail_identity
        self.storage = storage

        items = np.arange(n_items)
        self.bucket_of = bucket_hash(bucket_seed, items, w)
        self.sign_of = sign_hash(sign_seed, items).astype(np.float64)

        self._dense: np.ndarray | None = None
        self._keys = np.zeros(0, dtype=np.int64)
        self._vals = np.zeros(0, dtype=np.float64)
        self._pending: list[tuple[np.ndarray, np.ndarray]] = []
        self._pending_size = 0
        self._norms: np.ndarray | None = None
        if storage == "dense":
            self._dense = np.zeros((w, dim))

    @classmethod
    def draw(cls, n_items, dim, w, rng, **kwargs) -> "BasicHH":
        return cls(
            n_items,
            dim,
            w,
            HashSeed.draw(Family.BUCKET, rng),
            HashSeed.draw(Family.SIGN, rng),
            **kwargs,
        )

    def empty_like(self) -> "BasicHH":
        return BasicHH(
            self.n_items,
            self.dim,
            self.w,
            self.bucket_seed,
            self.sign_seed,
            self.transform,
            self.tail_identity,
            self.storage,
        )

    # -- ingest ---------------------------------------------------------

    def _validate(self, items, coords, deltas):
        bad = (items < 0) | (items >= self.n_items) | (coords < 0) | (coords >= self.dim)
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise StreamUpdateError(
                f"update (coord={int(coords[k])}, item={int(items[k])}, "
                f"delta={deltas[k]:g}) outside sketch of {self.dim} x {self.n_items}"
            )

    def update(self, item: int, coord: int, delta: int) -> None:
        self.update_batch([item], [coord], [delta])

    def update_batch(self, items, coords, deltas) -> None:
        """Apply turnstile updates: bucket[h(item)][coord] += sign(item) * delta."""
        items = _as_index_array(items)
        coords = _as_index_array(coords)
        deltas = np.atleast_1d(np.asarray(deltas, dtype=np.float64))
        if not (items.shape == coords.shape == deltas.shape):
            raise ValueError("update arrays must have equal length")
        if items.size == 0:
            return
        self._validate(items, coords, deltas)
        keys = self.bucket_of[items] * self.dim + coords
        vals = self.sign_of[items] * deltas
        self._norms = None
        if self._dense is not None:
            flat = self._dense.reshape(-1)
            if keys.size * 8 < flat.size:
                np.add.at(flat, keys, vals)
            else:
                flat += np.bincount(keys, weights=vals, minlength=flat.size)
            return
        self._pending.append((keys, vals))
        self._pending_size += keys.size
        if self._pending_size > max(4 * self._keys.size, 1 << 20):
            self._coalesce()

    def _coalesce(self) -> None:
        if self._pending:
            keys = np.concatenate([self._keys] + [k for k, _ in self._pending])
            vals = np.concatenate([self._vals] + [v for _, v in self._pending])
            self._pending = []
            self._pending_size = 0
            uniq, inv = np.unique(keys, return_inverse=True)
            sums = np.bincount(inv, weights=vals, minlength=uniq.size)
            keep = sums != 0
            self._keys, self._vals = uniq[keep], sums[keep]
        cells = self.w * self.dim
        if self.storage == "auto" and self._keys.size > DENSITY_THRESHOLD * cells:
            self._densify()

    def _densify(self) -> None:
        dense = np.zeros(self.w * self.dim)
        dense[self._keys] = self._vals
        self._dense = dense.reshape(self.w, self.dim)
        self._keys = np.zeros(0, dtype=np.int64)
        self._vals = np.zeros(0, dtype=np.float64)

    # -- read access ----------------------------------------------------

    @property
    def is_dense(self) -> bool:
        self._coalesce()
        return self._dense is not None

    def buckets(self) -> np.ndarray:
        """All buckets as a dense ``(w, dim)`` array of raw sums."""
        self._coalesce()
        if self._dense is not None:
            return self._dense.copy()
        dense = np.zeros(self.w * self.dim)
        dense[self._keys] = self._vals
        return dense.reshape(self.w, self.dim)

    def bucket(self, v: int) -> np.ndarray:
        """Raw sums held by bucket v."""
        self._coalesce()
        if self._dense is not None:
            return self._dense[v].copy()
        lo, hi = np.searchsorted(self._keys, [v * self.dim, (v + 1) * self.dim])
        out = np.zeros(self.dim)
        out[self._keys[lo:hi] - v * self.dim] = self._vals[lo:hi]
        return out

    def transformed(self, raw: np.ndarray, coords: np.ndarray | None = None) -> np.ndarray:
        """Apply f (or g when ``tail_identity``) to raw values."""
        out = self.transform.apply_raw(raw)
        if self.tail_identity:
            if coords is None:
                out[..., -1] = self.transform.real(raw[..., -1])
            else:
                tail = coords == self.dim - 1
                out[tail] = self.transform.real(raw[tail])
        return out

    def bucket_norms(self) -> np.ndarray:
        """Squared transformed norm of every bucket, shape ``(w,)``."""
        if self._norms is None:
            self._coalesce()
            if self._dense is not None:
                t = self.transformed(self._dense)
                self._norms = np.einsum("ij,ij->i", t, t)
            else:
                coords = self._keys % self.dim
                t = self.transformed(self._vals, coords)
                self._norms = np.bincount(
                    self._keys // self.dim, weights=t * t, minlength=self.w
                )
        return self._norms

    def item_norms(self, items) -> np.ndarray:
        return self.bucket_norms()[self.bucket_of[_as_index_array(items)]]

    def is_zero(self) -> bool:
        self._coalesce()
        if self._dense is not None:
            return not np.any(self._dense)
        return self._keys.size == 0

    @property
    def nbytes(self) -> int:
        """Payload bytes: bucket storage plus both seeds."""
        self._coalesce()
        body = self._dense.nbytes if self._dense is not None else 16 * self._keys.size
        return body + len(self.bucket_seed.to_bytes()) + len(self.sign_seed.to_bytes())

    def same_layout(self, other: "BasicHH") -> bool:
        return (
            self.n_items == other.n_items
            and self.dim == other.dim
            and self.w == other.w
            and self.bucket_seed == other.bucket_seed
            and self.sign_seed == other.sign_seed
            and self.transform == other.transform
            and self.tail_identity == other.tail_identity
        )

    def __add__(self, other: "BasicHH") -> "BasicHH":
        return hh_merge(self, other)


def hh_merge(a, b):
    """Bucketwise sum of two sketches built with identical seeds and shape."""
    if isinstance(a, CompleteHH) and isinstance(b, CompleteHH):
        if a.R != b.R:
            raise ValueError("cannot merge sketches with different repetition counts")
        return CompleteHH([hh_merge(x, y) for x, y in zip(a.reps, b.reps)])
    if not (isinstance(a, BasicHH) and isinstance(b, BasicHH)):
        raise TypeError("hh_merge expects two BasicHH or two CompleteHH sketches")
    if not a.same_layout(b):
        raise ValueError("cannot merge sketches with different seeds or shapes")
    out = a.empty_like()
    a._coalesce()
    b._coalesce()
    for src in (a, b):
        if src._dense is not None:
            rows, cols = np.nonzero(src._dense)
            keys = rows * src.dim + cols
            vals = src._dense[rows, cols]
        else:
            keys, vals = src._keys, src._vals
        out._pending.append((keys.copy(), vals.copy()))
        out._pending_size += keys.size
    if out._dense is not None:
        pending, out._pending, out._pending_size = out._pending, [], 0
        for keys, vals in pending:
            out._dense.reshape(-1)[keys] += vals
    out._coalesce()
    return out


class CompleteHH:
    """R independent :class:`BasicHH` repetitions queried by median norm."""

    def __init__(self, reps: Sequence[BasicHH]):
        reps = list(reps)
        if not reps:
            raise ValueError("need at least one repetition")
        first = reps[0]
        for r in reps[1:]:
            if (r.n_items, r.dim, r.w) != (first.n_items, first.dim, first.w):
                raise ValueError("all repetitions must share (n, dim, w)")
        self.reps = reps

    @classmethod
    def draw(
        cls,
        n_items: int,
        dim: int,
        w: int,
        R: int,
        rng: np.random.Generator,
        **kwargs,
    ) -> "CompleteHH":
        return cls([BasicHH.draw(n_items, dim, w, rng, **kwargs) for _ in range(R)])

    @classmethod
    def for_guarantee(
        cls,
        n: int,
        nu: float,
        phi: float,
        delta: float,
        rng: np.random.Generator,
        dim: int | None = None,
        width_cap: int | None = None,
        **kwargs,
    ) -> "CompleteHH":
        """Size the sketch from (nu, phi, delta); width capped at n by default."""
        w = hh_width(phi, nu, cap=n if width_cap is None else width_cap)
        return cls.draw(n, dim or n, w, hh_reps(n, delta), rng, **kwargs)

    @property
    def R(self) -> int:
        return len(self.reps)

    @property
    def n_items(self) -> int:
        return self.reps[0].n_items

    @property
    def dim(self) -> int:
        return self.reps[0].dim

    @property
    def w(self) -> int:
        return self.reps[0].w

    def update(self, item: int, coord: int, delta: int) -> None:
        self.update_batch([item], [coord], [delta])

    def update_batch(self, items, coords, deltas) -> None:
        items = _as_index_array(items)
        coords = _as_index_array(coords)
        deltas = np.atleast_1d(np.asarray(deltas, dtype=np.float64))
        # validate once so a bad update leaves every repetition untouched
        self.reps[0]._validate(items, coords, deltas)
        for rep in self.reps:
            rep.update_batch(items, coords, deltas)

    def rep_norms(self, items) -> np.ndarray:
        """Per-repetition transformed bucket norms, shape ``(R, len(items))``."""
        return np.stack([rep.item_norms(items) for rep in self.reps])

    def median_rep(self, items) -> np.ndarray:
        """Index of the lower-median repetition for each item."""
        order = np.argsort(self.rep_norms(items), axis=0, kind="stable")
        return order[(self.R - 1) // 2]

    def estimates(self, items) -> np.ndarray:
        """Lower-median squared transformed norm for each item."""
        norms = self.rep_norms(items)
        return np.sort(norms, axis=0)[(self.R - 1) // 2]

    def query(self, item: int) -> np.ndarray:
        """Sign-corrected bucket of the median repetition, in real units.

        This is the count-sketch estimate sign(item) * H[h(item)]; its
        transformed norm is what the median was taken over.
        """
        item = int(item)
        if not 0 <= item < self.n_items:
            raise StreamUpdateError(f"item {item} outside [0, {self.n_items})")
        r = int(self.median_rep([item])[0])
        rep = self.reps[r]
        raw = rep.sign_of[item] * rep.bucket(int(rep.bucket_of[item]))
        return rep.transform.real(raw)

    @property
    def nbytes(self) -> int:
        return sum(rep.nbytes for rep in self.reps)

    def is_zero(self) -> bool:
        return all(rep.is_zero() for rep in self.reps)

    # -- checkpoint -----------------------------------------------------

    def to_bytes(self) -> bytes:
        first = self.reps[0]
        eta = first.transform.eta
        parts = [
            MAGIC,
            struct.pack(
                "<HQQQIdqqB",
                VERSION,
                first.n_items,
                first.dim,
                first.w,
                self.R,
                first.transform.log_base,
                eta.numerator,
                eta.denominator,
                int(first.tail_identity),
            ),
        ]
        for rep in self.reps:
            parts.append(rep.bucket_seed.to_bytes())
            parts.append(rep.sign_seed.to_bytes())
        for rep in self.reps:
            parts.append(rep.buckets().astype("<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0, storage: str = "auto"):
        """Restore a sketch; returns (sketch, offset just past it)."""
        if data[offset : offset + 4] != MAGIC:
            raise ValueError("not a heavy-hitter sketch blob")
        offset += 4
        header = struct.Struct("<HQQQIdqqB")
        version, n_items, dim, w, R, base, num, den, tail = header.unpack_from(data, offset)
        if version != VERSION:
            raise ValueError(f"unsupported sketch blob version {version}")
        offset += header.size
        transform = TransformSpec(base, Fraction(num, den))
        seeds = []
        for _ in range(R):
            b, offset = HashSeed.from_bytes(data, offset)
            s, offset = HashSeed.from_bytes(data, offset)
            seeds.append((b, s))
        reps = []
        size = w * dim
        for b, s in seeds:
            body = np.frombuffer(data, dtype="<f8", count=size, offset=offset)
            offset += 8 * size
            rep = BasicHH(n_items, dim, w, b, s, transform, bool(tail), storage)
            nz = np.flatnonzero(body)
            if rep._dense is not None:
                rep._dense.reshape(-1)[nz] = body[nz]
            else:
                rep._pending.append((nz.astype(np.int64), body[nz].astype(np.float64)))
                rep._pending_size = nz.size
            reps.append(rep)
        return cls(reps), offset
