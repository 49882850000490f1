"""Turnstile stream files, dense <-> stream conversion, synthetic corpora.

File format (UTF-8, LF)::

    # comment lines start with '#'
    n d eta_num eta_den [b]
    row col delta
    ...

Indices in the file are 1-based; in Python they are 0-based.  ``delta`` is a
nonzero integer and the real entry is ``eta * sum(delta)``.  The optional
``b`` flag marks column d+1 as a regression target, so such a stream has
d+1 columns.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, NamedTuple

import numpy as np

__all__ = [
    "StreamUpdate",
    "StreamHeader",
    "Stream",
    "StreamFormatError",
    "parse_stream",
    "write_stream",
    "read_stream",
    "save_stream",
    "from_dense",
    "SyntheticCorpus",
    "generate_synthetic",
]


class StreamFormatError(ValueError):
    pass


class StreamUpdate(NamedTuple):
    """A[row, col] += delta (0-based indices, integer stream units)."""

    row: int
    col: int
    delta: int


@dataclass(frozen=True)
class StreamHeader:
    n: int
    d: int
    eta_num: int = 1
    eta_den: int = 1
    b_column: bool = False

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise StreamFormatError("stream dimensions must be positive")
        if self.eta_num <= 0 or self.eta_den <= 0:
            raise StreamFormatError("eta must be a positive rational")

    @property
    def eta(self) -> Fraction:
        return Fraction(self.eta_num, self.eta_den)

    @property
    def n_cols(self) -> int:
        return self.d + 1 if self.b_column else self.d

    def line(self) -> str:
        fields = [self.n, self.d, self.eta_num, self.eta_den]
        return " ".join(map(str, fields)) + (" b" if self.b_column else "")

    @classmethod
    def parse(cls, line: str, lineno: int = 1) -> "StreamHeader":
        parts = line.split()
        flag = False
        if len(parts) == 5:
            if parts[4] != "b":
                raise StreamFormatError(f"line {lineno}: unknown header flag {parts[4]!r}")
            flag = True
            parts = parts[:4]
        if len(parts) != 4:
            raise StreamFormatError(f"line {lineno}: header needs 'n d eta_num eta_den [b]'")
        try:
            n, d, num, den = (int(p) for p in parts)
        except ValueError as exc:
            raise StreamFormatError(f"line {lineno}: {exc}") from None
        return cls(n, d, num, den, flag)


@dataclass
class Stream:
    """A whole stream held as parallel int64 arrays (0-based indices)."""

    header: StreamHeader
    rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    deltas: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.deltas = np.asarray(self.deltas, dtype=np.int64)
        if not (self.rows.shape == self.cols.shape == self.deltas.shape):
            raise StreamFormatError("stream arrays must have equal length")
        _check_bounds(self.header, self.rows, self.cols)

    @classmethod
    def from_updates(cls, header: StreamHeader, updates: Iterable[StreamUpdate]) -> "Stream":
        ups = list(updates)
        if not ups:
            return cls(header)
        arr = np.array(ups, dtype=np.int64)
        return cls(header, arr[:, 0], arr[:, 1], arr[:, 2])

    def __len__(self) -> int:
        return self.rows.size

    def __iter__(self) -> Iterator[StreamUpdate]:
        for r, c, d in zip(self.rows.tolist(), self.cols.tolist(), self.deltas.tolist()):
            yield StreamUpdate(r, c, d)

    @property
    def eta(self) -> Fraction:
        return self.header.eta

    @property
    def shape(self) -> tuple[int, int]:
        return self.header.n, self.header.n_cols

    def dense_raw(self) -> np.ndarray:
        """Reconstructed matrix in integer stream units."""
        n, m = self.shape
        if n * m > 1 << 24:
            raise MemoryError(f"{n} x {m} exceeds the desk-scale dense guard")
        out = np.zeros(n * m, dtype=np.int64)
        np.add.at(out, self.rows * m + self.cols, self.deltas)
        return out.reshape(n, m)

    def dense(self) -> np.ndarray:
        """Reconstructed matrix in real units (eta applied)."""
        return self.dense_raw() * float(self.eta)

    def permuted(self, rng: np.random.Generator) -> "Stream":
        order = rng.permutation(len(self))
        return Stream(self.header, self.rows[order], self.cols[order], self.deltas[order])

    def split(self, parts: int) -> list["Stream"]:
        bounds = np.linspace(0, len(self), parts + 1).astype(int)
        return [
            Stream(self.header, self.rows[a:b], self.cols[a:b], self.deltas[a:b])
            for a, b in zip(bounds[:-1], bounds[1:])
        ]

    def transposed(self) -> "Stream":
        """Same updates with rows and columns swapped (header n and d swapped)."""
        if self.header.b_column:
            raise StreamFormatError("cannot transpose a stream carrying a b column")
        h = self.header
        header = StreamHeader(h.d, h.n, h.eta_num, h.eta_den)
        return Stream(header, self.cols, self.rows, self.deltas)


def _check_bounds(header: StreamHeader, rows, cols) -> None:
    bad = (rows < 0) | (rows >= header.n) | (cols < 0) | (cols >= header.n_cols)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise StreamFormatError(
            f"update {k}: index ({rows[k] + 1}, {cols[k] + 1}) outside "
            f"{header.n} x {header.n_cols}"
        )


def _lines(source) -> Iterator[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            yield from fh
    else:
        yield from source


def parse_stream(source) -> tuple[StreamHeader, Iterator[StreamUpdate]]:
    """Parse a stream file (path or text handle).

    Returns the header and a lazy iterator of 0-based updates.  Malformed
    lines raise :class:`StreamFormatError` naming the line number.
    """
    lines = enumerate(_lines(source), start=1)
    header = None
    for lineno, raw in lines:
        line = raw.split("#", 1)[0].strip()
        if line:
            header = StreamHeader.parse(line, lineno)
            break
    if header is None:
        raise StreamFormatError("stream has no header line")

    def updates() -> Iterator[StreamUpdate]:
        for lineno, raw in lines:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise StreamFormatError(f"line {lineno}: expected 'row col delta'")
            try:
                r, c, d = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError:
                raise StreamFormatError(f"line {lineno}: non-integer field in {line!r}") from None
            if not (1 <= r <= header.n and 1 <= c <= header.n_cols):
                raise StreamFormatError(
                    f"line {lineno}: index ({r}, {c}) outside {header.n} x {header.n_cols}"
                )
            if d == 0:
                raise StreamFormatError(f"line {lineno}: delta must be nonzero")
            yield StreamUpdate(r - 1, c - 1, d)

    return header, updates()


def write_stream(header: StreamHeader, updates: Iterable[StreamUpdate], dest) -> None:
    """Write a stream to a path or text handle (1-based indices)."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            write_stream(header, updates, fh)
        return
    dest.write(header.line() + "\n")
    if isinstance(updates, Stream):
        if len(updates):
            body = np.column_stack([updates.rows + 1, updates.cols + 1, updates.deltas])
            buf = io.StringIO()
            np.savetxt(buf, body, fmt="%d", delimiter=" ")
            dest.write(buf.getvalue())
        return
    for u in updates:
        dest.write(f"{u.row + 1} {u.col + 1} {u.delta}\n")


def read_stream(source) -> Stream:
    header, ups = parse_stream(source)
    return Stream.from_updates(header, ups)


def save_stream(stream: Stream, dest) -> None:
    write_stream(stream.header, stream, dest)


def from_dense(
    raw: np.ndarray,
    eta: Fraction | int = 1,
    b_column: bool = False,
    rng: np.random.Generator | None = None,
) -> Stream:
    """One update per nonzero entry of an integer matrix, optionally shuffled."""
    raw = np.asarray(raw)
    if not np.issubdtype(raw.dtype, np.integer):
        if not np.array_equal(raw, np.round(raw)):
            raise StreamFormatError("dense matrix must hold integer stream units")
        raw = raw.astype(np.int64)
    eta = Fraction(eta)
    n, m = raw.shape
    d = m - 1 if b_column else m
    header = StreamHeader(n, d, eta.numerator, eta.denominator, b_column)
    rows, cols = np.nonzero(raw)
    stream = Stream(header, rows, cols, raw[rows, cols])
    return stream.permuted(rng) if rng is not None else stream


@dataclass
class SyntheticCorpus:
    raw: np.ndarray  # integer stream units
    stream: Stream
    eta: Fraction

    @property
    def dense(self) -> np.ndarray:
        return self.raw * float(self.eta)


def generate_synthetic(
    n: int,
    seed: int,
    zipf_exponent: float = 1.0,
    topics: int = 24,
    eta: Fraction = Fraction(1, 1000),
    counts: np.ndarray | None = None,
) -> SyntheticCorpus:
    """Word co-occurrence style matrix with a weighted PMI transform.

    Word frequencies follow N_i ~ i**-zipf_exponent.  Co-occurrence counts
    are Poisson around 10 N_i N_j / N scaled by a topic-affinity factor
    (a rank-``topics`` bump with decaying topic weights), which gives the
    matrix a decaying spectrum.  Then

        A'_ij = p_j * ln(N_ij N / (N_i N_j) + 1),  p_j = max(1, (N_j / N_10)^2)

    and A is A' with its column means removed, rounded to multiples of eta.
    ``counts`` replaces the Poisson draw (used to build degenerate cases).
    """
    if n < 16:
        raise ValueError("synthetic corpus needs n >= 16")
    rng = np.random.default_rng(seed)
    ranks = np.arange(1, n + 1, dtype=float)
    weights = ranks**-zipf_exponent
    total = 10.0 * n * n
    freq = total * weights / weights.sum()
    if counts is None:
        prevalence = np.arange(1, topics + 1, dtype=float) ** -1.0
        theta = rng.dirichlet(0.1 + 2.0 * prevalence / prevalence.sum(), size=n)
        affinity = topics * (theta @ theta.T)
        mean = 10.0 * np.outer(freq, freq) / total * affinity
        counts = rng.poisson(np.triu(mean))
        counts = np.triu(counts) + np.triu(counts, 1).T
    counts = np.asarray(counts, dtype=float)
    pmi = np.log(counts * total / np.outer(freq, freq) + 1.0)
    col_weight = np.maximum(1.0, (freq / freq[9]) ** 2)
    a_prime = pmi * col_weight[None, :]
    a = a_prime - a_prime.mean(axis=0, keepdims=True)
    raw = np.rint(a / float(eta)).astype(np.int64)
    stream = from_dense(raw, eta, rng=rng)
    return SyntheticCorpus(raw, stream, Fraction(eta))
