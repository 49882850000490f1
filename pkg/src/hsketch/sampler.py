"""One-pass sampling of noisy columns proportional to squared f-norms.

A :class:`Sampler` holds heavy-hitter sketches D_0..D_Lhat, where D_l only
sees columns that survive downsampling at rate 2**-l.  After ingest it

1. collects, for every level l, the top candidates Lambda_l by estimated
   squared f-norm,
2. splits the mass into magnitude levels j = 1..L with window
   [(1+eps) zeta Mhat / 2^j, (2-eps) zeta Mhat / 2^j]: levels j <= j0 are
   read from Lambda_0, deeper levels from the most downsampled Lambda_l
   holding a prescribed number of window members (rescaled by 2^l),
3. draws a level proportional to its mass estimate, a candidate within the
   level proportional to its estimate, and returns that candidate's median
   bucket together with the probability estimate lambda / sum_j Mtilde_j.

The theoretical constants are far beyond desk scale (j0 exceeds L for any
n below ~10^7, and the level population L^2/eps^2 exceeds n), so every
derived quantity can be overridden in :class:`SamplerConfig`.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, replace
from fractions import Fraction

import numpy as np

from .hashing import Family, HashSeed, survival_level
from .hh_sketch import CompleteHH, hh_reps, hh_width
from .stream_io import Stream
from .transform import TransformSpec

__all__ = [
    "SamplerConfig",
    "practical_config",
    "ColumnSample",
    "Sampler",
    "NothingToSample",
    "exact_mass",
    "norm_overestimate",
    "parse_provider",
    "read_config",
]

SAMPLER_MAGIC = b"HSMP"
SAMPLER_VERSION = 1
C_BUDGET = 4
C_GROUPS = 4


class NothingToSample(RuntimeError):
    """Every level estimate is zero, so there is no distribution to draw from."""


@dataclass(frozen=True)
class SamplerConfig:
    """Sizes of one sampler instance.

    ``n`` counts sketched items (columns), ``dim`` is their length.  Fields
    left as ``None`` take the theoretical value; see the properties.
    """

    n: int
    epsilon: float = 0.1
    K: float = 1.0
    delta: float = 0.1
    dim: int | None = None
    nu: float = 0.05
    width0: int | None = None
    width: int | None = None
    width_cap: int | None = None
    reps: int | None = None
    groups: int | None = None
    budget: int | None = None
    j0: int | None = None
    level_population: float | None = None
    max_level: int | None = None
    total_samples: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0 < self.epsilon <= 0.1:
            raise ValueError(f"epsilon must lie in (0, 0.1], got {self.epsilon}")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        for name in ("width0", "width", "reps", "groups", "budget", "width_cap"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def vector_dim(self) -> int:
        return self.dim if self.dim is not None else self.n

    @property
    def L(self) -> int:
        return max(1, math.ceil(math.log2(self.K * self.n / self.epsilon)))

    @property
    def L_hat(self) -> int:
        if self.max_level is not None:
            return self.max_level
        return max(1, math.ceil(math.log2(self.n)))

    @property
    def j0_theory(self) -> int:
        return math.ceil(math.log2(4 * self.K * self.L**3 / self.epsilon**3))

    @property
    def j0_effective(self) -> int:
        j0 = self.j0 if self.j0 is not None else self.j0_theory
        return min(j0, self.L)

    @property
    def heavy_hitter_budget(self) -> int:
        if self.budget is not None:
            return self.budget
        return math.ceil(C_BUDGET * self.L**3 / self.epsilon**3)

    @property
    def population(self) -> float:
        if self.level_population is not None:
            return self.level_population
        return self.L**2 / self.epsilon**2

    @property
    def population_window(self) -> tuple[float, float]:
        r = math.sqrt(20.0) * self.epsilon
        s = self.population
        return (1.0 - r) * s, 2.0 * (1.0 + r) * s

    @property
    def cap(self) -> int:
        return self.width_cap if self.width_cap is not None else self.n

    @property
    def w0(self) -> int:
        if self.width0 is not None:
            return self.width0
        phi = self.epsilon**3 / (self.K * self.L**3)
        return hh_width(phi, self.nu, cap=self.cap)

    @property
    def w(self) -> int:
        if self.width is not None:
            return self.width
        phi = self.epsilon**3 / self.L**3
        return hh_width(phi, self.nu, cap=self.cap)

    @property
    def R(self) -> int:
        if self.reps is not None:
            return self.reps
        return hh_reps(self.n * (self.L_hat + 1), 1.0)

    @property
    def rho(self) -> int:
        if self.groups is not None:
            return self.groups
        return max(1, math.ceil(C_GROUPS * math.log((self.L + 1) * self.total_samples / self.delta)))

    @property
    def uses_downsampling(self) -> bool:
        return self.j0_effective < self.L

    def with_overrides(self, **kwargs) -> "SamplerConfig":
        return replace(self, **kwargs)


def practical_config(n: int, **overrides) -> SamplerConfig:
    """Desk-scale sizes: widths up to 512, 7 repetitions, one group,
    shallow j0 so most levels are read from downsampled structures.
    Any field can still be overridden."""
    w = min(n, 512)
    fields = dict(width0=w, width=w, reps=7, groups=1, budget=w, j0=3, level_population=8)
    fields.update(overrides)
    return SamplerConfig(n=n, **fields)


@dataclass
class ColumnSample:
    """A noisy column (real units) and how it was drawn."""

    v: np.ndarray
    index: int
    level: int
    weight: float
    p_hat: float
    downsample_level: int = 0


@dataclass
class _Witnesses:
    index: np.ndarray
    weight: np.ndarray
    ell: int = 0


@dataclass
class _GroupEstimate:
    mass: np.ndarray  # M~_j for j = 1..L (position j-1)
    witnesses: list


def exact_mass(stream: Stream, transform: TransformSpec | None = None, tail_identity: bool = False) -> float:
    """||f(A)||_F^2 (or ||f(A)||_F^2 + ||b||^2 for a b-column stream)."""
    transform = transform or TransformSpec(eta=stream.eta)
    raw = stream.dense_raw()
    if tail_identity:
        head = transform.apply_raw(raw[:, :-1])
        tail = transform.real(raw[:, -1])
        return float(np.sum(head * head) + tail @ tail)
    fa = transform.apply_raw(raw)
    return float(np.sum(fa * fa))


def parse_provider(spec: str) -> tuple[str, float]:
    """'exact' -> ('exact_offline', 1); 'fixed:2' -> ('fixed_factor', 2)."""
    if spec in ("exact", "exact_offline"):
        return "exact_offline", 1.0
    if spec.startswith("fixed:") or spec.startswith("fixed_factor:"):
        kappa = float(spec.split(":", 1)[1])
        return "fixed_factor", kappa
    raise ValueError(f"unknown norm provider {spec!r}")


def norm_overestimate(
    provider: str,
    stream: Stream,
    kappa: float = 1.0,
    transform: TransformSpec | None = None,
    tail_identity: bool = False,
) -> float:
    """M-hat with M <= M-hat <= K M.

    ``exact_offline`` computes M from a separate pass over the stream;
    ``fixed_factor`` multiplies it by kappa >= 1.
    """
    if provider in ("exact", "exact_offline"):
        return exact_mass(stream, transform, tail_identity)
    if provider in ("fixed", "fixed_factor"):
        if kappa < 1:
            raise ValueError("kappa must be at least 1")
        return kappa * exact_mass(stream, transform, tail_identity)
    raise ValueError(f"unknown norm provider {provider!r}")


def read_config(source) -> dict:
    """Flat ``key=value`` file: epsilon, K, delta, seed, provider, kappa."""
    known = {"epsilon": float, "K": float, "delta": float, "seed": int, "provider": str, "kappa": float}
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        try:
            out[key] = known[key](value)
        except ValueError:
            raise ValueError(f"config line {lineno}: bad value for {key}: {value!r}") from None
    return out


class Sampler:
    """One instance of the level-set sampler over a fixed stream orientation.

    ``by="col"`` sketches columns (low-rank); ``by="row"`` sketches rows
    (regression, usually with ``tail_identity=True`` so the last coordinate
    is left untransformed).
    """

    def __init__(
        self,
        config: SamplerConfig,
        m_hat: float,
        rng: np.random.Generator,
        transform: TransformSpec | None = None,
        tail_identity: bool = False,
        storage: str = "auto",
        by: str = "col",
    ):
        if by not in ("col", "row"):
            raise ValueError("by must be 'col' or 'row'")
        if m_hat < 0 or not math.isfinite(m_hat):
            raise ValueError("norm overestimate must be finite and nonnegative")
        self.config = config
        self.m_hat = float(m_hat)
        self.transform = transform or TransformSpec()
        self.tail_identity = tail_identity
        self.by = by
        self.zeta = float(rng.uniform(0.5, 1.0))
        self.downsample_seed = HashSeed.draw(Family.DOWNSAMPLE, rng)
        self.survival = survival_level(self.downsample_seed, np.arange(config.n), config.L_hat)
        kwargs = dict(transform=self.transform, tail_identity=tail_identity, storage=storage)
        n, dim = config.n, config.vector_dim
        levels = range(config.L_hat + 1) if config.uses_downsampling else range(1)
        self.structures: list[list[CompleteHH]] = []
        for _ in range(config.rho):
            group = []
            for ell in levels:
                w = config.w0 if ell == 0 else config.w
                group.append(CompleteHH.draw(n, dim, w, config.R, rng, **kwargs))
            self.structures.append(group)
        self._candidates = None
        self._estimates = None

    # -- ingest ---------------------------------------------------------

    @property
    def n_levels(self) -> int:
        return len(self.structures[0])

    def update_batch(self, items, coords, deltas) -> None:
        """Forward updates of item columns to every level they survive to."""
        items = np.atleast_1d(np.asarray(items, dtype=np.int64))
        coords = np.atleast_1d(np.asarray(coords, dtype=np.int64))
        deltas = np.atleast_1d(np.asarray(deltas))
        self.structures[0][0].reps[0]._validate(items, coords, deltas)
        self._candidates = self._estimates = None
        surv = self.survival[items]
        for ell in range(self.n_levels):
            if ell == 0:
                it, co, de = items, coords, deltas
            else:
                keep = surv >= ell
                if not keep.any():
                    break
                it, co, de = items[keep], coords[keep], deltas[keep]
            for group in self.structures:
                group[ell].update_batch(it, co, de)

    def update(self, row: int, col: int, delta: int) -> None:
        if self.by == "col":
            self.update_batch([col], [row], [delta])
        else:
            self.update_batch([row], [col], [delta])

    def ingest(self, stream: Stream, chunk: int = 1 << 22) -> "Sampler":
        items, coords = (stream.cols, stream.rows) if self.by == "col" else (stream.rows, stream.cols)
        for start in range(0, len(stream), chunk):
            sl = slice(start, start + chunk)
            self.update_batch(items[sl], coords[sl], stream.deltas[sl])
        return self

    # -- candidates and level estimates ---------------------------------

    def collect_candidates(self) -> list[list[_Witnesses]]:
        """Per group, per downsampling level: top candidates by estimate."""
        if self._candidates is None:
            budget = self.config.heavy_hitter_budget
            out = []
            for group in self.structures:
                per_level = []
                for ell, sketch in enumerate(group):
                    idx = np.flatnonzero(self.survival >= ell)
                    lam = sketch.estimates(idx)
                    keep = lam > 0
                    idx, lam = idx[keep], lam[keep]
                    if idx.size > budget:
                        top = np.argsort(-lam, kind="stable")[:budget]
                        top.sort()
                        idx, lam = idx[top], lam[top]
                    per_level.append(_Witnesses(idx, lam, ell))
                out.append(per_level)
            self._candidates = out
        return self._candidates

    def windows(self) -> np.ndarray:
        """Window bounds for levels 1..L, shape (L, 2)."""
        eps = self.config.epsilon
        j = np.arange(1, self.config.L + 1)
        t = self.zeta * self.m_hat / 2.0**j
        return np.column_stack([(1 + eps) * t, (2 - eps) * t])

    def _estimate_group(self, cands: list[_Witnesses]) -> _GroupEstimate:
        cfg = self.config
        lo_count, hi_count = cfg.population_window
        mass = np.zeros(cfg.L)
        witnesses: list = [None] * cfg.L
        for j, (lo, hi) in enumerate(self.windows(), start=1):
            if j <= cfg.j0_effective:
                c = cands[0]
                sel = (c.weight >= lo) & (c.weight <= hi)
                if sel.any():
                    mass[j - 1] = c.weight[sel].sum()
                    witnesses[j - 1] = _Witnesses(c.index[sel], c.weight[sel], 0)
                continue
            for ell in range(len(cands) - 1, -1, -1):
                c = cands[ell]
                sel = (c.weight >= lo) & (c.weight <= hi)
                count = int(sel.sum())
                if count > 0 and lo_count <= count <= hi_count:
                    mass[j - 1] = c.weight[sel].sum() * 2.0**ell
                    witnesses[j - 1] = _Witnesses(c.index[sel], c.weight[sel], ell)
                    break
        return _GroupEstimate(mass, witnesses)

    def estimate_levels(self) -> tuple[np.ndarray, list]:
        """Median-over-groups level masses M~_1..M~_L and their witness sets.

        Witnesses of level j come from the group whose estimate is the lower
        median; entries are (group, witnesses) or None when M~_j = 0.
        """
        if self._estimates is None:
            per_group = [self._estimate_group(c) for c in self.collect_candidates()]
            masses = np.stack([g.mass for g in per_group])  # (rho, L)
            order = np.argsort(masses, axis=0, kind="stable")
            pick = order[(len(per_group) - 1) // 2]
            cols = np.arange(self.config.L)
            mass = masses[pick, cols]
            witnesses = [
                (int(g), per_group[g].witnesses[j]) if mass[j] > 0 else None
                for j, g in enumerate(pick)
            ]
            self._estimates = (mass, witnesses)
        return self._estimates

    @property
    def total_mass(self) -> float:
        return float(self.estimate_levels()[0].sum())

    # -- sampling -------------------------------------------------------

    def draw_index(self, rng: np.random.Generator) -> tuple[int, int, int, float, int]:
        """(index, level j, downsample level, weight, group) of one draw."""
        mass, witnesses = self.estimate_levels()
        total = mass.sum()
        if not total > 0:
            raise NothingToSample("all level estimates are zero")
        j = int(rng.choice(mass.size, p=mass / total))
        group, wit = witnesses[j]
        t = int(rng.choice(wit.index.size, p=wit.weight / wit.weight.sum()))
        return int(wit.index[t]), j + 1, wit.ell, float(wit.weight[t]), group

    def draw(self, rng: np.random.Generator) -> ColumnSample:
        index, level, ell, weight, group = self.draw_index(rng)
        v = self.structures[group][ell].query(index)
        return ColumnSample(v, index, level, weight, weight / self.total_mass, ell)

    def draw_many(self, m: int, rng: np.random.Generator) -> list[ColumnSample]:
        """m independent draws from this instance's distribution.

        Levels and indices are drawn in bulk and every distinct
        (structure, index) pair is queried once, so the returned vectors
        may be shared between samples; treat them as read-only.
        """
        mass, witnesses = self.estimate_levels()
        total = mass.sum()
        if not total > 0:
            raise NothingToSample("all level estimates are zero")
        levels = rng.choice(mass.size, size=m, p=mass / total)
        out: list = [None] * m
        cache: dict = {}
        for j in np.unique(levels):
            pos = np.flatnonzero(levels == j)
            group, wit = witnesses[j]
            picks = rng.choice(wit.index.size, size=pos.size, p=wit.weight / wit.weight.sum())
            for t, pick in zip(pos.tolist(), picks.tolist()):
                index = int(wit.index[pick])
                key = (group, wit.ell, index)
                if key not in cache:
                    cache[key] = self.structures[group][wit.ell].query(index)
                weight = float(wit.weight[pick])
                out[t] = ColumnSample(cache[key], index, int(j) + 1, weight, weight / total, wit.ell)
        return out

    # -- accounting and checkpoint --------------------------------------

    @property
    def nbytes(self) -> int:
        """Sketch payload: buckets, seeds and candidate lists."""
        total = sum(s.nbytes for group in self.structures for s in group)
        total += len(self.downsample_seed.to_bytes())
        if self._candidates is not None:
            total += sum(16 * c.index.size for group in self._candidates for c in group)
        return total

    def to_bytes(self) -> bytes:
        meta = {
            "config": asdict(self.config),
            "m_hat": self.m_hat,
            "zeta": self.zeta,
            "log_base": self.transform.log_base,
            "eta": [self.transform.eta.numerator, self.transform.eta.denominator],
            "tail_identity": self.tail_identity,
            "by": self.by,
        }
        meta_bytes = json.dumps(meta, sort_keys=True).encode()
        parts = [
            SAMPLER_MAGIC,
            struct.pack("<HI", SAMPLER_VERSION, len(meta_bytes)),
            meta_bytes,
            self.downsample_seed.to_bytes(),
            struct.pack("<II", len(self.structures), self.n_levels),
        ]
        for group in self.structures:
            for sketch in group:
                parts.append(sketch.to_bytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, storage: str = "auto") -> "Sampler":
        if data[:4] != SAMPLER_MAGIC:
            raise ValueError("not a sampler checkpoint")
        version, meta_len = struct.unpack_from("<HI", data, 4)
        if version != SAMPLER_VERSION:
            raise ValueError(f"unsupported sampler checkpoint version {version}")
        offset = 10
        meta = json.loads(data[offset : offset + meta_len])
        offset += meta_len
        seed, offset = HashSeed.from_bytes(data, offset)
        n_groups, n_levels = struct.unpack_from("<II", data, offset)
        offset += 8
        obj = cls.__new__(cls)
        obj.config = SamplerConfig(**meta["config"])
        obj.m_hat = meta["m_hat"]
        obj.zeta = meta["zeta"]
        obj.transform = TransformSpec(meta["log_base"], Fraction(*meta["eta"]))
        obj.tail_identity = meta["tail_identity"]
        obj.by = meta["by"]
        obj.downsample_seed = seed
        obj.survival = survival_level(seed, np.arange(obj.config.n), obj.config.L_hat)
        obj.structures = []
        for _ in range(n_groups):
            group = []
            for _ in range(n_levels):
                sketch, offset = CompleteHH.from_bytes(data, offset, storage)
                group.append(sketch)
            obj.structures.append(group)
        obj._candidates = obj._estimates = None
        return obj
