"""Streaming sketches for low-rank approximation and regression of log(1+|A|)."""
from .hashing import Family, HashSeed, bucket_hash, sign_hash, survival_level
from .hh_sketch import BasicHH, CompleteHH, hh_merge
from .lowrank import FactorL, build_factor
from .regression import RegressionInstance, sample_schedule, solve
from .sampler import ColumnSample, Sampler, SamplerConfig, norm_overestimate, practical_config
from .stream_io import (
    Stream,
    StreamHeader,
    StreamUpdate,
    generate_synthetic,
    parse_stream,
    read_stream,
    save_stream,
    write_stream,
)
from .transform import TransformSpec, apply, apply_concat, apply_vector, squared_f_norm

__version__ = "0.1.0"

__all__ = [
    "Family", "HashSeed", "bucket_hash", "sign_hash", "survival_level",
    "BasicHH", "CompleteHH", "hh_merge",
    "FactorL", "build_factor",
    "RegressionInstance", "sample_schedule", "solve",
    "ColumnSample", "Sampler", "SamplerConfig", "norm_overestimate", "practical_config",
    "Stream", "StreamHeader", "StreamUpdate", "generate_synthetic", "parse_stream",
    "read_stream", "save_stream", "write_stream",
    "TransformSpec", "apply", "apply_concat", "apply_vector", "squared_f_norm",
]
