"""Impulse control of piecewise deterministic Markov processes by quantization."""

from ._core import (
    BenchmarkParams,
    ChainSet,
    ConfigError,
    CorruptFileError,
    DomainError,
    QuantizedChain,
    RunConfig,
    load_chain,
    load_config,
    mc_discount_at_jump,
    mc_no_impulse_cost,
    op_F,
    op_H,
    op_I,
    op_J,
    op_K,
    quantize,
    simulate,
    solve,
    survival_integral,
    time_grid,
    toy_check,
)

__all__ = [
    "BenchmarkParams",
    "ChainSet",
    "ConfigError",
    "CorruptFileError",
    "DomainError",
    "QuantizedChain",
    "RunConfig",
    "load_chain",
    "load_config",
    "mc_discount_at_jump",
    "mc_no_impulse_cost",
    "op_F",
    "op_H",
    "op_I",
    "op_J",
    "op_K",
    "quantize",
    "simulate",
    "solve",
    "survival_integral",
    "time_grid",
    "toy_check",
]
