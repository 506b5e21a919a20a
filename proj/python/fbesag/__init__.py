"""Flexible Besag spatial models with Laplace-approximate inference."""

from ._core import (
    Graph,
    ModelFit,
    NumericalError,
    ParseError,
    Partition,
    Summary,
    besag_precision,
    fit,
    grid_graph,
    lambda_from,
    log_generalized_determinant,
    log_joint_pc_prior,
    log_pc_prior,
    parse_graph,
    partition,
    precision,
    read_graph,
    read_partition,
    run_cli,
    sample_field,
    sample_prior,
    single_region,
)

__all__ = [name for name in dir() if not name.startswith("_")]
