"""Python bindings for the nkca library."""

from ._core import (
    ConfigError,
    KernelCoeffs,
    Model,
    NkcaError,
    ScheduleError,
    ShapeError,
    annealed_b,
    annealed_coeffs,
    equilibrium_b,
    equilibrium_coeffs,
    marginal_of_linear_gaussian,
    sub_seed,
    train,
    validate,
    validation_suites,
)

__all__ = [
    "ConfigError",
    "KernelCoeffs",
    "Model",
    "NkcaError",
    "ScheduleError",
    "ShapeError",
    "annealed_b",
    "annealed_coeffs",
    "equilibrium_b",
    "equilibrium_coeffs",
    "marginal_of_linear_gaussian",
    "sub_seed",
    "train",
    "validate",
    "validation_suites",
]
