"""Shared plumbing: error types, seed splitting, small array helpers."""
import numpy as np


class ParameterError(ValueError):
    """Model or distribution parameters violate their constraints."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class BracketError(RuntimeError):
    """Numerical inversion could not bracket the target probability."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge."""


class RootClusterAmbiguity(RuntimeError):
    """Root multiplicity detection found two plausible groupings.

    Carries both candidate groupings so the caller can decide.
    """

    def __init__(self, message, groupings):
        super().__init__(message)
        self.groupings = groupings


def replicate_seeds(master_seed, n):
    """Spawn `n` independent child seeds from a 64-bit master seed.

    Child r is `SeedSequence(master_seed).spawn()[r]`, so streams are
    reproducible and independent of how many workers consume them.
    """
    return np.random.SeedSequence(master_seed).spawn(n)


def replicate_rng(master_seed, r):
    """Generator for replicate/chunk index `r` under `master_seed`."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(r,)))


def as_batch(x, width):
    """Coerce `x` to a 2-d float array with `width` columns.

    Returns (arr, was_1d) where arr has shape (n, width).
    """
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        if a.shape[0] != width:
            raise DomainError(f"expected a length-{width} state, got {a.shape[0]}")
        return a[None, :], True
    if a.ndim != 2 or a.shape[1] != width:
        raise DomainError(f"expected shape (n, {width}), got {a.shape}")
    return a, False


def format_float(x):
    """Fixed CSV float format: 17 significant digits."""
    return f"{float(x):.17g}"
