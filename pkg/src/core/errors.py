"""
Exception hierarchy for BCMInfer.

Library code raises these; only the experiment runner and the CLI catch them.
"""

from typing import Optional, Sequence


class BCMInferError(Exception):
    """Base class for every error raised by BCMInfer."""


class ConfigurationError(BCMInferError, ValueError):
    """Invalid model configuration, latent payload, or experiment spec."""


class DimensionMismatchError(ConfigurationError):
    """A vector does not have the dimension the variant requires."""

    def __init__(self, what: str, expected, actual):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected dimension {expected}, got {actual}")


class InfeasibleRewireError(BCMInferError):
    """The BCM-G graph cannot support a degree-preserving rewire."""

    def __init__(self, n_edges: int):
        self.n_edges = n_edges
        super().__init__(f"Rewiring needs at least 2 edges, graph has {n_edges}")


class PoisonedValueError(BCMInferError, ArithmeticError):
    """A density evaluation produced a non-finite value."""

    def __init__(self, message: str, event_index: Optional[int] = None):
        self.event_index = event_index
        super().__init__(message)


class NonFiniteGradientError(PoisonedValueError):
    """Reverse sweep met a non-finite value or adjoint."""

    def __init__(self, node_index: int, primitive: str):
        self.node_index = node_index
        self.primitive = primitive
        super().__init__(f"Non-finite gradient at tape node {node_index} ({primitive})")


class UnsupportedPrimitiveError(BCMInferError, TypeError):
    """An operation outside the autodiff primitive set was recorded."""

    def __init__(self, primitive: str):
        self.primitive = primitive
        super().__init__(f"Unsupported primitive for reverse-mode recording: {primitive}")


class NonFiniteSampleError(BCMInferError):
    """An ELBO Monte Carlo term was not finite."""

    def __init__(self, theta: Sequence[float]):
        self.theta = list(theta)
        super().__init__(f"Non-finite ELBO term at theta={self.theta}")


class DivergenceError(BCMInferError):
    """Optimisation produced a non-finite objective or gradient."""

    def __init__(self, epoch: int, detail: str = ""):
        self.epoch = epoch
        super().__init__(f"Optimisation diverged at epoch {epoch}" + (f": {detail}" if detail else ""))


class HmcTuningError(BCMInferError):
    """The HMC chain accepted too few proposals after burn-in."""

    def __init__(self, acceptance_rate: float):
        self.acceptance_rate = acceptance_rate
        super().__init__(f"HMC acceptance rate {acceptance_rate:.4f} is below 1% after burn-in")


class TimeLimitExceeded(BCMInferError):
    """A cooperative deadline passed inside a fit loop."""

    def __init__(self, elapsed: float):
        self.elapsed = elapsed
        super().__init__(f"Time limit exceeded after {elapsed:.2f}s")


class SchemaError(BCMInferError):
    """A results table does not match the published column schema."""

    def __init__(self, missing: Sequence[str], extra: Sequence[str], detail: str = ""):
        self.missing = list(missing)
        self.extra = list(extra)
        message = f"Results schema mismatch: missing={self.missing}, extra={self.extra}"
        super().__init__(f"{message} ({detail})" if detail else message)
