"""Scalar model parameters shared by every formula in the package."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ModelParams:
    """The four scalars that fix the model.

    lambda_hat : coupling strength (dimensionless; 0 gives the
                 pure-diffusion degenerate case)
    nu         : noise amplitude (0 is the drift-only degenerate case used
                 by integrator oracles; the analytic functions require > 0)
    eps        : mollification scale, restricted to (0, 1/2) because the
                 analytic estimates are stated on that range
    lam        : resolvent / Laplace-transform parameter (1/time, > 0)
    """

    lambda_hat: float
    nu: float
    eps: float
    lam: float

    def __post_init__(self):
        if not self.lambda_hat >= 0.0:
            raise ValueError(f"lambda_hat must be >= 0, got {self.lambda_hat}")
        if not self.nu >= 0.0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if not 0.0 < self.eps < 0.5:
            raise ValueError(f"eps must lie in (0, 1/2), got {self.eps}")
        if not self.lam > 0.0:
            raise ValueError(f"lam must be > 0, got {self.lam}")

    @property
    def coupling(self) -> float:
        """Drift prefactor lambda_hat / sqrt(log(1/eps)) of the rescaled model."""
        import math

        return self.lambda_hat / math.sqrt(math.log(1.0 / self.eps))
