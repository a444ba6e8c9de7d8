"""Problem container shared by every solver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linops import DesignMatrix

__all__ = ["ProblemData"]


@dataclass(frozen=True)
class ProblemData:
    """Least squares data with fused lasso weights.

    The objective all solvers target is
    ``0.5 * ||A x - b||^2 + lam1 * ||x||_1 + lam2 * ||Bx||_1``.
    """

    A: DesignMatrix
    b: np.ndarray
    lam1: float
    lam2: float

    def __post_init__(self):
        if not isinstance(self.A, DesignMatrix):
            object.__setattr__(self, "A", DesignMatrix(self.A))
        b = np.asarray(self.b, dtype=np.float64).ravel()
        if b.shape[0] != self.A.m:
            raise ValueError("b length must match the row count of A")
        object.__setattr__(self, "b", b)
        if self.lam1 < 0 or self.lam2 < 0:
            raise ValueError("penalty weights must be nonnegative")

    @property
    def m(self):
        return self.A.m

    @property
    def n(self):
        return self.A.n
