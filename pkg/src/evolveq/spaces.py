"""Finite-dimensional model of a Gelfand triple built from two Gram matrices.

The pivot space H and the form domain V are represented by their Gram
matrices on a shared coefficient basis.  Dual-space quantities are carried
as vectors of pairings against that basis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

__all__ = [
    "StructureError",
    "GalerkinSpace",
    "DualVector",
    "dual_norm",
    "embedding_constant",
    "h_representation",
]


class StructureError(ValueError):
    """A Gram matrix violates the symmetry/SPD contract, or a solve failed."""


def _checked_spd(name: str, mat) -> tuple[np.ndarray, np.ndarray]:
    """Validate symmetry and positive definiteness; return (matrix, Cholesky L)."""
    mat = np.array(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise StructureError(f"{name} must be a square matrix, got shape {mat.shape}")
    scale = max(np.linalg.norm(mat), np.finfo(float).tiny)
    defect = np.linalg.norm(mat - mat.T)
    if defect > 1e-12 * scale:
        raise StructureError(f"{name} is not symmetric (relative defect {defect / scale:.3e})")
    mat = 0.5 * (mat + mat.T)
    try:
        chol = sla.cholesky(mat, lower=True)
    except sla.LinAlgError as exc:
        raise StructureError(f"{name} is not positive definite") from exc
    return mat, chol


@dataclass
class GalerkinSpace:
    """Two SPD Gram matrices on one basis: the H-metric and the V-metric."""

    gram_H: np.ndarray
    gram_V: np.ndarray
    labels: np.ndarray | None = None

    _chol_H: np.ndarray = field(init=False, repr=False)
    _chol_V: np.ndarray = field(init=False, repr=False)
    _c_H: float | None = field(default=None, init=False, repr=False)
    _dual_gram: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        self.gram_H, self._chol_H = _checked_spd("gram_H", self.gram_H)
        self.gram_V, self._chol_V = _checked_spd("gram_V", self.gram_V)
        if self.gram_H.shape != self.gram_V.shape:
            raise StructureError("gram_H and gram_V must have matching shapes")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=float)

    @property
    def dim(self) -> int:
        return self.gram_H.shape[0]

    def h_inner(self, u, v) -> float:
        return float(np.asarray(u) @ self.gram_H @ np.asarray(v))

    def h_norm(self, u) -> float:
        w = self._chol_H.T @ np.asarray(u, dtype=float)
        return float(np.linalg.norm(w))

    def v_norm(self, u) -> float:
        w = self._chol_V.T @ np.asarray(u, dtype=float)
        return float(np.linalg.norm(w))

    def v_norms(self, states: np.ndarray) -> np.ndarray:
        """Column-wise V-norms of a (dim, m) array of coefficient vectors."""
        return np.linalg.norm(self._chol_V.T @ states, axis=0)

    def h_norms(self, states: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self._chol_H.T @ states, axis=0)

    def solve_V(self, rhs):
        try:
            return sla.cho_solve((self._chol_V, True), np.asarray(rhs, dtype=float))
        except (sla.LinAlgError, ValueError) as exc:
            raise StructureError("V-Gram solve failed") from exc

    def solve_H(self, rhs):
        try:
            return sla.cho_solve((self._chol_H, True), np.asarray(rhs, dtype=float))
        except (sla.LinAlgError, ValueError) as exc:
            raise StructureError("H-Gram solve failed") from exc

    @property
    def dual_gram(self) -> np.ndarray:
        """Matrix of the V'-inner product on pairing vectors: gram_V^{-1}."""
        if self._dual_gram is None:
            self._dual_gram = self.solve_V(np.eye(self.dim))
        return self._dual_gram

    @property
    def embedding_constant(self) -> float:
        """Smallest c with ||u||_H <= c ||u||_V for every coefficient vector u."""
        if self._c_H is None:
            try:
                lam = sla.eigh(
                    self.gram_H, self.gram_V, eigvals_only=True,
                    subset_by_index=[self.dim - 1, self.dim - 1],
                )
            except sla.LinAlgError as exc:
                raise StructureError("generalized eigensolve for c_H failed") from exc
            self._c_H = float(np.sqrt(lam[-1]))
        return self._c_H


@dataclass(frozen=True)
class DualVector:
    """Element of V' stored as pairings against the coefficient basis."""

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))


def dual_norm(space: GalerkinSpace, g) -> float:
    """V'-norm of a dual vector: sqrt(g^T gram_V^{-1} g)."""
    coeffs = g.coeffs if isinstance(g, DualVector) else np.asarray(g, dtype=float)
    val = float(coeffs @ space.solve_V(coeffs))
    return float(np.sqrt(max(val, 0.0)))


def embedding_constant(space: GalerkinSpace) -> float:
    return space.embedding_constant


def h_representation(space: GalerkinSpace, u) -> DualVector:
    """The functional (u | .)_H as a dual vector."""
    return DualVector(space.gram_H @ np.asarray(u, dtype=float))
