"""Closed convex sets in H, metric projections, and the invariance criteria.

Projection uses the set's own H-Gram.  Boxes with a diagonal (lumped)
metric project by exact nodewise clamping; with a full metric a projected
gradient iteration solves the quadratic program.  Criterion checks sample
a structured pool of test vectors and report the worst margin.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forms import FormFamily, StepForm, coercivity_lower_bound
from .propagator import ProblemData, Trajectory

__all__ = [
    "ToleranceError",
    "ConvexSet",
    "CriterionReport",
    "check_criterion",
    "check_criterion_symmetric",
    "audit_trajectory",
    "offdiagonal_sign_certificate",
    "sample_pool",
]

_QP_TOL = 1e-10
_QP_MAX_ITER = 20000


class ToleranceError(RuntimeError):
    """An iterative projection failed to reach its tolerance."""


@dataclass
class ConvexSet:
    """One of box / halfspace / ball, with the H-Gram used for projection."""

    kind: str
    metric: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    normal: np.ndarray | None = None
    offset: float = 0.0
    center: np.ndarray | None = None
    radius: float = 0.0
    _step: float | None = field(default=None, init=False, repr=False)

    @classmethod
    def box(cls, metric, lower=None, upper=None) -> "ConvexSet":
        metric = np.asarray(metric, dtype=float)
        n = metric.shape[0]
        lo = np.full(n, -np.inf) if lower is None else np.broadcast_to(
            np.asarray(lower, dtype=float), (n,)).copy()
        hi = np.full(n, np.inf) if upper is None else np.broadcast_to(
            np.asarray(upper, dtype=float), (n,)).copy()
        if np.any(lo > hi):
            raise ValueError("box bounds are inverted")
        return cls("box", metric, lower=lo, upper=hi)

    @classmethod
    def halfspace(cls, metric, normal, offset: float) -> "ConvexSet":
        return cls("halfspace", np.asarray(metric, dtype=float),
                   normal=np.asarray(normal, dtype=float), offset=float(offset))

    @classmethod
    def ball(cls, metric, center, radius: float) -> "ConvexSet":
        if radius <= 0:
            raise ValueError("ball radius must be positive")
        return cls("ball", np.asarray(metric, dtype=float),
                   center=np.asarray(center, dtype=float), radius=float(radius))

    @property
    def diagonal_metric(self) -> bool:
        return bool(np.count_nonzero(self.metric - np.diag(np.diag(self.metric))) == 0)

    def metric_norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(max(x @ self.metric @ x, 0.0)))

    def _box_qp(self, x: np.ndarray) -> np.ndarray:
        """Projected gradient for the box projection under a full metric."""
        if self._step is None:
            self._step = 1.0 / float(np.linalg.eigvalsh(self.metric)[-1])
        z = np.clip(x, self.lower, self.upper)
        for _ in range(_QP_MAX_ITER):
            z_next = np.clip(z - self._step * (self.metric @ (z - x)),
                             self.lower, self.upper)
            res = float(np.linalg.norm(z_next - z))
            z = z_next
            if res <= _QP_TOL:
                return z
        raise ToleranceError(f"box projection stalled at residual {res:.3e}")

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            if self.diagonal_metric:
                return np.clip(x, self.lower, self.upper)
            return self._box_qp(x)
        if self.kind == "halfspace":
            val = float(self.normal @ self.metric @ x) - self.offset
            if val <= 0:
                return x.copy()
            nsq = float(self.normal @ self.metric @ self.normal)
            return x - (val / nsq) * self.normal
        if self.kind == "ball":
            d = x - self.center
            r = self.metric_norm(d)
            if r <= self.radius:
                return x.copy()
            return self.center + (self.radius / r) * d
        raise ValueError(f"unknown convex-set kind {self.kind!r}")

    def project_many(self, xs: np.ndarray) -> np.ndarray:
        """Row-wise projection of an (m, dim) sample matrix."""
        if self.kind == "box" and self.diagonal_metric:
            return np.clip(xs, self.lower, self.upper)
        return np.vstack([self.project(row) for row in xs])

    def distance(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return self.metric_norm(x - self.project(x))


@dataclass(frozen=True)
class CriterionReport:
    margin: float
    witness_t: float
    witness: np.ndarray


def sample_pool(rng: np.random.Generator, cset: ConvexSet, n_vectors: int,
                dim: int) -> np.ndarray:
    """Mixed pool: Gaussian, sparse signed spikes, boundary-adjacent vectors."""
    n_gauss = n_vectors // 3
    n_spike = n_vectors // 3
    n_near = n_vectors - n_gauss - n_spike
    gauss = rng.standard_normal((n_gauss, dim))
    spikes = np.zeros((n_spike, dim))
    for row in spikes:
        k = rng.integers(1, min(4, dim + 1))
        idx = rng.choice(dim, size=k, replace=False)
        row[idx] = rng.choice([-1.0, 1.0], size=k) * rng.uniform(0.5, 3.0, size=k)
    near = cset.project_many(rng.standard_normal((n_near, dim)))
    near += 0.1 * rng.standard_normal((n_near, dim))
    return np.vstack([gauss, spikes, near])


def _margins(a: np.ndarray, vs: np.ndarray, pvs: np.ndarray) -> np.ndarray:
    """a(Pv, v - Pv) for every row of the sample matrices."""
    return np.einsum("ij,ij->i", pvs @ a, vs - pvs)


def check_criterion(family: FormFamily, cset: ConvexSet,
                    t_samples: np.ndarray | None = None, n_vectors: int = 1000,
                    seed: int = 0, load=None) -> CriterionReport:
    """Worst sampled value of a(t; Pv, v - Pv) [minus <f(t), v - Pv> if given].

    A negative margin is a finding, not an error; the arg-min witness is
    reported for diagnosis.
    """
    dim = family.space.dim
    if t_samples is None:
        t_samples = np.linspace(0.0, family.horizon, 9)
    rng = np.random.default_rng(seed)
    vs = sample_pool(rng, cset, n_vectors, dim)
    pvs = cset.project_many(vs)
    best = CriterionReport(np.inf, 0.0, np.zeros(dim))
    for t in np.asarray(t_samples, dtype=float):
        vals = _margins(family.matrix(t), vs, pvs)
        if load is not None:
            pair = load(t)
            coeffs = getattr(pair, "coeffs", pair)
            vals = vals - (vs - pvs) @ np.asarray(coeffs, dtype=float)
        k = int(np.argmin(vals))
        if vals[k] < best.margin:
            best = CriterionReport(float(vals[k]), float(t), vs[k].copy())
    return best


def check_criterion_symmetric(family: FormFamily, cset: ConvexSet,
                              t_samples: np.ndarray | None = None,
                              n_vectors: int = 1000, seed: int = 0) -> CriterionReport:
    """Worst sampled value of a(t; v, v) - a(t; Pv, Pv) for symmetric accretive forms."""
    if not family.symmetric:
        raise ValueError("symmetric criterion requires a symmetric family")
    if t_samples is None:
        t_samples = np.linspace(0.0, family.horizon, 9)
    alpha = min(coercivity_lower_bound(family.space, family.matrix(t))
                for t in np.asarray(t_samples, dtype=float))
    if alpha <= 0:
        raise ValueError("symmetric criterion requires an accretive (coercive) family")
    dim = family.space.dim
    rng = np.random.default_rng(seed)
    vs = sample_pool(rng, cset, n_vectors, dim)
    pvs = cset.project_many(vs)
    best = CriterionReport(np.inf, 0.0, np.zeros(dim))
    for t in np.asarray(t_samples, dtype=float):
        a = family.matrix(t)
        vals = (np.einsum("ij,ij->i", vs @ a, vs)
                - np.einsum("ij,ij->i", pvs @ a, pvs))
        k = int(np.argmin(vals))
        if vals[k] < best.margin:
            best = CriterionReport(float(vals[k]), float(t), vs[k].copy())
    return best


def audit_trajectory(traj: Trajectory, cset: ConvexSet) -> float:
    """Max distance of the computed states from the set, over the output grid."""
    return max(cset.distance(traj.states[:, i]) for i in range(traj.grid.size))


def offdiagonal_sign_certificate(a: np.ndarray, tol: float = 0.0) -> bool:
    """True when all off-diagonal entries are <= tol.

    For box sets under a diagonal metric this upgrades the sampled clamp
    criterion to a certificate: every term of a(Pv, v - Pv) is then a
    product of nonnegative factors.
    """
    off = a - np.diag(np.diag(a))
    return bool(np.all(off <= tol))


def check_step_criterion(step_form: StepForm, family: FormFamily, cset: ConvexSet,
                         n_vectors: int = 1000, seed: int = 0) -> float:
    """Sampling-soundness margin: slab-averaged criterion vs within-slab minimum.

    For each slab, the criterion margin of the averaged matrix must not
    fall below the minimum over sampled times inside the slab.
    """
    dim = family.space.dim
    rng = np.random.default_rng(seed)
    vs = sample_pool(rng, cset, n_vectors, dim)
    pvs = cset.project_many(vs)
    worst = np.inf
    pts = step_form.subdivision.points
    for k, a_k in enumerate(step_form.slabs):
        avg_margin = float(np.min(_margins(a_k, vs, pvs)))
        inner = min(float(np.min(_margins(family.matrix(t), vs, pvs)))
                    for t in np.linspace(pts[k], pts[k + 1], 5))
        worst = min(worst, avg_margin - inner)
    return float(worst)
