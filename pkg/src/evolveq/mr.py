"""Maximal-regularity norms and numerical audits of the a-priori estimates.

Time integrals use the closed form of the within-slab solution in the
slab's spectral basis whenever it is available: the integrands are sums
of decaying exponentials, so the integrals are exact up to roundoff.
Non-spectral slabs fall back to composite Gauss quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forms import FormConstants, StepForm, gauss_panels
from .propagator import ProblemData, SlabSolution, Trajectory

__all__ = [
    "ContractError",
    "MRReport",
    "mr_norms",
    "check_chain_rule",
    "check_product_rule",
    "check_lemma_indepmax",
    "check_lemma3",
    "check_H_estimate",
    "check_form_telescoping",
]

_MIN_RATE = 1e-12
_SUP_SAMPLES = 17


class ContractError(RuntimeError):
    """A check was called on a trajectory/family that violates its precondition."""


@dataclass(frozen=True)
class MRReport:
    """Norm components of a trajectory in the two maximal-regularity spaces."""

    l2V: float          # ||u||_{L^2(0,T;V)}
    h1H: float          # ||u'||_{L^2(0,T;H)}
    h1Vp: float         # ||u'||_{L^2(0,T;V')}
    supV: float         # sup_t ||u(t)||_V (sampled)
    mr_vvp: float       # sqrt(l2V^2 + h1Vp^2)
    mr_vh: float        # sqrt(l2V^2 + h1H^2)

    def __post_init__(self) -> None:
        vals = (self.l2V, self.h1H, self.h1Vp, self.supV, self.mr_vvp, self.mr_vh)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise ValueError("MR norms must be finite and nonnegative")
        if abs(self.mr_vvp - float(np.hypot(self.l2V, self.h1Vp))) > 1e-12 * (1 + self.mr_vvp):
            raise ValueError("mr_vvp is not the root-sum-square of its parts")
        if abs(self.mr_vh - float(np.hypot(self.l2V, self.h1H))) > 1e-12 * (1 + self.mr_vh):
            raise ValueError("mr_vh is not the root-sum-square of its parts")


def _eint(s: np.ndarray, ta: float, tb: float) -> np.ndarray:
    """Elementwise integral of e^{-s*tau} over [ta, tb], stable near s = 0."""
    s = np.asarray(s, dtype=float)
    delta = tb - ta
    z = -s * delta
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, s)
    core = np.where(small, delta * (1.0 + z / 2.0 + z * z / 6.0),
                    -np.expm1(z) / safe)
    return np.exp(-s * ta) * core


def _bilinear_exp_integral(mu, c, p, nu, d, q, gram, ta, tb) -> float:
    """Integral over [ta, tb] of (e^{-mu t}c + p)^T G (e^{-nu t}d + q)."""
    cross = _eint(mu[:, None] + nu[None, :], ta, tb)
    total = float(np.sum(gram * np.outer(c, d) * cross))
    total += float((c * _eint(mu, ta, tb)) @ gram @ q)
    total += float(p @ gram @ (d * _eint(nu, ta, tb)))
    total += float(p @ gram @ q) * (tb - ta)
    return total


class _SlabCalc:
    """Closed-form (or quadrature) time integrals on one slab."""

    def __init__(self, slab: SlabSolution):
        self.slab = slab
        prop = slab.propagator
        self.spectral = prop.spectral and np.all(prop.rates > _MIN_RATE)
        if self.spectral:
            self.mu = prop.rates
            y0 = prop.to_modes(slab.u_start)
            fhat = prop.to_modes(slab.fbar)
            self.p = fhat / self.mu
            self.c = y0 - self.p
            self.dc = -self.mu * self.c
            self.zero = np.zeros_like(self.mu)

    def _quad(self, integrand, ta: float, tb: float) -> float:
        nodes, weights = gauss_panels(ta, tb, points=4, panels=8)
        return float(sum(w * integrand(self.slab.t0 + t) for t, w in zip(nodes, weights)))

    def quadratic(self, key: str, gram: np.ndarray, ta: float, tb: float,
                  deriv: bool = False) -> float:
        """Integral of u^T G u (or du^T G du) over relative times [ta, tb]."""
        if self.spectral:
            gt = self.slab.gram_in_modes(key, gram)
            if deriv:
                return _bilinear_exp_integral(self.mu, self.dc, self.zero,
                                              self.mu, self.dc, self.zero, gt, ta, tb)
            return _bilinear_exp_integral(self.mu, self.c, self.p,
                                          self.mu, self.c, self.p, gt, ta, tb)
        if deriv:
            return self._quad(lambda t: self.slab.derivative(t) @ gram
                              @ self.slab.derivative(t), ta, tb)
        return self._quad(lambda t: self.slab.state(t) @ gram @ self.slab.state(t),
                          ta, tb)

    def h_cross(self, gram_H: np.ndarray, ta: float, tb: float) -> float:
        """Integral of (du | u)_H over relative times [ta, tb]."""
        if self.spectral:
            gt = self.slab.gram_in_modes("H", gram_H)
            return _bilinear_exp_integral(self.mu, self.dc, self.zero,
                                          self.mu, self.c, self.p, gt, ta, tb)
        return self._quad(lambda t: self.slab.derivative(t) @ gram_H
                          @ self.slab.state(t), ta, tb)

    def form_rate(self, ta: float, tb: float) -> float:
        """Integral of (A_k u | du)_H over relative times [ta, tb]."""
        if self.spectral:
            gt = np.diag(self.mu)
            return _bilinear_exp_integral(self.mu, self.c, self.p,
                                          self.mu, self.dc, self.zero, gt, ta, tb)
        a = self.slab.matrix
        return self._quad(lambda t: self.slab.derivative(t) @ a
                          @ self.slab.state(t), ta, tb)

    def sup_v(self, space) -> float:
        taus = self.slab.t0 + np.linspace(0.0, self.slab.length, _SUP_SAMPLES)
        return float(np.max(space.v_norms(self.slab.states(taus))))


def _require_metadata(traj: Trajectory) -> list[SlabSolution]:
    if traj.slabs is None or traj.step_form is None:
        raise ContractError("trajectory carries no slab metadata; use solve()")
    return traj.slabs


def mr_norms(traj: Trajectory, step_form: StepForm | None = None) -> MRReport:
    """Norm components of eqs. L^2(V), H^1(H), H^1(V') plus the sampled sup-V."""
    slabs = _require_metadata(traj)
    step_form = step_form or traj.step_form
    space = step_form.space
    gram_dual = space.gram_H @ space.dual_gram @ space.gram_H
    l2v = h1h = h1vp = 0.0
    supv = 0.0
    for slab in slabs:
        calc = _SlabCalc(slab)
        length = slab.length
        l2v += calc.quadratic("V", space.gram_V, 0.0, length)
        h1h += calc.quadratic("H", space.gram_H, 0.0, length, deriv=True)
        h1vp += calc.quadratic("dual", gram_dual, 0.0, length, deriv=True)
        supv = max(supv, calc.sup_v(space))
    l2v, h1h, h1vp = (float(np.sqrt(max(x, 0.0))) for x in (l2v, h1h, h1vp))
    return MRReport(l2V=l2v, h1H=h1h, h1Vp=h1vp, supV=supv,
                    mr_vvp=float(np.hypot(l2v, h1vp)),
                    mr_vh=float(np.hypot(l2v, h1h)))


def _piecewise_integral(traj: Trajectory, per_slab, t1: float, t2: float) -> float:
    """Sum per-slab integrals of a slab-local functional over [t1, t2]."""
    sub = traj.step_form.subdivision
    total = 0.0
    k = sub.slab_index(t1)
    t = t1
    while t < t2 - 1e-15 * max(t2, 1.0):
        t_next = min(sub.points[k + 1], t2)
        slab = traj.slabs[k]
        total += per_slab(slab, t - slab.t0, t_next - slab.t0)
        t = t_next
        k += 1
    return total


def check_chain_rule(traj: Trajectory) -> float:
    """Residual of d/dt ||u||_H^2 = 2 (du | u)_H over output-grid intervals."""
    _require_metadata(traj)
    space = traj.step_form.space
    calcs = {}

    def cross(slab, ta, tb):
        calc = calcs.setdefault(id(slab), _SlabCalc(slab))
        return calc.h_cross(space.gram_H, ta, tb)

    residual = 0.0
    for t1, t2 in zip(traj.grid[:-1], traj.grid[1:]):
        lhs = space.h_norm(traj.evaluate(t2)) ** 2 - space.h_norm(traj.evaluate(t1)) ** 2
        rhs = 2.0 * _piecewise_integral(traj, cross, t1, t2)
        residual = max(residual, abs(lhs - rhs))
    return residual


def check_product_rule(traj: Trajectory, step_form: StepForm | None = None) -> float:
    """Per-slab residual of d/dt a_k(u(t)) = 2 (A_k u | du)_H, symmetric forms."""
    slabs = _require_metadata(traj)
    step_form = step_form or traj.step_form
    if not step_form.symmetric:
        raise ContractError("product-rule check requires a symmetric family")
    residual = 0.0
    for slab in slabs:
        a = slab.matrix
        u0, u1 = slab.u_start, slab.state(slab.t1)
        lhs = float(u1 @ a @ u1 - u0 @ a @ u0)
        rhs = 2.0 * _SlabCalc(slab).form_rate(0.0, slab.length)
        residual = max(residual, abs(lhs - rhs))
    return residual


def check_lemma_indepmax(traj: Trajectory, step_form: StepForm | None = None,
                         constants: FormConstants | None = None) -> float:
    """Per-slab sup bound: sup ||u||_V^2 <= (M ||u(a)||_V^2 + ||f||^2_{L^2(H)}) / alpha.

    Returns the minimum margin (RHS - LHS) over slabs; nonnegative means verified.
    """
    slabs = _require_metadata(traj)
    step_form = step_form or traj.step_form
    if not step_form.symmetric:
        raise ContractError("sup-bound check requires a symmetric family")
    if constants is None or constants.bound is None or constants.coercivity is None:
        raise ContractError("sup-bound check needs certified M and alpha")
    if constants.coercivity <= 0 or constants.shift != 0.0:
        raise ContractError("sup-bound check requires coercivity at shift 0")
    space = step_form.space
    big_m, alpha = constants.bound, constants.coercivity
    margin = np.inf
    for slab in slabs:
        load_sq = slab.length * space.h_norm(slab.fbar) ** 2
        rhs = (big_m * space.v_norm(slab.u_start) ** 2 + load_sq) / alpha
        lhs = _SlabCalc(slab).sup_v(space) ** 2
        margin = min(margin, rhs - lhs)
    return float(margin)


def check_lemma3(traj: Trajectory, problem: ProblemData, alpha: float) -> float:
    """Energy bound with the Young-step constant c2 = max(1/alpha^2, 1/alpha).

    Verifies int_0^t ||u||_V^2 <= c2 [ int_0^t ||f||_{V'}^2 + ||u0||_H^2 ]
    at every output-grid time; f is the slab-averaged load the trajectory
    actually solves with.  Returns the minimum margin.
    """
    slabs = _require_metadata(traj)
    if alpha <= 0:
        raise ContractError("energy bound requires coercivity at shift 0")
    space = problem.family.space
    c2 = max(1.0 / alpha**2, 1.0 / alpha)
    u0_sq = space.h_norm(problem.u0) ** 2

    calcs = [_SlabCalc(s) for s in slabs]
    load_density = []
    for slab in slabs:
        pair = space.gram_H @ slab.fbar
        load_density.append(float(pair @ space.dual_gram @ pair))

    sub = traj.step_form.subdivision
    margin = np.inf
    for t in traj.grid:
        lhs = rhs_load = 0.0
        for k, slab in enumerate(slabs):
            if t <= slab.t0:
                break
            tb = min(t, slab.t1) - slab.t0
            lhs += calcs[k].quadratic("V", space.gram_V, 0.0, tb)
            rhs_load += load_density[k] * tb
        margin = min(margin, c2 * (rhs_load + u0_sq) - lhs)
    return float(margin)


def _load_l2h(problem: ProblemData, sub) -> float:
    """||f||_{L^2(0,T;H)} of the true load, by per-slab quadrature."""
    if problem.load is None:
        return 0.0
    space = problem.family.space
    total = 0.0
    for t0, t1 in zip(sub.points[:-1], sub.points[1:]):
        nodes, weights = gauss_panels(t0, t1)
        for t, w in zip(nodes, weights):
            pair = problem.load_pairings(t)
            total += w * float(pair @ space.solve_H(pair))
    return float(np.sqrt(max(total, 0.0)))


def check_H_estimate(traj: Trajectory, problem: ProblemData,
                     constants: FormConstants | None = None) -> float:
    """MR(V,H)-to-data ratio ||u||_MR(V,H) / (||u0||_V + ||f||_{L^2(H)})."""
    _require_metadata(traj)
    space = problem.family.space
    denom = space.v_norm(problem.u0) + _load_l2h(problem, traj.step_form.subdivision)
    if denom < 1e-300:
        return 0.0
    return mr_norms(traj).mr_vh / denom


def check_form_telescoping(traj: Trajectory, step_form: StepForm | None = None,
                           lipschitz: float | None = None) -> float:
    """Worst excess of |a_k(v) - a_{k+1}(v)| over L h ||v||_V^2 at slab junctions.

    v is the computed state at the junction.  Nonpositive (up to slack)
    means the telescoping inequality holds.
    """
    _require_metadata(traj)
    step_form = step_form or traj.step_form
    if lipschitz is None:
        raise ContractError("telescoping check needs a Lipschitz constant")
    if not step_form.subdivision.is_uniform:
        raise ContractError("telescoping check assumes a uniform subdivision")
    space = step_form.space
    pts = step_form.subdivision.points
    worst = -np.inf
    for k in range(step_form.subdivision.n_slabs - 1):
        v = traj.slabs[k].state(pts[k + 1])
        gap = abs(float(v @ (step_form.slabs[k] - step_form.slabs[k + 1]) @ v))
        allowance = lipschitz * (pts[k + 1] - pts[k]) * space.v_norm(v) ** 2
        worst = max(worst, gap - allowance)
    return float(worst)
