"""Lower-triangular propagator solver and derived statistics.

The chaos coefficients satisfy a triangular system: each u_alpha evolves under
the deterministic operator A with a forcing assembled from the coefficients
one level below.  Levels are therefore solved in graded order, all indices of
a level stepped together.

Time stepping uses the exact semigroup of A per mode combined with a
third-order quadrature of the forcing: the three nearest grid samples are
interpolated by a quadratic and integrated against the semigroup kernel
exactly (phi-functions).  Lower-level forcings are read off the shared
uniform grid, never interpolated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .chaos import (
    ChaosSeries,
    DirectionH,
    WeightSequence,
    smallness_radius,
)
from .multiindex import MultiIndex, TruncationBox, enumerate_indices
from .operators import EvolutionProblem, OperatorFamily


class ResourceCapError(RuntimeError):
    """The truncation box exceeds the configured index cap."""


class SolverDivergenceError(RuntimeError):
    """The stepper produced non-finite values."""


def _phi123(z):
    """phi_1, phi_2, phi_3 for scalar or vector complex arguments.

    phi_{k+1}(z) = (phi_k(z) - 1/k!) / z with phi_0 = exp; evaluated directly
    for moderate |z| and by truncated series near zero to avoid cancellation.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    small = np.abs(z) < 0.25
    zsafe = np.where(small, 1.0, z)
    ez = np.exp(zsafe)
    p1 = (ez - 1.0) / zsafe
    p2 = (ez - 1.0 - zsafe) / zsafe**2
    p3 = (ez - 1.0 - zsafe - 0.5 * zsafe**2) / zsafe**3
    s1 = np.zeros_like(z)
    s2 = np.zeros_like(z)
    s3 = np.zeros_like(z)
    zpow = np.ones_like(z)
    for m in range(14):
        s1 += zpow / math.factorial(m + 1)
        s2 += zpow / math.factorial(m + 2)
        s3 += zpow / math.factorial(m + 3)
        zpow = zpow * z
    return (
        np.where(small, s1, p1),
        np.where(small, s2, p2),
        np.where(small, s3, p3),
    )


def _phi_matrices(A, dt):
    """exp(A dt) and the first three phi-matrices via one augmented expm."""
    n = A.shape[0]
    aug = np.zeros((4 * n, 4 * n))
    aug[:n, :n] = A * dt
    for b in range(3):
        aug[b * n:(b + 1) * n, (b + 1) * n:(b + 2) * n] = np.eye(n)
    E = scipy.linalg.expm(aug)
    exp_a = E[:n, :n]
    phi1 = E[:n, n:2 * n] / dt
    phi2 = E[:n, 2 * n:3 * n] / dt**2
    phi3 = E[:n, 3 * n:4 * n] / dt**3
    return exp_a, phi1, phi2, phi3


class ExponentialStepper:
    """One step of u' = A u + g on a uniform grid.

    Interior steps integrate the quadratic through (g_{j-1}, g_j, g_{j+1})
    against exp((t_{j+1}-s) A) exactly; the first step uses the forward
    quadratic through (g_0, g_1, g_2).  For nt = 1 a trapezoidal fallback is
    used.  All weights act diagonally per mode (or as matrices for the
    explicit-matrix representation).
    """

    def __init__(self, A: OperatorFamily, dim: int, dt: float):
        self.dt = dt
        self.matrix_kind = A.kind == "matrix"
        if self.matrix_kind:
            exp_a, p1, p2, p3 = _phi_matrices(A.matrix, dt)
            self.E1 = exp_a
        else:
            sym = A.symbol(dim)
            self.E1 = np.exp(sym * dt)
            p1, p2, p3 = _phi123(sym * dt)
            if np.all(np.imag(sym) == 0.0):
                # keep scalar and real-grid problems in real arithmetic
                self.E1 = self.E1.real
                p1, p2, p3 = p1.real, p2.real, p3.real
        h = dt
        self.w_prev = h * (-0.5 * p2 + p3)
        self.w_here = h * (p1 - 2.0 * p3)
        self.w_next = h * (0.5 * p2 + p3)
        self.v0 = h * (p1 - 1.5 * p2 + p3)
        self.v1 = h * (2.0 * p2 - 2.0 * p3)
        self.v2 = h * (-0.5 * p2 + p3)

    def _mul(self, w, v):
        return v @ w.T if self.matrix_kind else w * v

    def propagate(self, u):
        return self._mul(self.E1, u)

    def first_step(self, u0, g0, g1, g2):
        return (
            self._mul(self.E1, u0)
            + self._mul(self.v0, g0)
            + self._mul(self.v1, g1)
            + self._mul(self.v2, g2)
        )

    def step(self, u, g_prev, g_here, g_next):
        return (
            self._mul(self.E1, u)
            + self._mul(self.w_prev, g_prev)
            + self._mul(self.w_here, g_here)
            + self._mul(self.w_next, g_next)
        )

    def trapezoid_step(self, u, g0, g1):
        return self._mul(self.E1, u + 0.5 * self.dt * g0) + 0.5 * self.dt * g1

    def run(self, u0, G):
        """Integrate a full trajectory for stacked forcings G (..., nt+1, dim)."""
        nt = G.shape[-2] - 1
        U = np.zeros_like(G)
        U[..., 0, :] = u0
        if nt == 1:
            U[..., 1, :] = self.trapezoid_step(U[..., 0, :], G[..., 0, :], G[..., 1, :])
            return U
        U[..., 1, :] = self.first_step(
            U[..., 0, :], G[..., 0, :], G[..., 1, :], G[..., 2, :]
        )
        for j in range(1, nt):
            U[..., j + 1, :] = self.step(
                U[..., j, :], G[..., j - 1, :], G[..., j, :], G[..., j + 1, :]
            )
        return U


@dataclass
class PropagatorSolution:
    """Time-gridded chaos coefficients plus the weights used for norm reports."""

    problem: EvolutionProblem
    times: np.ndarray
    trajectories: dict
    c_values: list | None = None
    weights: WeightSequence | None = None
    r_exponent: float | None = None

    def coeff_trajectory(self, alpha: MultiIndex):
        traj = self.trajectories.get(alpha)
        if traj is None:
            return np.zeros((len(self.times), self.problem.space.dim),
                            dtype=self.problem.space.dtype)
        return traj

    def indices(self):
        return sorted(self.trajectories, key=MultiIndex.sort_key)

    def final_series(self) -> ChaosSeries:
        out = ChaosSeries(self.problem.space, self.problem.box)
        for alpha in self.indices():
            out.set_coeff(alpha, self.trajectories[alpha][-1])
        return out


def _group_by_level(box: TruncationBox):
    levels = [[] for _ in range(box.order + 1)]
    for alpha in enumerate_indices(box):
        levels[alpha.order].append(alpha)
    return levels


def solve(problem: EvolutionProblem, cap: int = 100_000) -> PropagatorSolution:
    """Solve the propagator system by induction on the index order.

    Each u_alpha integrates u' = A u + f_alpha + sum_k sqrt(alpha_k) M_k(t)
    u_{alpha - eps_k}; absent parents contribute zero.  Indices of the same
    order are independent given the previous level and are stepped together.
    """
    box = problem.box
    if box.size() > cap:
        raise ResourceCapError(
            f"box holds {box.size()} indices, cap is {cap}"
        )
    space = problem.space
    nt = problem.nt
    dt = problem.T / nt
    ts = problem.time_grid()
    stepper = ExponentialStepper(problem.A, space.dim, dt)
    profiles = {
        k: np.asarray(problem.noise.time_profile(k, ts), dtype=float)
        for k in range(1, box.modes + 1)
    }

    trajectories: dict[MultiIndex, np.ndarray] = {}
    for level in _group_by_level(box):
        m = len(level)
        G = np.zeros((m, nt + 1, space.dim), dtype=space.dtype)
        u0 = np.zeros((m, space.dim), dtype=space.dtype)
        for i, alpha in enumerate(level):
            u0[i] = problem.u0.coeff(alpha)
            forced = problem.forcing(alpha)
            if forced is not None:
                G[i] += forced
            for k, ak in alpha.entries:
                parent = alpha.sub_one(k)
                applied = problem.M.spatial(k).apply(trajectories[parent])
                G[i] += math.sqrt(ak) * profiles[k][:, None] * applied
        U = stepper.run(u0, G)
        if not np.all(np.isfinite(U)):
            raise SolverDivergenceError(
                f"non-finite values at level {level[0].order}"
            )
        for i, alpha in enumerate(level):
            trajectories[alpha] = U[i]
    return PropagatorSolution(problem, ts, trajectories)


def default_weights(c_values) -> WeightSequence:
    """The operator-derived weight sequence q_k = 2k (1 + C_k)."""
    return WeightSequence.from_operator_bounds(c_values)


def weighted_norm_trajectory(sol: PropagatorSolution, weights: WeightSequence, r: float):
    """t -> sum_alpha q^{2 r alpha} ||u_alpha(t)||_V^2 / |alpha|!."""
    space = sol.problem.space
    gv = space.weight_array() * space.v_factor_array()
    out = np.zeros(len(sol.times))
    for alpha in sol.indices():
        traj = sol.trajectories[alpha]
        scale = weights.power(alpha, 2.0 * r) / math.factorial(alpha.order)
        out += scale * np.sum(gv * np.abs(traj) ** 2, axis=1)
    return out


def solution_norm_sq(sol: PropagatorSolution, weights: WeightSequence, r: float) -> float:
    """Discrete squared (Q, r)-norm on V(T): trapezoid in time of the weighted trajectory."""
    integrand = weighted_norm_trajectory(sol, weights, r)
    return float(np.trapz(integrand, sol.times))


def mean_and_moments(sol: PropagatorSolution):
    """Mean trajectory u_(0)(t) and the pointwise second moment sum_alpha |u_alpha|^2."""
    mean = sol.coeff_trajectory(MultiIndex.zero()).copy()
    m2 = np.zeros((len(sol.times), sol.problem.space.dim))
    for alpha in sol.indices():
        m2 += np.abs(sol.trajectories[alpha]) ** 2
    return mean, m2


@dataclass
class KVResult:
    """Graded slices of the weighted recursion and their per-level deviations.

    `deviations` are absolute sup-norm mismatches against the weighted
    propagator coefficients; `relative_deviations` normalize by the level's
    magnitude (floored at one), which removes the growth of the weight powers.
    """

    levels: list = field(default_factory=list)
    deviations: list = field(default_factory=list)
    relative_deviations: list = field(default_factory=list)


def kv_recursion(sol: PropagatorSolution, weights: WeightSequence, n_max: int) -> KVResult:
    """Rebuild the graded solution slices by the weighted raising recursion.

    U_0 = u_(0); U_{n+1}(t) = int_0^t Phi_{t,s} delta(M^o(s) U_n(s)) ds with
    M^o_k = q_k M_k.  Coefficientwise this must reproduce q^alpha u_alpha;
    the per-level maximum deviation is reported.
    """
    problem = sol.problem
    if not problem.is_deterministic_data():
        raise ValueError("the recursion needs deterministic initial data and forcing")
    if n_max > problem.box.order:
        raise ValueError("n_max exceeds the truncation order")
    space = problem.space
    nt = problem.nt
    dt = problem.T / nt
    ts = sol.times
    stepper = ExponentialStepper(problem.A, space.dim, dt)
    profiles = {
        k: np.asarray(problem.noise.time_profile(k, ts), dtype=float)
        for k in range(1, problem.box.modes + 1)
    }
    by_level = _group_by_level(problem.box)

    result = KVResult()
    current = {MultiIndex.zero(): sol.coeff_trajectory(MultiIndex.zero())}
    result.levels.append(current)
    result.deviations.append(0.0)
    result.relative_deviations.append(0.0)
    for n in range(n_max):
        nxt: dict[MultiIndex, np.ndarray] = {}
        dev = 0.0
        scale = 1.0
        for alpha in by_level[n + 1]:
            g = np.zeros((nt + 1, space.dim), dtype=space.dtype)
            for k, ak in alpha.entries:
                parent = alpha.sub_one(k)
                prev = current.get(parent)
                if prev is None:
                    continue
                applied = problem.M.spatial(k).apply(prev)
                g += math.sqrt(ak) * weights.q(k) * profiles[k][:, None] * applied
            traj = stepper.run(np.zeros(space.dim, dtype=space.dtype), g)
            nxt[alpha] = traj
            expected = weights.power(alpha, 1.0) * sol.coeff_trajectory(alpha)
            dev = max(dev, float(np.max(np.abs(traj - expected))))
            scale = max(scale, float(np.max(np.abs(expected))))
        result.levels.append(nxt)
        result.deviations.append(dev)
        result.relative_deviations.append(dev / scale)
        current = nxt
    return result


def u_h_pairing(sol: PropagatorSolution, h: DirectionH):
    """Pair the solution with the stochastic exponential of h.

    Returns the trajectory sum_alpha u_alpha(t) h^alpha / sqrt(alpha!);
    requires h to be small relative to the solution's weight sequence.
    """
    weights = sol.weights if sol.weights is not None else WeightSequence.constant(1.0)
    if smallness_radius(h, weights) is None:
        raise ValueError("direction is not small relative to the weight sequence")
    out = np.zeros((len(sol.times), sol.problem.space.dim),
                   dtype=sol.problem.space.dtype)
    for alpha in sol.indices():
        w = h.power(alpha)
        if w != 0.0:
            out += sol.trajectories[alpha] * (w / math.sqrt(alpha.factorial()))
    return out
