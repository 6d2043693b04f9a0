"""Independent verification oracles.

Three routes that do not touch the propagator's chaos algebra: direct
Euler-Maruyama simulation of the Ito form (valid for adapted, time-white
scenarios), closed-form per-mode moments of the constant-coefficient model
problems, and the deterministic perturbed equation obtained by pairing with a
stochastic exponential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .chaos import DirectionH
from .multiindex import MultiIndex
from .operators import EvolutionProblem
from .propagator import ExponentialStepper


def closed_form_moment(m_order, sigma, y, t, u0hat=1.0):
    """Exact second moment |u0hat|^2 exp((sigma^2 y^{2m} - 2 y^2) t) of the per-mode Ito SDE."""
    if m_order not in (0, 1, 2):
        raise ValueError("m_order must be 0, 1 or 2")
    y = np.asarray(y, dtype=float)
    out = abs(u0hat) ** 2 * np.exp((sigma**2 * y ** (2 * m_order) - 2.0 * y**2) * t)
    return out if out.ndim else float(out)


def moment_integrable(m_order, sigma) -> bool:
    """Whether the closed-form moment is integrable in y for generic data.

    m = 0: always; m = 1: iff sigma^2 <= 2; m = 2: only without noise.
    """
    if m_order == 0:
        return True
    if m_order == 1:
        return sigma**2 <= 2.0
    return sigma == 0.0


def classify_moment_regime(m_order, sigma) -> str:
    """Integrability regime label, with the m = 1 threshold called out."""
    if m_order == 1 and abs(sigma**2 - 2.0) <= 1e-12:
        return "boundary"
    return "integrable" if moment_integrable(m_order, sigma) else "divergent"


def wick_space_noise_norm(t, y, m_order=1, u0hat=1.0):
    """Per-mode chaos second moment for first-order transport noise driven by
    a single Gaussian: sum_n |u0hat|^2 e^{-2 y^2 t} (y^2 t^2)^n / n!
    = |u0hat|^2 exp(y^2 t (t - 2)).  Integrable for t < 2, divergent beyond.
    """
    if m_order != 1:
        raise ValueError("closed form covers the first-order noise only")
    y = np.asarray(y, dtype=float)
    out = abs(u0hat) ** 2 * np.exp(y**2 * t * (t - 2.0))
    return out if out.ndim else float(out)


@dataclass
class McResult:
    """Euler-Maruyama ensemble statistics recorded on a strided time set."""

    times: np.ndarray
    mean: np.ndarray        # (n_rec, dim) complex
    mean_se: np.ndarray     # (n_rec, dim)
    m2: np.ndarray          # (n_rec, dim)
    m2_se: np.ndarray       # (n_rec, dim)
    m2_norm: np.ndarray     # (n_rec,)  spatially integrated second moment
    m2_norm_se: np.ndarray  # (n_rec,)
    paths: int


def _path_normals(seed, path, n):
    """Counter-based stream keyed by (seed, path): independent of scheduling."""
    key = (int(seed) << 64) + int(path)
    return np.random.Generator(np.random.Philox(key=key)).standard_normal(n)


@numba.njit(cache=True)
def _em_block(u, dWT, growth, b, w, rec_steps, sum_u, sum_m2, sum_m4, sum_s, sum_s2):
    """Advance one block of paths and accumulate moments at the recorded steps.

    u is (paths, dim) complex and is updated in place as
    u <- u * (growth + b * dW_j); rec_steps is the sorted list of step indices
    (including 0) at which first/second/fourth moments and the spatially
    integrated second moment are accumulated.
    """
    nsteps, bp = dWT.shape
    dim = u.shape[1]
    rec_ptr = 0
    if rec_steps[0] == 0:
        for p in range(bp):
            s = 0.0
            for d in range(dim):
                v = u[p, d]
                m2 = v.real * v.real + v.imag * v.imag
                sum_u[0, d] += v
                sum_m2[0, d] += m2
                sum_m4[0, d] += m2 * m2
                s += w[d] * m2
            sum_s[0] += s
            sum_s2[0] += s * s
        rec_ptr = 1
    for j in range(nsteps):
        for p in range(bp):
            dw = dWT[j, p]
            for d in range(dim):
                u[p, d] = u[p, d] * (growth[d] + b[d] * dw)
        if rec_ptr < len(rec_steps) and rec_steps[rec_ptr] == j + 1:
            r = rec_ptr
            for p in range(bp):
                s = 0.0
                for d in range(dim):
                    v = u[p, d]
                    m2 = v.real * v.real + v.imag * v.imag
                    sum_u[r, d] += v
                    sum_m2[r, d] += m2
                    sum_m4[r, d] += m2 * m2
                    s += w[d] * m2
                sum_s[r] += s
                sum_s2[r] += s * s
            rec_ptr += 1


def mc_ito(problem: EvolutionProblem, paths, dt=None, seed=0, block=4096,
           record_stride=None) -> McResult:
    """Euler-Maruyama moment estimation in Fourier space.

    Valid for time-white noise, where the raising-operator integral of an
    adapted integrand coincides with the Ito integral: each mode follows
    du = a(y) u dt + b(y) u dW with the shared Brownian path W.  Statistics
    are deterministic for a given seed (per-path counter-based streams,
    blockwise summation in fixed order) and are recorded every
    `record_stride` steps (default ~128 rows) plus the final time.
    """
    if problem.noise.kind != "time-white":
        raise ValueError("the Ito oracle requires time-white noise")
    if problem.A.kind == "matrix":
        raise ValueError("the Ito oracle requires a diagonal operator")
    op = problem.M.spatial(1)
    if op.kind not in ("multiplier", "scalar"):
        raise ValueError("the Ito oracle requires derivative- or scalar-type noise")
    if not problem.is_deterministic_data() or problem.f is not None:
        raise ValueError("the Ito oracle requires deterministic initial data, no forcing")

    dim = problem.space.dim
    if dt is None:
        dt = problem.T / 4096.0
    nsteps = max(1, round(problem.T / dt))
    dt = problem.T / nsteps
    if record_stride is None:
        record_stride = max(1, nsteps // 128)
    rec_steps = sorted(set(range(0, nsteps + 1, record_stride)) | {nsteps})
    n_rec = len(rec_steps)
    times = np.array(rec_steps) * dt

    a = problem.A.symbol(dim)
    b = op.multiplier if op.kind == "multiplier" else np.full(dim, op.value, dtype=complex)
    growth = 1.0 + a * dt
    u0 = problem.u0.coeff(MultiIndex.zero()).astype(complex)
    w = problem.space.weight_array()

    sum_u = np.zeros((n_rec, dim), dtype=complex)
    sum_m2 = np.zeros((n_rec, dim))
    sum_m4 = np.zeros((n_rec, dim))
    sum_s = np.zeros(n_rec)
    sum_s2 = np.zeros(n_rec)
    rec_arr = np.asarray(rec_steps, dtype=np.int64)

    sqrt_dt = math.sqrt(dt)
    done = 0
    while done < paths:
        bp = min(block, paths - done)
        dW = np.empty((bp, nsteps))
        for p in range(bp):
            dW[p] = _path_normals(seed, done + p, nsteps)
        dWT = np.ascontiguousarray(dW.T) * sqrt_dt
        u = np.tile(u0, (bp, 1))
        _em_block(u, dWT, growth.astype(complex), b.astype(complex), w,
                  rec_arr, sum_u, sum_m2, sum_m4, sum_s, sum_s2)
        done += bp

    n = float(paths)
    mean = sum_u / n
    m2 = sum_m2 / n
    var_u = np.maximum(m2 - np.abs(mean) ** 2, 0.0)
    mean_se = np.sqrt(var_u / n)
    var_m2 = np.maximum(sum_m4 / n - m2**2, 0.0)
    m2_se = np.sqrt(var_m2 / n)
    m2_norm = sum_s / n
    var_s = np.maximum(sum_s2 / n - m2_norm**2, 0.0)
    m2_norm_se = np.sqrt(var_s / n)
    return McResult(times, mean, mean_se, m2, m2_se, m2_norm, m2_norm_se, int(paths))


def solve_deterministic_h(problem: EvolutionProblem, h: DirectionH,
                          tol=1e-13, max_iter=50):
    """Integrate the h-perturbed deterministic equation with the propagator's stepper.

    u' = A u + f_h + sum_k h_k M_k(t) u.  The coupling makes the forcing
    implicit at the new node, so each step solves a short fixed point (the
    contraction factor is O(dt ||h|| ||M||)).
    """
    space = problem.space
    nt = problem.nt
    dt = problem.T / nt
    ts = problem.time_grid()
    stepper = ExponentialStepper(problem.A, space.dim, dt)

    hk = list(h.coords)
    active = [
        (k, hk[k - 1]) for k in range(1, min(len(hk), problem.M.n_modes) + 1)
        if hk[k - 1] != 0.0
    ]
    profiles = {
        k: np.asarray(problem.noise.time_profile(k, ts), dtype=float)
        for k, _ in active
    }

    # h-pairings of the data: deterministic parts plus h^alpha / sqrt(alpha!)
    u0_h = np.zeros(space.dim, dtype=space.dtype)
    for alpha, vec in problem.u0.items():
        u0_h = u0_h + vec * (h.power(alpha) / math.sqrt(alpha.factorial()))
    f_h = np.zeros((nt + 1, space.dim), dtype=space.dtype)
    if problem.f is not None:
        for alpha, traj in problem.f.items():
            weight = h.power(alpha) / math.sqrt(alpha.factorial())
            if weight != 0.0:
                f_h += np.asarray(traj, dtype=space.dtype) * weight

    def coupled(j, v):
        out = f_h[j].copy()
        for k, hval in active:
            out = out + hval * profiles[k][j] * problem.M.spatial(k).apply(v)
        return out

    u = np.zeros((nt + 1, space.dim), dtype=space.dtype)
    u[0] = u0_h
    g0 = coupled(0, u[0])

    scale = max(1.0, float(np.max(np.abs(u[0]))) if u[0].size else 1.0)
    if nt == 1:
        guess = stepper.propagate(u[0])
        for _ in range(max_iter):
            nxt = stepper.trapezoid_step(u[0], g0, coupled(1, guess))
            if np.max(np.abs(nxt - guess)) <= tol * scale:
                guess = nxt
                break
            guess = nxt
        u[1] = guess
        return u

    # steps onto t_1 and t_2 read the same three forcing nodes; solve jointly
    u1 = stepper.propagate(u[0])
    u2 = stepper.propagate(u1)
    for _ in range(max_iter):
        g1 = coupled(1, u1)
        g2 = coupled(2, u2)
        u1n = stepper.first_step(u[0], g0, g1, g2)
        u2n = stepper.step(u1n, g0, g1, g2)
        moved = max(float(np.max(np.abs(u1n - u1))), float(np.max(np.abs(u2n - u2))))
        u1, u2 = u1n, u2n
        if moved <= tol * scale:
            break
    u[1], u[2] = u1, u2

    for j in range(2, nt):
        g_prev = coupled(j - 1, u[j - 1])
        g_here = coupled(j, u[j])
        guess = stepper.propagate(u[j])
        for _ in range(max_iter):
            nxt = stepper.step(u[j], g_prev, g_here, coupled(j + 1, guess))
            if np.max(np.abs(nxt - guess)) <= tol * scale:
                guess = nxt
                break
            guess = nxt
        u[j + 1] = guess
        if not np.all(np.isfinite(u[j + 1])):
            raise FloatingPointError("perturbed solve diverged")
    return u
