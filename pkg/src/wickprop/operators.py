"""Discretized evolution operators and noise models.

The spatial domain is a periodic interval with a uniform grid; second-order
constant-coefficient operators act diagonally on the Fourier modes, so the
semigroup is exact there.  Multiplication-type noise operators act in physical
space with transforms at the boundary of each application.  Scalar problems
use a one-dimensional coefficient space, and an explicit-matrix representation
is available for everything else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .chaos import ChaosSeries, CoefficientSpace
from .multiindex import TruncationBox


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid on the periodic interval [0, length)."""

    length: float
    n: int

    def __post_init__(self):
        if self.length <= 0 or self.n < 2:
            raise ValueError("need length > 0 and at least two grid points")

    @property
    def dx(self) -> float:
        return self.length / self.n

    def points(self):
        return np.arange(self.n) * self.dx

    def freqs(self):
        """Angular frequencies y of the discrete Fourier modes."""
        return 2.0 * math.pi * np.fft.fftfreq(self.n, d=self.dx)


def fourier_space(grid: SpatialGrid) -> CoefficientSpace:
    """Coefficient space of Fourier modes with Parseval weights and (1+y^2) V-factors."""
    w = grid.length / grid.n**2
    y = grid.freqs()
    return CoefficientSpace(
        dim=grid.n,
        weights=(w,) * grid.n,
        label="fourier-modes",
        v_factors=tuple(1.0 + y**2),
    )


def real_grid_space(grid: SpatialGrid) -> CoefficientSpace:
    return CoefficientSpace(dim=grid.n, weights=(grid.dx,) * grid.n, label="real-grid")


def cosine_mode(T: float, k: int, t):
    """Orthonormal cosine basis of L2((0, T)): constant mode then cosines."""
    if k < 1:
        raise ValueError("modes are 1-based")
    t = np.asarray(t, dtype=float)
    if np.any(t < -1e-12) or np.any(t > T + 1e-12):
        raise ValueError("time outside [0, T]")
    if k == 1:
        out = np.full_like(t, 1.0 / math.sqrt(T))
    else:
        out = math.sqrt(2.0 / T) * np.cos((k - 1) * math.pi * t / T)
    return out if out.ndim else float(out)


class NoiseModel:
    """White-noise structure: which Gaussian modes drive the equation.

    Kinds: "time-white" (cosine basis of L2((0,T))), "space-white" (spatial
    basis on the grid), "space-time" (tensor basis, flattened row-major by
    time index) and "single-variable" (one Gaussian).
    """

    def __init__(self, kind, T=None, grid=None, mode_count=1, time_modes=None, space_modes=None):
        if kind not in ("time-white", "space-white", "space-time", "single-variable"):
            raise ValueError(f"unknown noise kind {kind!r}")
        self.kind = kind
        self.T = T
        self.grid = grid
        if kind == "space-time":
            if time_modes is None or space_modes is None:
                raise ValueError("space-time noise needs time_modes and space_modes")
            self.time_mode_count = int(time_modes)
            self.space_mode_count = int(space_modes)
            self.mode_count = self.time_mode_count * self.space_mode_count
        else:
            self.mode_count = int(mode_count)
            self.time_mode_count = self.mode_count if kind == "time-white" else 0
            self.space_mode_count = self.mode_count if kind == "space-white" else 0
        if self.mode_count < 1:
            raise ValueError("mode_count must be >= 1")
        if kind in ("time-white", "space-time") and (T is None or T <= 0):
            raise ValueError(f"{kind} noise needs a positive horizon T")
        if kind in ("space-white", "space-time") and grid is None:
            raise ValueError(f"{kind} noise needs a spatial grid")

    @classmethod
    def time_white(cls, T, mode_count):
        return cls("time-white", T=T, mode_count=mode_count)

    @classmethod
    def space_white(cls, grid, mode_count):
        return cls("space-white", grid=grid, mode_count=mode_count)

    @classmethod
    def space_time(cls, T, grid, time_modes, space_modes):
        return cls("space-time", T=T, grid=grid, time_modes=time_modes, space_modes=space_modes)

    @classmethod
    def single_variable(cls):
        return cls("single-variable", mode_count=1)

    def split_mode(self, k):
        """Flattened mode -> (time index, space index); row-major by time index."""
        if not 1 <= k <= self.mode_count:
            raise ValueError(f"mode {k} outside 1..{self.mode_count}")
        if self.kind != "space-time":
            return (k, k)
        i = (k - 1) // self.space_mode_count + 1
        j = (k - 1) % self.space_mode_count + 1
        return (i, j)

    def time_profile(self, k, t):
        """Scalar time factor c_k(t): a cosine mode or identically one."""
        if not 1 <= k <= self.mode_count:
            raise ValueError(f"mode {k} outside 1..{self.mode_count}")
        if self.kind == "time-white":
            return cosine_mode(self.T, k, t)
        if self.kind == "space-time":
            return cosine_mode(self.T, self.split_mode(k)[0], t)
        t = np.asarray(t, dtype=float)
        out = np.ones_like(t)
        return out if out.ndim else float(out)

    def space_mode(self, j):
        """Orthonormal real trigonometric mode h_j sampled on the grid."""
        if self.grid is None:
            raise ValueError("this noise model has no spatial component")
        L = self.grid.length
        x = self.grid.points()
        if j == 1:
            return np.full(self.grid.n, 1.0 / math.sqrt(L))
        m = j // 2
        phase = 2.0 * math.pi * m * x / L
        if j % 2 == 0:
            return math.sqrt(2.0 / L) * np.cos(phase)
        return math.sqrt(2.0 / L) * np.sin(phase)


def time_modes(noise: NoiseModel, k: int, t):
    """Evaluate the k-th orthonormal time mode of the noise at time t."""
    if noise.kind not in ("time-white", "space-time"):
        raise ValueError(f"{noise.kind} noise has no time modes")
    return cosine_mode(noise.T, k, t)


class OperatorFamily:
    """Bounded operator from V to V': Fourier multiplier, scalar or matrix."""

    def __init__(self, kind, multiplier=None, value=None, matrix=None, grid=None):
        self.kind = kind
        self.grid = grid
        if kind == "multiplier":
            self.multiplier = np.asarray(multiplier, dtype=complex)
        elif kind == "scalar":
            self.value = float(value)
        elif kind == "matrix":
            self.matrix = np.asarray(matrix, dtype=float)
            if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
                raise ValueError("matrix representation must be square")
            self._cn_cache = {}
        else:
            raise ValueError(f"unknown operator kind {kind!r}")

    @classmethod
    def fourier(cls, grid: SpatialGrid, a2=1.0, a1=0.0, a0=0.0):
        """Second-order multiplier a(y) = -a2 y^2 + i a1 y + a0."""
        y = grid.freqs()
        return cls("multiplier", multiplier=-a2 * y**2 + 1j * a1 * y + a0, grid=grid)

    @classmethod
    def scalar(cls, a):
        return cls("scalar", value=a)

    @classmethod
    def from_matrix(cls, m):
        return cls("matrix", matrix=m)

    def symbol(self, dim=None):
        """Per-mode multiplier as a vector (None for the matrix kind)."""
        if self.kind == "multiplier":
            return self.multiplier
        if self.kind == "scalar":
            return np.full(dim or 1, self.value, dtype=complex)
        return None

    def apply(self, v):
        v = np.asarray(v)
        if self.kind == "multiplier":
            return self.multiplier * v
        if self.kind == "scalar":
            return self.value * v
        return v @ self.matrix.T

    def _cn_factor(self, dt):
        lhs = np.eye(self.matrix.shape[0]) - 0.5 * dt * self.matrix
        rhs = np.eye(self.matrix.shape[0]) + 0.5 * dt * self.matrix
        return scipy.linalg.lu_factor(lhs), rhs

    def semigroup(self, t, s, v, dt_hint=None, adjoint=False):
        """Apply Phi_{t,s} = exp((t-s) A).

        Exact per mode for multiplier/scalar kinds; Crank-Nicolson with at
        least four substeps per hinted grid interval for the matrix kind
        (grid-aligned spans then compose exactly).
        """
        if t < s:
            raise ValueError("semigroup requires t >= s")
        v = np.asarray(v)
        span = t - s
        if self.kind in ("multiplier", "scalar"):
            sym = self.multiplier if self.kind == "multiplier" else self.value
            sym = np.conj(sym) if adjoint else sym
            return np.exp(span * sym) * v
        if span == 0.0:
            return v.copy()
        micro = (dt_hint if dt_hint else span) / 4.0
        nsub = max(1, round(span / micro))
        dt = span / nsub
        key = (round(dt, 15), adjoint)
        if key not in self._cn_cache:
            mat = self.matrix.T if adjoint else self.matrix
            lhs = np.eye(mat.shape[0]) - 0.5 * dt * mat
            rhs = np.eye(mat.shape[0]) + 0.5 * dt * mat
            self._cn_cache[key] = (scipy.linalg.lu_factor(lhs), rhs)
        lu, rhs = self._cn_cache[key]
        out = v.astype(float, copy=True)
        for _ in range(nsub):
            out = scipy.linalg.lu_solve(lu, rhs @ out)
        return out


def semigroup_apply(A: OperatorFamily, t, s, v, dt_hint=None):
    return A.semigroup(t, s, v, dt_hint=dt_hint)


def coercivity_check(A: OperatorFamily, gamma):
    """Smallest C with Re a(y) + gamma (1 + y^2) <= C over the grid modes.

    Returns None when the bound keeps growing along the resolved frequencies
    (the maximum sits at the largest |y| and still increases there), which is
    the discrete signature of a non-coercive pair.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if A.kind == "scalar":
        return A.value + gamma
    if A.kind != "multiplier":
        raise ValueError("coercivity check needs a multiplier or scalar operator")
    y = A.grid.freqs()
    g = np.real(A.multiplier) + gamma * (1.0 + y**2)
    speeds = np.abs(y)
    shells = np.unique(np.round(speeds, 12))
    shell_max = np.array([g[np.isclose(speeds, s)].max() for s in shells])
    top = float(shell_max.max())
    scale = max(1.0, abs(top))
    if len(shells) >= 2 and shell_max[-1] >= top - 1e-12 * scale:
        if shell_max[-1] > shell_max[-2] + 1e-12 * scale:
            return None
    return top


class SpatialNoiseOp:
    """Spatial factor B of a noise operator M_k(t) = c_k(t) B_k."""

    def __init__(self, kind, multiplier=None, value=None, matrix=None, grid_values=None):
        self.kind = kind
        if kind == "multiplier":
            self.multiplier = np.asarray(multiplier, dtype=complex)
        elif kind == "scalar":
            self.value = float(value)
        elif kind == "matrix":
            self.matrix = np.asarray(matrix, dtype=float)
        elif kind == "multiply-grid":
            # multiplication by a real function in physical space; the
            # coefficients live in Fourier space, so transform on both sides
            self.grid_values = np.asarray(grid_values, dtype=float)
        else:
            raise ValueError(f"unknown spatial noise kind {kind!r}")

    @classmethod
    def derivative(cls, grid: SpatialGrid, order, scale=1.0):
        """scale * d^order/dx^order as a Fourier multiplier (i y)^order."""
        y = grid.freqs()
        return cls("multiplier", multiplier=scale * (1j * y) ** order)

    @classmethod
    def scalar(cls, value):
        return cls("scalar", value=value)

    @classmethod
    def multiply_by(cls, values):
        return cls("multiply-grid", grid_values=values)

    def apply(self, v, adjoint=False):
        """Apply to coefficient vectors along the last axis."""
        v = np.asarray(v)
        if self.kind == "multiplier":
            m = np.conj(self.multiplier) if adjoint else self.multiplier
            return m * v
        if self.kind == "scalar":
            return self.value * v
        if self.kind == "matrix":
            m = self.matrix.T if adjoint else self.matrix
            return v @ m.T
        # real multiplication is self-adjoint under the Parseval weights
        phys = np.fft.ifft(v, axis=-1)
        return np.fft.fft(self.grid_values * phys, axis=-1)


class NoiseOperatorFamily:
    """Per-mode factorization M_k(t) = c_k(t) B_k."""

    def __init__(self, noise: NoiseModel, spatial_ops):
        self.noise = noise
        if isinstance(spatial_ops, SpatialNoiseOp):
            spatial_ops = [spatial_ops] * noise.mode_count
        self.spatial_ops = list(spatial_ops)
        if len(self.spatial_ops) != noise.mode_count:
            raise ValueError("one spatial operator per noise mode required")

    @property
    def n_modes(self):
        return self.noise.mode_count

    def spatial(self, k) -> SpatialNoiseOp:
        if not 1 <= k <= self.n_modes:
            raise ValueError(f"mode {k} outside 1..{self.n_modes}")
        return self.spatial_ops[k - 1]

    def profile(self, k, t):
        return self.noise.time_profile(k, t)

    def apply(self, k, t, v):
        """M_k(t) v = c_k(t) (B_k v)."""
        return self.profile(k, t) * self.spatial(k).apply(v)

    def is_zero(self):
        return all(
            (op.kind == "scalar" and op.value == 0.0)
            or (op.kind == "multiplier" and not np.any(op.multiplier))
            for op in self.spatial_ops
        )


def apply_Mk(M: NoiseOperatorFamily, k, t, v):
    return M.apply(k, t, v)


class EvolutionProblem:
    """Discretized evolution problem: spaces, operators, data and truncation."""

    def __init__(self, space, A, M, noise, u0, T, nt, box, f=None):
        self.space = space
        self.A = A
        self.M = M
        self.noise = noise
        self.u0 = u0
        self.f = f
        self.T = float(T)
        self.nt = int(nt)
        self.box = box
        self.validate()

    def validate(self):
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        if self.nt < 1:
            raise ValueError("nt must be >= 1")
        if not isinstance(self.box, TruncationBox):
            raise ValueError("box must be a TruncationBox")
        if self.box.modes > self.M.n_modes:
            raise ValueError(
                f"box uses {self.box.modes} modes but the noise family has {self.M.n_modes}"
            )
        if not isinstance(self.u0, ChaosSeries):
            raise ValueError("u0 must be a ChaosSeries")
        if self.u0.space.dim != self.space.dim:
            raise ValueError("u0 lives in a different coefficient space")
        if self.f is not None:
            for alpha, traj in self.f.items():
                if not self.box.contains(alpha):
                    raise ValueError(f"forcing index {alpha} outside the box")
                traj = np.asarray(traj)
                if traj.shape != (self.nt + 1, self.space.dim):
                    raise ValueError(
                        f"forcing for {alpha} must have shape (nt+1, dim)"
                    )

    def time_grid(self):
        return np.linspace(0.0, self.T, self.nt + 1)

    def forcing(self, alpha):
        """Forcing trajectory for one index, zeros when absent."""
        if self.f is None:
            return None
        traj = self.f.get(alpha)
        return None if traj is None else np.asarray(traj, dtype=self.space.dtype)

    def is_deterministic_data(self):
        from .multiindex import MultiIndex

        zero = MultiIndex.zero()
        u0_ok = all(a == zero for a in self.u0.keys())
        f_ok = self.f is None or all(a == zero for a in self.f)
        return u0_ok and f_ok


def _volterra_apply(problem: EvolutionProblem, k, v):
    """Apply the discrete map L: v(.) -> (t -> int_0^t Phi_{t,s} M_k(s) v(s) ds).

    Trapezoidal quadrature on the problem grid; O(nt) through the recursive
    form of the lower-triangular exponential kernel.
    """
    ts = problem.time_grid()
    nt = problem.nt
    dt = problem.T / nt
    A = problem.A
    op = problem.M.spatial(k)
    prof = np.asarray(problem.noise.time_profile(k, ts), dtype=float)

    v = np.asarray(v)
    w = op.apply(v) * prof[:, None]
    E1 = None
    if A.kind in ("multiplier", "scalar"):
        E1 = np.exp(A.symbol(problem.space.dim) * dt)
        if np.all(np.imag(E1) == 0.0) and problem.space.dtype == np.float64:
            E1 = E1.real

    out = np.zeros_like(w)
    S = w[0].copy()  # S_j = sum_{i<=j} Phi^{j-i} w_i
    head = w[0].copy()  # Phi^j w_0
    for j in range(1, nt + 1):
        if E1 is not None:
            S = E1 * S + w[j]
            head = E1 * head
        else:
            S = A.semigroup(dt, 0.0, S, dt_hint=dt) + w[j]
            head = A.semigroup(dt, 0.0, head, dt_hint=dt)
        out[j] = dt * (S - 0.5 * (head + w[j]))
    return out


def _volterra_apply_adjoint(problem: EvolutionProblem, k, u):
    """Plain conjugate transpose of _volterra_apply on grid functions."""
    ts = problem.time_grid()
    nt = problem.nt
    dt = problem.T / nt
    A = problem.A
    op = problem.M.spatial(k)
    prof = np.asarray(problem.noise.time_profile(k, ts), dtype=float)

    u = np.asarray(u)
    E1c = None
    if A.kind in ("multiplier", "scalar"):
        E1c = np.conj(np.exp(A.symbol(problem.space.dim) * dt))
        if np.all(np.imag(E1c) == 0.0) and problem.space.dtype == np.float64:
            E1c = E1c.real

    acc = np.zeros_like(u)
    R = np.zeros_like(u[0])  # R_i = sum_{j>i} (Phi^H)^{j-i} u_j
    for i in range(nt, -1, -1):
        if i < nt:
            if E1c is not None:
                R = E1c * (R + u[i + 1])
            else:
                R = A.semigroup(dt, 0.0, R + u[i + 1], dt_hint=dt, adjoint=True)
        if i == 0:
            acc[i] = dt * 0.5 * R
        else:
            acc[i] = dt * (0.5 * u[i] + R)
    return op.apply(acc, adjoint=True) * prof[:, None]


def _grid_v_weights(problem: EvolutionProblem):
    """Diagonal of the discrete V(T) inner product: trapezoid-in-time x V-weights."""
    qt = np.full(problem.nt + 1, problem.T / problem.nt)
    qt[0] *= 0.5
    qt[-1] *= 0.5
    gv = problem.space.weight_array() * problem.space.v_factor_array()
    return qt[:, None] * gv[None, :]


def grid_norm_sq(problem: EvolutionProblem, v):
    """Squared discrete V(T)-norm of a grid function v (nt+1, dim)."""
    return float(np.sum(_grid_v_weights(problem) * np.abs(np.asarray(v)) ** 2))


def estimate_Ck(problem: EvolutionProblem, k, iters=20, tol=1e-6, seed=0, return_info=False):
    """Operator-norm estimate for v -> int_0^t Phi_{t,s} M_k(s) v(s) ds on V(T).

    Power iteration on the normal operator with a deterministic seeded start;
    stops after `iters` iterations or when the estimate moves by less than
    `tol` relatively.  The value is an estimate, documented as approximate;
    non-convergence returns the last iterate with a flag.
    """
    G = _grid_v_weights(problem)
    rng = np.random.default_rng(seed)
    shape = (problem.nt + 1, problem.space.dim)
    x = rng.standard_normal(shape)
    if problem.space.dtype == np.complex128:
        x = x + 1j * rng.standard_normal(shape)

    def gnorm(z):
        return math.sqrt(float(np.sum(G * np.abs(z) ** 2)))

    nx = gnorm(x)
    if nx == 0.0:
        return (0.0, True) if return_info else 0.0
    x = x / nx
    sigma = 0.0
    converged = False
    for _ in range(iters):
        y = _volterra_apply(problem, k, x)
        new_sigma = gnorm(y)
        if new_sigma == 0.0:
            sigma, converged = 0.0, True
            break
        # x <- L* L x with the weighted adjoint L* = G^{-1} L^H G
        z = _volterra_apply_adjoint(problem, k, G * y) / G
        nz = gnorm(z)
        if nz == 0.0:
            sigma, converged = new_sigma, True
            break
        x = z / nz
        if sigma > 0.0 and abs(new_sigma - sigma) <= tol * sigma:
            sigma = new_sigma
            converged = True
            break
        sigma = new_sigma
    return (sigma, converged) if return_info else sigma


# ---------------------------------------------------------------------------
# Scenario configuration
# ---------------------------------------------------------------------------

class ConfigError(ValueError):
    """Invalid scenario configuration; carries the offending key."""

    def __init__(self, key, message):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


_REQUIRED_KEYS = (
    "equation", "noise", "sigma", "m_order", "T", "nt",
    "chaos_order", "chaos_modes", "u0",
)
_OPTIONAL_KEYS = (
    "L", "nx", "weights", "weights_value", "r_exponent", "seed",
    "u0_values", "noise_time_modes", "noise_space_modes",
    "mc_paths", "mc_dt", "a0",
)


@dataclass
class Scenario:
    """A validated configuration together with the assembled problem."""

    problem: EvolutionProblem
    equation: str
    noise_kind: str
    sigma: float
    m_order: int
    weights_kind: str
    weights_value: float
    r_exponent: float
    seed: int
    mc_paths: int
    mc_dt: float
    grid: SpatialGrid | None


def _require(cfg, key, types, predicate=None, what=""):
    if key not in cfg:
        raise ConfigError(key, "missing")
    val = cfg[key]
    if not isinstance(val, types) or isinstance(val, bool):
        raise ConfigError(key, f"expected {what or types}")
    if predicate is not None and not predicate(val):
        raise ConfigError(key, f"invalid value {val!r}")
    return val


def load_scenario(cfg: dict) -> Scenario:
    """Validate a scenario mapping and assemble the evolution problem.

    See the bundled configs for the schema; errors name the offending key.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    allowed = set(_REQUIRED_KEYS) | set(_OPTIONAL_KEYS)
    for key in cfg:
        if key not in allowed:
            raise ConfigError(key, "unknown key")

    equation = _require(cfg, "equation", str, lambda v: v in ("heat", "ode"),
                        "one of 'heat', 'ode'")
    noise_kind = _require(
        cfg, "noise", str,
        lambda v: v in ("time-white", "space-white", "space-time", "single-gaussian"),
        "a known noise kind")
    sigma = float(_require(cfg, "sigma", (int, float)))
    m_order = _require(cfg, "m_order", int, lambda v: v in (0, 1, 2), "0, 1 or 2")
    T = float(_require(cfg, "T", (int, float), lambda v: v > 0, "a positive number"))
    nt = _require(cfg, "nt", int, lambda v: v >= 1, "a positive integer")
    order = _require(cfg, "chaos_order", int, lambda v: v >= 0, "an integer >= 0")
    modes = _require(cfg, "chaos_modes", int, lambda v: v >= 1, "a positive integer")
    u0_kind = _require(cfg, "u0", str,
                       lambda v: v in ("gaussian-bump", "constant", "custom-grid"),
                       "one of 'gaussian-bump', 'constant', 'custom-grid'")

    weights_kind = cfg.get("weights", "derived")
    if weights_kind not in ("constant", "derived"):
        raise ConfigError("weights", "expected 'constant' or 'derived'")
    weights_value = float(cfg.get("weights_value", 1.0))
    if weights_value < 1.0:
        raise ConfigError("weights_value", "constant weights require q >= 1")
    r_exponent = float(cfg.get("r_exponent", -2.5))
    seed = int(cfg.get("seed", 0))
    mc_paths = int(cfg.get("mc_paths", 100_000))
    mc_dt = float(cfg.get("mc_dt", T / 4096.0))
    if mc_paths < 1:
        raise ConfigError("mc_paths", "must be positive")
    if mc_dt <= 0:
        raise ConfigError("mc_dt", "must be positive")

    grid = None
    if equation == "heat":
        L = float(_require(cfg, "L", (int, float), lambda v: v > 0, "a positive number"))
        nx = _require(cfg, "nx", int, lambda v: v >= 4, "an integer >= 4")
        grid = SpatialGrid(L, nx)
        space = fourier_space(grid)
        A = OperatorFamily.fourier(grid, a2=1.0)
    else:
        if m_order != 0:
            raise ConfigError("m_order", "scalar equations admit only m_order = 0")
        space = CoefficientSpace.scalar()
        A = OperatorFamily.scalar(float(cfg.get("a0", 1.0)))

    # noise model and per-mode spatial factors
    if noise_kind == "single-gaussian":
        if modes != 1:
            raise ConfigError("chaos_modes", "single-gaussian noise has one mode")
        noise = NoiseModel.single_variable()
    elif noise_kind == "time-white":
        noise = NoiseModel.time_white(T, modes)
    elif noise_kind == "space-white":
        if equation != "heat":
            raise ConfigError("noise", "space-white noise needs the heat equation")
        if m_order != 0:
            raise ConfigError("m_order", "multiplication noise requires m_order = 0")
        noise = NoiseModel.space_white(grid, modes)
    else:  # space-time
        if equation != "heat":
            raise ConfigError("noise", "space-time noise needs the heat equation")
        if m_order != 0:
            raise ConfigError("m_order", "multiplication noise requires m_order = 0")
        n_time = _require(cfg, "noise_time_modes", int, lambda v: v >= 1,
                          "a positive integer")
        n_space = _require(cfg, "noise_space_modes", int, lambda v: v >= 1,
                           "a positive integer")
        if n_time * n_space != modes:
            raise ConfigError(
                "chaos_modes",
                f"must equal noise_time_modes * noise_space_modes = {n_time * n_space}")
        noise = NoiseModel.space_time(T, grid, n_time, n_space)

    if noise_kind in ("time-white", "single-gaussian"):
        if equation == "heat":
            shared = SpatialNoiseOp.derivative(grid, m_order, scale=sigma)
        else:
            shared = SpatialNoiseOp.scalar(sigma)
        M = NoiseOperatorFamily(noise, shared)
    else:
        ops = []
        for k in range(1, noise.mode_count + 1):
            j = noise.split_mode(k)[1]
            ops.append(SpatialNoiseOp.multiply_by(sigma * noise.space_mode(j)))
        M = NoiseOperatorFamily(noise, ops)

    # initial datum
    box = TruncationBox(order, modes)
    if equation == "ode":
        if u0_kind != "constant":
            raise ConfigError("u0", "scalar equations support only 'constant'")
        u0 = ChaosSeries.deterministic(space, box, np.array([1.0]))
    else:
        x = grid.points()
        if u0_kind == "gaussian-bump":
            phys = np.exp(-0.5 * (x - grid.length / 2.0) ** 2)
        elif u0_kind == "constant":
            phys = np.ones(grid.n)
        else:
            vals = _require(cfg, "u0_values", list, lambda v: len(v) == grid.n,
                            f"a list of {grid.n} samples")
            phys = np.asarray([float(v) for v in vals])
        u0 = ChaosSeries.deterministic(space, box, np.fft.fft(phys))

    problem = EvolutionProblem(space, A, M, noise, u0, T, nt, box)
    return Scenario(
        problem=problem,
        equation=equation,
        noise_kind=noise_kind,
        sigma=sigma,
        m_order=m_order,
        weights_kind=weights_kind,
        weights_value=weights_value,
        r_exponent=r_exponent,
        seed=seed,
        mc_paths=mc_paths,
        mc_dt=mc_dt,
        grid=grid,
    )
