"""Cameron–Martin basis algebra.

Chaos series over a finite coefficient space, the Wick product, the lowering
(Malliavin) and raising (Skorokhod) operators in coordinates, weighted norms,
dual pairings and stochastic exponentials.  All chaos-level scalars (factorial
weights, direction powers, weight powers) are real; coefficient vectors may be
complex when the coefficient space holds Fourier modes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .multiindex import MultiIndex, TruncationBox, enumerate_indices

HERMITE_ORDER_CAP = 60

# Grid of candidate exponents for the smallness radius (largest s with
# ||Lambda_Q^s h|| < 1).  Geometric so doubling the weights shifts one notch.
SMALLNESS_GRID = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


class BoxOverflowError(ValueError):
    """An operation produced chaos mass outside the target truncation box."""

    def __init__(self, message, lost_orders=()):
        super().__init__(message)
        self.lost_orders = tuple(lost_orders)


def hermite(n: int, x):
    """Probabilists' Hermite polynomial H_n(x) by the forward recurrence.

    H_{n+1}(x) = x H_n(x) - n H_{n-1}(x), H_0 = 1, H_1 = x.  Vectorized in x.
    """
    if n < 0:
        raise ValueError("order must be >= 0")
    if n > HERMITE_ORDER_CAP:
        raise ValueError(f"order {n} exceeds cap {HERMITE_ORDER_CAP}")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = x.copy()
    for m in range(1, n):
        h, h_prev = x * h - m * h_prev, h
    return h if h.ndim else float(h)


def xi_eval(alpha: MultiIndex, z):
    """Evaluate the basis element xi_alpha at the Gaussian sample z.

    z[..., k-1] is the sample of the k-th Gaussian coordinate; the result is
    prod_k H_{alpha_k}(z_k) / sqrt(alpha_k!) with shape z.shape[:-1] (scalar
    for 1-d z).
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        z = z.reshape(1)
    out = np.ones(z.shape[:-1])
    for k, a in alpha.entries:
        if k > z.shape[-1]:
            raise ValueError(f"sample does not cover mode {k}")
        out = out * hermite(a, z[..., k - 1]) / math.sqrt(math.factorial(a))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CoefficientSpace:
    """Finite-dimensional coefficient space with a weighted inner product.

    ``weights`` realizes the squared norm sum_j weights_j |f_j|^2; for the
    "fourier-modes" label the entries are complex and the weights implement
    the physical-space L2 norm through Parseval.  ``v_factors`` optionally
    carries the (1+y^2) Sobolev factors of the stronger V-norm.
    """

    dim: int
    weights: tuple
    label: str = "real-grid"
    v_factors: tuple | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.dim,) or np.any(w <= 0):
            raise ValueError("weights must be positive and of length dim")
        if self.label not in ("scalar", "real-grid", "fourier-modes"):
            raise ValueError(f"unknown label {self.label!r}")
        if self.v_factors is not None:
            vf = np.asarray(self.v_factors, dtype=float)
            if vf.shape != (self.dim,) or np.any(vf <= 0):
                raise ValueError("v_factors must be positive and of length dim")

    @classmethod
    def scalar(cls) -> "CoefficientSpace":
        return cls(1, (1.0,), "scalar")

    @property
    def dtype(self):
        return np.complex128 if self.label == "fourier-modes" else np.float64

    def weight_array(self):
        return np.asarray(self.weights, dtype=float)

    def v_factor_array(self):
        if self.v_factors is None:
            return np.ones(self.dim)
        return np.asarray(self.v_factors, dtype=float)

    def norm_sq(self, v) -> float:
        v = np.asarray(v)
        return float(np.sum(self.weight_array() * np.abs(v) ** 2))

    def norm_sq_v(self, v) -> float:
        """Squared V-norm (H-norm scaled by the Sobolev factors)."""
        v = np.asarray(v)
        return float(
            np.sum(self.weight_array() * self.v_factor_array() * np.abs(v) ** 2)
        )

    def inner(self, u, v):
        """Conjugate-linear in the first argument for complex spaces."""
        u = np.asarray(u)
        v = np.asarray(v)
        return complex(np.sum(self.weight_array() * np.conj(u) * v))

    def zeros(self):
        return np.zeros(self.dim, dtype=self.dtype)


class WeightSequence:
    """Per-mode weights q_k >= 1 defining the rescaled chaos norms.

    Variants: a constant, an explicit list with a constant tail, or the
    operator-derived rule q_k = 2k (1 + C_k) with C_k = 0 beyond the list.
    """

    def __init__(self, kind, data, tail=1.0):
        self._kind = kind
        self._data = tuple(float(v) for v in data)
        self._tail = float(tail)
        probe = [self.q(k) for k in range(1, len(self._data) + 2)]
        if any(q < 1.0 for q in probe):
            raise ValueError("weight sequences require q_k >= 1")

    @classmethod
    def constant(cls, c: float) -> "WeightSequence":
        return cls("constant", (c,))

    @classmethod
    def from_values(cls, values, tail=1.0) -> "WeightSequence":
        return cls("list", values, tail)

    @classmethod
    def from_operator_bounds(cls, c_values) -> "WeightSequence":
        """q_k = 2k (1 + C_k); beyond the list C_k = 0 so q_k = 2k."""
        c_values = tuple(float(c) for c in c_values)
        if any(c < 0 for c in c_values):
            raise ValueError("operator bounds must be >= 0")
        return cls("derived", c_values)

    def q(self, k: int) -> float:
        if k < 1:
            raise ValueError("positions are 1-based")
        if self._kind == "constant":
            return self._data[0]
        if self._kind == "list":
            return self._data[k - 1] if k <= len(self._data) else self._tail
        c = self._data[k - 1] if k <= len(self._data) else 0.0
        return 2.0 * k * (1.0 + c)

    def values(self, count: int):
        return np.array([self.q(k) for k in range(1, count + 1)])

    def power(self, alpha: MultiIndex, r: float) -> float:
        """q^{r alpha} = prod_k q_k^{r alpha_k}."""
        out = 1.0
        for k, a in alpha.entries:
            out *= self.q(k) ** (r * a)
        return out

    def __repr__(self):
        return f"WeightSequence({self._kind}, {self._data}, tail={self._tail})"


@dataclass(frozen=True)
class DirectionH:
    """Finitely supported direction h = (h_1, ..., h_K) in the noise space."""

    coords: tuple

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))

    @classmethod
    def zero(cls, modes: int = 1) -> "DirectionH":
        return cls((0.0,) * modes)

    def norm_sq(self) -> float:
        return float(sum(c * c for c in self.coords))

    def weighted_norm(self, weights: WeightSequence, r: float) -> float:
        """||Lambda_Q^r h|| = sqrt(sum h_k^2 q_k^{2r})."""
        return math.sqrt(
            sum(c * c * weights.q(k + 1) ** (2.0 * r) for k, c in enumerate(self.coords))
        )

    def power(self, alpha: MultiIndex) -> float:
        """h^alpha; zero when alpha touches a mode outside the support."""
        out = 1.0
        for k, a in alpha.entries:
            h = self.coords[k - 1] if k <= len(self.coords) else 0.0
            out *= h**a
        return out


def smallness_radius(h: DirectionH, weights: WeightSequence):
    """Largest s on the fixed grid with ||Lambda_Q^s h|| < 1, or None.

    Since q_k >= 1 the norm is non-decreasing in s, so the answer is the last
    grid point that still passes.
    """
    best = None
    for s in SMALLNESS_GRID:
        if h.weighted_norm(weights, s) < 1.0:
            best = s
    return best


class ChaosSeries:
    """Truncated formal chaos series: finitely many coefficients in a box."""

    __slots__ = ("space", "box", "_coeffs")

    def __init__(self, space: CoefficientSpace, box: TruncationBox, coeffs=None):
        self.space = space
        self.box = box
        self._coeffs: dict[MultiIndex, np.ndarray] = {}
        if coeffs:
            for alpha, vec in coeffs.items():
                self.set_coeff(alpha, vec)

    @classmethod
    def deterministic(cls, space, box, vec) -> "ChaosSeries":
        return cls(space, box, {MultiIndex.zero(): vec})

    @classmethod
    def basis(cls, space, box, alpha, vec=None) -> "ChaosSeries":
        """vec * xi_alpha (vec defaults to the all-ones vector)."""
        if vec is None:
            vec = np.ones(space.dim, dtype=space.dtype)
        return cls(space, box, {alpha: vec})

    def set_coeff(self, alpha: MultiIndex, vec):
        if not self.box.contains(alpha):
            raise BoxOverflowError(f"index {alpha} outside box {self.box}")
        vec = np.asarray(vec, dtype=self.space.dtype)
        if vec.shape == ():
            vec = np.full(self.space.dim, vec, dtype=self.space.dtype)
        if vec.shape != (self.space.dim,):
            raise ValueError(f"coefficient shape {vec.shape} != ({self.space.dim},)")
        if np.any(vec != 0):
            self._coeffs[alpha] = vec
        else:
            self._coeffs.pop(alpha, None)

    def coeff(self, alpha: MultiIndex):
        vec = self._coeffs.get(alpha)
        return self.space.zeros() if vec is None else vec

    def keys(self):
        """Nonzero indices in canonical graded order (deterministic reductions)."""
        return sorted(self._coeffs, key=MultiIndex.sort_key)

    def items(self):
        return [(alpha, self._coeffs[alpha]) for alpha in self.keys()]

    def __len__(self):
        return len(self._coeffs)

    def max_order(self) -> int:
        return max((a.order for a in self._coeffs), default=0)

    def scaled(self, factor) -> "ChaosSeries":
        out = ChaosSeries(self.space, self.box)
        for alpha, vec in self._coeffs.items():
            out.set_coeff(alpha, factor * vec)
        return out

    def rescaled(self, weights: WeightSequence, r: float) -> "ChaosSeries":
        """Coefficient-wise q^{r alpha} scaling."""
        out = ChaosSeries(self.space, self.box)
        for alpha, vec in self._coeffs.items():
            out.set_coeff(alpha, weights.power(alpha, r) * vec)
        return out

    def __add__(self, other: "ChaosSeries") -> "ChaosSeries":
        if self.space != other.space:
            raise ValueError("incompatible coefficient spaces")
        box = TruncationBox(
            max(self.box.order, other.box.order), max(self.box.modes, other.box.modes)
        )
        out = ChaosSeries(self.space, box)
        for alpha in set(self._coeffs) | set(other._coeffs):
            out.set_coeff(alpha, self.coeff(alpha) + other.coeff(alpha))
        return out

    def __sub__(self, other: "ChaosSeries") -> "ChaosSeries":
        return self + other.scaled(-1.0)

    def wick(self, other, out_box=None, on_overflow="raise"):
        return wick_product(self, other, out_box=out_box, on_overflow=on_overflow)


class UChaosSeries:
    """Noise-space valued series: coefficients indexed by (mode k, alpha)."""

    __slots__ = ("space", "box", "mode_bound", "_coeffs")

    def __init__(self, space, box, mode_bound, coeffs=None):
        if mode_bound < 1 or mode_bound > box.modes:
            raise ValueError("mode bound must lie in 1..box.modes")
        self.space = space
        self.box = box
        self.mode_bound = mode_bound
        self._coeffs: dict[tuple[int, MultiIndex], np.ndarray] = {}
        if coeffs:
            for key, vec in coeffs.items():
                self.set_coeff(key[0], key[1], vec)

    def set_coeff(self, k, alpha, vec):
        if not 1 <= k <= self.mode_bound:
            raise ValueError(f"mode {k} outside 1..{self.mode_bound}")
        if not self.box.contains(alpha):
            raise BoxOverflowError(f"index {alpha} outside box {self.box}")
        vec = np.asarray(vec, dtype=self.space.dtype)
        if vec.shape == ():
            vec = np.full(self.space.dim, vec, dtype=self.space.dtype)
        if np.any(vec != 0):
            self._coeffs[(k, alpha)] = vec
        else:
            self._coeffs.pop((k, alpha), None)

    def coeff(self, k, alpha):
        vec = self._coeffs.get((k, alpha))
        return self.space.zeros() if vec is None else vec

    def keys(self):
        return sorted(self._coeffs, key=lambda ka: (ka[0],) + ka[1].sort_key())

    def items(self):
        return [(key, self._coeffs[key]) for key in self.keys()]

    def __len__(self):
        return len(self._coeffs)


def wick_product(f: ChaosSeries, g: ChaosSeries, out_box=None, on_overflow="raise"):
    """Wick product of two chaos series.

    (f <> g)_alpha = sum over beta + gamma = alpha of
    sqrt(alpha! / (beta! gamma!)) f_beta g_gamma.  One factor may be
    vector-valued; the other must then be scalar.  Mass falling outside the
    target box is a reportable condition: on_overflow is "raise" (default),
    "extend" (grow the box to fit) or "truncate" (warn and drop).
    """
    if g.space.dim != 1 and f.space.dim == 1:
        f, g = g, f
    if g.space.dim != 1:
        raise ValueError("one Wick factor must be scalar-valued")
    if on_overflow not in ("raise", "extend", "truncate"):
        raise ValueError(f"unknown overflow policy {on_overflow!r}")

    modes = max(f.box.modes, g.box.modes)
    if out_box is None:
        out_box = TruncationBox(max(f.box.order, g.box.order), modes)
    if on_overflow == "extend":
        need = f.max_order() + g.max_order()
        if need > out_box.order:
            out_box = TruncationBox(need, max(out_box.modes, modes))

    acc: dict[MultiIndex, np.ndarray] = {}
    lost = []
    for beta, fb in f.items():
        bfac = beta.factorial()
        for gamma, gc in g.items():
            alpha = beta + gamma
            if alpha.order > out_box.order:
                lost.append(alpha.order)
                continue
            w = math.sqrt(alpha.factorial() / (bfac * gamma.factorial()))
            term = (w * gc[0]) * fb
            if alpha in acc:
                acc[alpha] = acc[alpha] + term
            else:
                acc[alpha] = term
    if lost:
        msg = (
            f"wick product lost {len(lost)} terms above order {out_box.order} "
            f"(max produced order {max(lost)})"
        )
        if on_overflow == "raise":
            raise BoxOverflowError(msg, lost)
        warnings.warn(msg, stacklevel=2)
    out = ChaosSeries(f.space, out_box)
    for alpha, vec in acc.items():
        out.set_coeff(alpha, vec)
    return out


def malliavin(f: ChaosSeries, mode_bound=None) -> UChaosSeries:
    """Lowering operator in coordinates: (Df)_{k,alpha} = sqrt(alpha_k + 1) f_{alpha+eps_k}."""
    K = f.box.modes if mode_bound is None else mode_bound
    out = UChaosSeries(f.space, f.box, K)
    for alpha, vec in f.items():
        for k, a in alpha.entries:
            if k > K:
                continue
            beta = alpha.sub_one(k)
            out.set_coeff(k, beta, out.coeff(k, beta) + math.sqrt(a) * vec)
    return out


def skorokhod(f: UChaosSeries, on_overflow="raise") -> ChaosSeries:
    """Raising operator in coordinates: (delta f)_alpha = sum_k sqrt(alpha_k) f_{k,alpha-eps_k}.

    Raises the order by one; contributions leaving the box are reported, never
    silently dropped.
    """
    if on_overflow not in ("raise", "extend", "truncate"):
        raise ValueError(f"unknown overflow policy {on_overflow!r}")
    box = f.box
    need = max((alpha.order + 1 for (_, alpha) in f.keys()), default=0)
    if need > box.order:
        if on_overflow == "raise":
            raise BoxOverflowError(
                f"skorokhod output reaches order {need} > box order {box.order}"
            )
        if on_overflow == "extend":
            box = TruncationBox(need, box.modes)

    out = ChaosSeries(f.space, box)
    lost = 0
    for (k, alpha), vec in f.items():
        target = alpha + MultiIndex.unit(k)
        if target.order > box.order:
            lost += 1
            continue
        w = math.sqrt(target.multiplicity(k))
        out.set_coeff(target, out.coeff(target) + w * vec)
    if lost:
        warnings.warn(f"skorokhod truncated {lost} contributions", stacklevel=2)
    return out


def number_operator(f: ChaosSeries) -> ChaosSeries:
    """delta(D f): acts diagonally with eigenvalue |alpha| on each coefficient."""
    return skorokhod(malliavin(f), on_overflow="extend")


def weighted_norm_sq(eta: ChaosSeries, weights: WeightSequence, r: float) -> float:
    """sum_alpha q^{2 r alpha} ||eta_alpha||_X^2 / |alpha|!."""
    total = 0.0
    for alpha, vec in eta.items():
        total += (
            weights.power(alpha, 2.0 * r)
            * eta.space.norm_sq(vec)
            / math.factorial(alpha.order)
        )
    return total


def order_energy(eta: ChaosSeries):
    """e_n = sum over |alpha| = n of ||eta_alpha||_X^2, n = 0..box order."""
    e = np.zeros(eta.box.order + 1)
    for alpha, vec in eta.items():
        e[alpha.order] += eta.space.norm_sq(vec)
    return e


def norm_sq_by_order(eta: ChaosSeries, weights: WeightSequence, r: float) -> float:
    """Weighted norm through the order-graded decomposition.

    Groups the series by order n; the n-th symmetric-tensor component has
    squared weight ||q^{r .} E_alpha||^2 = q^{2 r alpha} n! alpha!, and the
    graded norm divides by (n!)^2.  Equals weighted_norm_sq up to round-off.
    """
    e = order_energy(eta.rescaled(weights, r))
    total = 0.0
    for n, en in enumerate(e):
        fn = math.factorial(n)
        total += en * fn / fn**2
    return total


def dual_pairing(eta: ChaosSeries, zeta: ChaosSeries):
    """<<eta, zeta>> = sum_alpha eta_alpha zeta_alpha for scalar zeta."""
    if zeta.space.dim != 1:
        raise ValueError("the dual factor must be scalar-valued")
    out = eta.space.zeros()
    for alpha in eta.keys():
        z = zeta.coeff(alpha)[0]
        if z != 0:
            out = out + eta.coeff(alpha) * z
    return out


def dual_norm_sq(zeta: ChaosSeries, weights: WeightSequence, r: float) -> float:
    """Dual-space summability surrogate: sum_alpha q^{-2 r alpha} |zeta_alpha|^2."""
    total = 0.0
    for alpha, vec in zeta.items():
        total += weights.power(alpha, -2.0 * r) * zeta.space.norm_sq(vec)
    return total


def stoch_exp(h: DirectionH, box: TruncationBox) -> ChaosSeries:
    """Stochastic exponential as a scalar chaos series: coefficients h^alpha / sqrt(alpha!)."""
    space = CoefficientSpace.scalar()
    out = ChaosSeries(space, box)
    for alpha in enumerate_indices(box):
        val = h.power(alpha)
        if val != 0.0:
            out.set_coeff(alpha, np.array([val / math.sqrt(alpha.factorial())]))
    return out


def series_csv_rows(eta: ChaosSeries):
    """CSV dump rows (alpha, component_index, re, im), canonical order."""
    rows = []
    for alpha, vec in eta.items():
        for j in range(eta.space.dim):
            v = complex(vec[j])
            rows.append((alpha.to_string(), j, v.real, v.imag))
    return rows
