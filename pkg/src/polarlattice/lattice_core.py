"""
Lattices, binary partition chains, theta series and discrete Gaussians.

Two partition chains are supported:

* the one-dimensional chain ``Z / 2Z / 4Z / ... / 2^r Z`` with coset
  representatives ``g_l = 2^(l-1)``;
* the two-dimensional chain ``Z^2 / RZ^2 / 2Z^2 / 2RZ^2 / 4Z^2`` with
  ``R = [[1, 1], [1, -1]]`` and representatives ``(1,0), (1,1), (2,0), (2,2)``.

Level ``l`` of either chain is the lattice generated by ``B0 @ R^l`` (rows are
generator vectors), so every lattice here is either a scaled cubic lattice or
a scaled checkerboard lattice.  Fundamental regions are half-open
``(-V/2, V/2]`` per coordinate for cubic lattices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import mpmath
import numpy as np
from scipy.special import logsumexp

ROTATION = np.array([[1, 1], [1, -1]], dtype=np.int64)

# relative tail below which theta-series shells are dropped
THETA_TAIL = 1e-15
# absolute tail for alias (periodization) sums
ALIAS_TAIL = 1e-12
# number of standard deviations covering ALIAS_TAIL for a Gaussian
_ALIAS_SIGMAS = math.sqrt(-2.0 * math.log(ALIAS_TAIL)) + 1.0


def _check_positive(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


@dataclass(frozen=True, eq=False)
class Lattice:
    """
    Full-rank lattice given by a generator matrix whose rows span it.

    Parameters
    ----------
    basis : array_like, shape (n, n)
        Integer-valued generator matrix (rows are basis vectors).
    name : str, optional
        Human-readable label used in reports.
    """

    basis: np.ndarray
    name: str = ""

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if b.shape[0] != b.shape[1]:
            raise ValueError("basis must be square")
        if abs(np.linalg.det(b)) < 1e-12:
            raise ValueError("basis must be full rank")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    def __eq__(self, other):
        return isinstance(other, Lattice) and np.array_equal(self.basis, other.basis)

    def __hash__(self):
        return hash(self.basis.tobytes())

    def __repr__(self):
        return f"Lattice({self.name or self.basis.tolist()})"

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]

    @cached_property
    def volume(self) -> float:
        det = abs(np.linalg.det(self.basis))
        # integer bases have integer volume; drop the rounding noise of det
        if np.array_equal(self.basis, np.round(self.basis)):
            return float(round(det))
        return float(det)

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.basis)

    @cached_property
    def dual(self) -> "Lattice":
        """Dual lattice, generated by the rows of ``inv(B).T``."""
        return Lattice(self.inverse.T, name=f"dual({self.name})")

    @cached_property
    def min_basis_norm(self) -> float:
        # lower bound on the distance between lattice shells used for truncation
        sv = np.linalg.svd(self.basis, compute_uv=False)
        return float(sv.min())

    @cached_property
    def max_basis_norm(self) -> float:
        return float(np.linalg.svd(self.basis, compute_uv=False).max())

    @cached_property
    def square_period(self) -> int:
        """Smallest integer ``L`` with ``L * Z^n`` contained in the lattice."""
        for L in range(1, 1025):
            coeffs = L * self.inverse
            if np.allclose(coeffs, np.round(coeffs), atol=1e-9):
                return L
        raise ValueError("lattice has no small cubic sublattice")

    @property
    def is_cubic(self) -> bool:
        b = self.basis
        return bool(np.allclose(b, np.diag(np.diag(b))) and np.allclose(np.abs(np.diag(b)), abs(b[0, 0])))

    def scaled(self, factor: float) -> "Lattice":
        return Lattice(self.basis * factor, name=f"{factor:g}*{self.name}")

    def contains(self, x, atol: float = 1e-9) -> np.ndarray:
        """Elementwise membership test for points of shape (..., n)."""
        x = np.asarray(x, dtype=float)
        c = x @ self.inverse
        return np.all(np.abs(c - np.round(c)) < atol, axis=-1)

    def points(self, radius: int) -> np.ndarray:
        """Lattice points with basis coefficients in ``[-radius, radius]^n``."""
        k = np.arange(-radius, radius + 1)
        grids = np.meshgrid(*([k] * self.dimension), indexing="ij")
        coeffs = np.stack([g.ravel() for g in grids], axis=-1)
        return coeffs @ self.basis

    def alias_radius(self, sigma: float) -> int:
        """Coefficient radius whose alias box captures all but ALIAS_TAIL mass."""
        return int(math.ceil(_ALIAS_SIGMAS * sigma / self.min_basis_norm)) + 1

    def reduce(self, x) -> np.ndarray:
        """
        Map points into a bounded neighbourhood of the origin.

        Uses rounding in basis coordinates, so the result lies in the
        parallelepiped ``B [-1/2, 1/2)^n``; cubic lattices therefore reduce into
        ``(-V/2, V/2]`` per coordinate via :func:`mod_region` instead.
        """
        x = np.asarray(x, dtype=float)
        if self.is_cubic:
            return mod_region(x, abs(self.basis[0, 0]))
        c = x @ self.inverse
        return x - np.round(c) @ self.basis

    def periodic_logpdf(self, t, sigma: float) -> np.ndarray:
        """
        Log of the periodized Gaussian density ``f_{sigma, Lambda}(t)``.

        Parameters
        ----------
        t : array_like, shape (..., n)
            Evaluation points (any position; reduced internally).
        sigma : float
            Per-dimension noise standard deviation.

        Returns
        -------
        ndarray, shape (...)
            ``log sum_lambda N(t - lambda; 0, sigma^2 I)`` with the alias sum
            truncated at an absolute tail of ``ALIAS_TAIL``.
        """
        sigma = _check_positive("sigma", sigma)
        t = np.asarray(t, dtype=float)
        n = self.dimension
        if t.shape[-1] != n:
            raise ValueError(f"last axis must have length {n}")
        t = self.reduce(t)
        if sigma > self.max_basis_norm:
            return _dual_periodic_logpdf(self, t, sigma)
        aliases = self.points(self.alias_radius(sigma))
        d2 = np.zeros(t.shape[:-1] + (len(aliases),))
        for j in range(n):
            d2 += (t[..., j, None] - aliases[:, j]) ** 2
        return logsumexp(-d2 / (2 * sigma * sigma), axis=-1) - 0.5 * n * math.log(2 * math.pi * sigma * sigma)


def _dual_periodic_logpdf(lat: Lattice, t, sigma: float) -> np.ndarray:
    # Poisson summation: f(t) = (1/V) sum_{d in dual} exp(-2 pi^2 sigma^2 |d|^2) cos(2 pi <d, t>)
    dual = lat.dual
    reach = math.sqrt(-math.log(ALIAS_TAIL) / (2 * math.pi**2 * sigma**2))
    d = dual.points(int(math.ceil(reach / dual.min_basis_norm)) + 1)
    w = np.exp(-2 * math.pi**2 * sigma**2 * np.sum(d**2, axis=-1))
    f = np.cos(2 * math.pi * (t @ d.T)) @ w / lat.volume
    return np.log(np.maximum(f, np.finfo(float).tiny))


def integer_lattice(n: int = 1, scale: float = 1.0) -> Lattice:
    """The cubic lattice ``scale * Z^n``."""
    return Lattice(scale * np.eye(n), name=f"{scale:g}Z^{n}" if n > 1 else f"{scale:g}Z")


def theta_series(lattice: Lattice, tau: float) -> float:
    """
    Theta series ``sum_lambda exp(-pi tau ||lambda||^2)``.

    Shells of growing coefficient radius are added until the last shell
    contributes less than ``THETA_TAIL`` of the running sum.

    Parameters
    ----------
    lattice : Lattice
    tau : float
        Positive argument.

    Returns
    -------
    float
    """
    tau = _check_positive("tau", tau)
    return float(_theta_shells(lattice, tau, math.exp, math.fsum, THETA_TAIL, math.pi))


def _theta_shells(lattice, tau, exp, fsum, tail, pi):
    n = lattice.dimension
    total = exp(0.0)
    radius = 0
    while True:
        radius += 1
        k = np.arange(-radius, radius + 1)
        grids = np.meshgrid(*([k] * n), indexing="ij")
        coeffs = np.stack([g.ravel() for g in grids], axis=-1)
        shell = coeffs[np.max(np.abs(coeffs), axis=1) == radius]
        norms = np.sum((shell @ lattice.basis) ** 2, axis=1)
        part = fsum([exp(-pi * tau * float(v)) for v in norms])
        total = total + part
        # shells decay at least geometrically once past the Gaussian bulk
        bulk = radius * lattice.min_basis_norm > 1.0 / math.sqrt(2 * math.pi * tau)
        if bulk and part <= tail * total:
            return total
        if radius > 100000:
            raise RuntimeError("theta series failed to converge")


@dataclass(frozen=True)
class FlatnessResult:
    """Flatness factor value with a flag telling whether it is trustworthy."""

    value: float
    valid: bool


def flatness_factor(lattice: Lattice, sigma: float, with_flag: bool = False):
    """
    Flatness factor ``(gamma/2pi)^(n/2) Theta(1/(2 pi sigma^2)) - 1``.

    ``gamma = V^(2/n) / sigma^2`` is the volume-to-noise ratio.  The theta
    series is summed directly in extended precision so the subtraction of 1
    does not cancel all significant digits when the factor is tiny.

    Parameters
    ----------
    lattice : Lattice
    sigma : float
        Positive standard deviation.
    with_flag : bool
        Return a :class:`FlatnessResult` instead of a bare float.

    Returns
    -------
    float or FlatnessResult
        For ``sigma -> 0`` the factor diverges; the largest finite float is
        returned with ``valid=False``.
    """
    sigma = _check_positive("sigma", sigma)
    n = lattice.dimension
    var = sigma**2
    gamma = lattice.volume ** (2.0 / n) / var if var > 0 else math.inf
    # leading dual term bounds how many digits the result needs
    dual_min = 1.0 / lattice.min_basis_norm
    digits = 30 + int(2 * math.pi**2 * sigma**2 * dual_min**2 / math.log(10))
    valid = True
    if not np.isfinite(gamma) or gamma > 1e300:
        result = FlatnessResult(float(np.finfo(float).max), False)
        return result if with_flag else result.value
    if digits > 400:
        # value is far below double precision resolution anyway
        value = flatness_factor_dual(lattice, sigma)
    else:
        with mpmath.workdps(digits):
            tau = mpmath.mpf(1) / (2 * mpmath.pi * mpmath.mpf(sigma) ** 2)
            theta = _theta_shells(lattice, tau, mpmath.exp, mpmath.fsum, mpmath.mpf(10) ** (-digits), mpmath.pi)
            vol = mpmath.mpf(round(lattice.volume)) if abs(lattice.volume - round(lattice.volume)) < 1e-9 else mpmath.mpf(lattice.volume)
            gamma_mp = vol ** (mpmath.mpf(2) / n) / mpmath.mpf(sigma) ** 2
            value = float((gamma_mp / (2 * mpmath.pi)) ** (mpmath.mpf(n) / 2) * theta - 1)
    if not np.isfinite(value):
        value, valid = float(np.finfo(float).max), False
    result = FlatnessResult(max(value, 0.0), valid)
    return result if with_flag else result.value


def flatness_factor_dual(lattice: Lattice, sigma: float) -> float:
    """
    Flatness factor from the Poisson-dual series ``Theta_dual(2 pi sigma^2) - 1``.

    Independent of :func:`flatness_factor`; converges fast for large sigma.
    """
    sigma = _check_positive("sigma", sigma)
    dual = lattice.dual
    tau = 2 * math.pi * sigma**2
    n = dual.dimension
    terms = []
    radius = 0
    while True:
        radius += 1
        k = np.arange(-radius, radius + 1)
        grids = np.meshgrid(*([k] * n), indexing="ij")
        coeffs = np.stack([g.ravel() for g in grids], axis=-1)
        shell = coeffs[np.max(np.abs(coeffs), axis=1) == radius]
        part = math.fsum(np.exp(-math.pi * tau * np.sum((shell @ dual.basis) ** 2, axis=1)))
        terms.append(part)
        total = math.fsum(terms)
        if part <= THETA_TAIL * total or part == 0.0:
            return total


def mod_region(x, modulus) -> np.ndarray:
    """
    Reduce each coordinate into the half-open interval ``(-m/2, m/2]``.

    Parameters
    ----------
    x : array_like
        Real coordinates.
    modulus : float
        Period ``m`` of the cubic lattice ``m Z^n``.

    Returns
    -------
    ndarray
        Same shape as ``x``.

    Examples
    --------
    >>> mod_region(3.0, 4)
    array(-1.)
    >>> mod_region(-2.0, 4)
    array(2.)
    """
    m = _check_positive("modulus", modulus)
    x = np.asarray(x, dtype=float)
    return x - m * np.ceil(x / m - 0.5)


@dataclass(frozen=True, eq=False)
class PartitionChain:
    """
    Binary lattice partition chain ``Lambda_0 / Lambda_1 / ... / Lambda_r``.

    Attributes
    ----------
    n : int
        Dimension (1 or 2).
    r : int
        Number of binary partition levels.
    coset_reps : ndarray, shape (r, n)
        ``coset_reps[l-1]`` lies in ``Lambda_{l-1}`` but not in ``Lambda_l``.
    """

    n: int
    r: int
    coset_reps: np.ndarray = field(repr=False)
    step: np.ndarray = field(repr=False)

    @classmethod
    def one_dimensional(cls, r: int) -> "PartitionChain":
        """``Z / 2Z / ... / 2^r Z`` with representatives ``2^(l-1)``."""
        if r < 1:
            raise ValueError("r must be at least 1")
        reps = np.array([[2.0 ** (l - 1)] for l in range(1, r + 1)])
        return cls(1, int(r), reps, np.array([[2.0]]))

    @classmethod
    def two_dimensional(cls, r: int = 4) -> "PartitionChain":
        """``Z^2 / RZ^2 / 2Z^2 / ...`` with representatives ``(1,0) R^(l-1)``."""
        if r < 1:
            raise ValueError("r must be at least 1")
        reps = []
        g = np.array([1, 0], dtype=np.int64)
        for _ in range(r):
            reps.append(g.astype(float))
            g = g @ ROTATION
        return cls(2, int(r), np.array(reps), ROTATION.astype(float))

    @classmethod
    def from_name(cls, name: str, r: int | None = None) -> "PartitionChain":
        if name == "1d":
            return cls.one_dimensional(2 if r is None else r)
        if name == "2d":
            return cls.two_dimensional(4 if r is None else r)
        raise ValueError(f"unknown chain {name!r}; valid values are '1d', '2d'")

    @property
    def name(self) -> str:
        return "1d" if self.n == 1 else "2d"

    def __eq__(self, other):
        return isinstance(other, PartitionChain) and (self.n, self.r) == (other.n, other.r)

    def __hash__(self):
        return hash((self.n, self.r))

    def lattice(self, level: int) -> Lattice:
        """``Lambda_level`` for ``0 <= level <= r`` (also valid beyond r)."""
        if level < 0:
            raise ValueError("level must be nonnegative")
        basis = np.linalg.matrix_power(self.step, level) if self.n == 2 else np.array([[2.0**level]])
        return Lattice(basis, name=f"{self.name}-level{level}")

    @property
    def top(self) -> Lattice:
        return self.lattice(0)

    @property
    def bottom(self) -> Lattice:
        return self.lattice(self.r)

    @property
    def bottom_volume(self) -> float:
        """Volume of the bottom lattice (``2^r`` for both chains)."""
        return self.bottom.volume

    def offset(self, bits) -> np.ndarray:
        """
        Coset offset ``sum_l bits[..., l] * g_l``.

        Parameters
        ----------
        bits : array_like, shape (..., k)
            Labels of levels ``1..k`` (``k <= r``).

        Returns
        -------
        ndarray, shape (..., n)
        """
        bits = np.asarray(bits)
        k = bits.shape[-1]
        return bits.astype(float) @ self.coset_reps[:k]

    def labels(self, x, levels: int | None = None) -> np.ndarray:
        """
        Coset labels of points of the top lattice.

        Parameters
        ----------
        x : array_like, shape (..., n)
            Points of ``Lambda_0``.
        levels : int, optional
            Number of labels (default ``r``).

        Returns
        -------
        ndarray of uint8, shape (..., levels)
            ``x - offset(labels)`` lies in ``Lambda_levels``.
        """
        x = np.asarray(x, dtype=float)
        k = self.r if levels is None else int(levels)
        if k > self.r:
            raise ValueError(f"at most {self.r} labels exist")
        out = np.zeros(x.shape[:-1] + (k,), dtype=np.uint8)
        rest = x.copy()
        for level in range(1, k + 1):
            bit = ~self.lattice(level).contains(rest)
            out[..., level - 1] = bit
            rest = rest - bit[..., None] * self.coset_reps[level - 1]
        return out

    def level_box(self, level: int) -> np.ndarray:
        """
        Side lengths of an axis-aligned box that is a fundamental region.

        Cubic levels use the square; checkerboard levels ``s * RZ^2`` use the
        ``2s x s`` rectangle.
        """
        lat = self.lattice(level)
        if self.n == 1 or lat.is_cubic:
            return np.full(self.n, lat.volume ** (1.0 / self.n))
        s = 2.0 ** ((level - 1) / 2)
        return np.array([2 * s, s])

    def product_cosets(self, level: int):
        """
        Write ``Lambda_level`` as a union of cosets of a cubic lattice.

        Returns
        -------
        period : float
            Side of the cubic sublattice ``period * Z^n``.
        shifts : ndarray, shape (k, n)
            Coset shifts.
        """
        lat = self.lattice(level)
        if self.n == 1 or lat.is_cubic:
            return lat.volume ** (1.0 / self.n), np.zeros((1, self.n))
        s = 2.0 ** ((level - 1) / 2)
        return 2 * s, np.array([[0.0, 0.0], [s, s]])

    def reduce(self, x, level: int) -> np.ndarray:
        """Reduce points of shape (..., n) into the level box centred at 0."""
        x = np.asarray(x, dtype=float)
        lat = self.lattice(level)
        if self.n == 1 or lat.is_cubic:
            return mod_region(x, self.level_box(level)[0])
        s = 2.0 ** ((level - 1) / 2)
        m = np.ceil(x[..., 1] / s - 0.5)
        out = x - m[..., None] * s
        out[..., 0] = mod_region(out[..., 0], 2 * s)
        return out

    def nearest_bottom(self, x) -> np.ndarray:
        """Closest point of the bottom lattice, coordinatewise rounding."""
        x = np.asarray(x, dtype=float)
        lat = self.bottom
        if self.n == 1 or lat.is_cubic:
            m = self.level_box(self.r)[0]
            return m * np.round(x / m)
        # scaled checkerboard: round, then fix parity on the worst coordinate
        s = 2.0 ** ((self.r - 1) / 2)
        u = x / s
        f = np.round(u)
        odd = (np.sum(f, axis=-1) % 2) != 0
        err = u - f
        worst = np.argmax(np.abs(err), axis=-1)
        idx = np.nonzero(odd)
        f[idx + (worst[idx],)] += np.where(err[idx + (worst[idx],)] >= 0, 1.0, -1.0)
        return f * s

    def to_dict(self) -> dict:
        return {
            "chain": self.name,
            "n": self.n,
            "r": self.r,
            "coset_reps": self.coset_reps.tolist(),
            "bottom_volume": self.bottom_volume,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionChain":
        chain = cls.from_name(d["chain"], int(d["r"]))
        if "n" in d and int(d["n"]) != chain.n:
            raise ValueError("chain dimension mismatch")
        if "coset_reps" in d and not np.allclose(d["coset_reps"], chain.coset_reps):
            raise ValueError("coset representatives do not match the named chain")
        return chain

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PartitionChain":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DiscreteGaussianSpec:
    """
    Discrete Gaussian ``D_{Z, sigma_s, c}`` labelled by ``r`` binary levels.

    Attributes
    ----------
    sigma_s : float
        Shaping standard deviation.
    r : int
        Number of labelled levels (natural binary labelling mod ``2^r``).
    support_radius : int
        Retained points are the integers in ``(c0 - R, c0 + R]`` where ``c0`` is
        the centre rounded to an integer; ``R = 2^(r-1)`` keeps one point per
        coset of ``2^r Z``.
    center : float
        Centre ``c`` of the Gaussian.
    mass_tol : float
        Largest probability mass the truncation may discard.
    """

    sigma_s: float
    r: int
    support_radius: int
    center: float = 0.0
    mass_tol: float = 1e-12

    def __post_init__(self):
        _check_positive("sigma_s", self.sigma_s)
        if self.r < 1:
            raise ValueError("r must be at least 1")
        if self.support_radius < 1:
            raise ValueError("support_radius must be at least 1")

    def to_dict(self) -> dict:
        return {
            "sigma_s": self.sigma_s,
            "r": self.r,
            "support_radius": self.support_radius,
            "center": self.center,
            "mass_tol": self.mass_tol,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteGaussianSpec":
        return cls(float(d["sigma_s"]), int(d["r"]), int(d["support_radius"]),
                   float(d.get("center", 0.0)), float(d.get("mass_tol", 1e-12)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DiscreteGaussianSpec":
        return cls.from_dict(json.loads(text))

    # -- distribution helpers ------------------------------------------------

    def _wide_support(self, center: float):
        half = int(math.ceil(40 * self.sigma_s)) + 2**self.r + 2
        c0 = int(round(center))
        pts = np.arange(c0 - half, c0 + half + 1)
        logw = -((pts - center) ** 2) / (2 * self.sigma_s**2)
        return pts, logw - logsumexp(logw)

    def discarded_mass(self, center: float | None = None) -> float:
        """Probability of the exact discrete Gaussian outside the support."""
        c = self.center if center is None else center
        pts, logp = self._wide_support(c)
        c0 = int(round(c))
        keep = (pts > c0 - self.support_radius) & (pts <= c0 + self.support_radius)
        return float(np.exp(logsumexp(logp[~keep]))) if np.any(~keep) else 0.0

    def required_radius(self, center: float | None = None) -> int:
        """Smallest support radius whose discarded mass is below ``mass_tol``."""
        c = self.center if center is None else center
        pts, logp = self._wide_support(c)
        c0 = int(round(c))
        for radius in range(1, len(pts)):
            out = (pts <= c0 - radius) | (pts > c0 + radius)
            if not np.any(out) or logsumexp(logp[out]) < math.log(self.mass_tol):
                return radius
        return len(pts)

    def power(self, center: float | None = None) -> float:
        """Second moment ``E[lambda^2]`` of the untruncated distribution."""
        c = self.center if center is None else center
        pts, logp = self._wide_support(c)
        return float(np.sum(np.exp(logp) * pts.astype(float) ** 2))

    def coset_log_probs(self, level: int, center: float | None = None) -> np.ndarray:
        """
        Log-probabilities of the residues ``lambda mod 2^level``.

        Returns
        -------
        ndarray, shape (2^level,)
            Entry ``c`` is ``log P(lambda = c mod 2^level)``; equivalently the
            probability of the label prefix ``x_1..x_level`` whose natural
            binary value is ``c``.
        """
        c = self.center if center is None else center
        pts, logp = self._wide_support(c)
        m = 2**level
        res = np.mod(pts, m)
        out = np.full(m, -np.inf)
        for k in range(m):
            sel = res == k
            if np.any(sel):
                out[k] = logsumexp(logp[sel])
        return out

    def level_conditionals(self, center: float | None = None) -> list[np.ndarray]:
        """
        Per-level conditional bit probabilities.

        Returns
        -------
        list of ndarray
            Element ``l-1`` has shape (2^(l-1),); entry ``p`` is
            ``P(X_l = 1 | X_{1:l-1} = p)`` with the prefix given by its natural
            binary value.  Prefixes of zero probability get 0.5.
        """
        out = []
        for level in range(1, self.r + 1):
            joint = self.coset_log_probs(level, center)
            half = 2 ** (level - 1)
            l0, l1 = joint[:half], joint[half:]
            with np.errstate(invalid="ignore"):
                p1 = np.exp(l1 - np.logaddexp(l0, l1))
            out.append(np.where(np.isfinite(l0) | np.isfinite(l1), p1, 0.5))
        return out


def discrete_gaussian_pmf(spec: DiscreteGaussianSpec, center: float | None = None):
    """
    Truncated discrete Gaussian over the retained integer points.

    Parameters
    ----------
    spec : DiscreteGaussianSpec
    center : float, optional
        Overrides ``spec.center``.

    Returns
    -------
    points : ndarray of int
    pmf : ndarray
        Probabilities proportional to ``exp(-(lambda - c)^2 / (2 sigma_s^2))``,
        renormalized over the retained points.

    Raises
    ------
    ValueError
        If the discarded mass reaches ``spec.mass_tol``; the message reports
        the support radius that would be required.
    """
    c = spec.center if center is None else float(center)
    lost = spec.discarded_mass(c)
    if lost >= spec.mass_tol:
        need = spec.required_radius(c)
        raise ValueError(
            f"truncation discards mass {lost:.3g} >= {spec.mass_tol:g}; "
            f"support_radius must be at least {need}"
        )
    c0 = int(round(c))
    pts = np.arange(c0 - spec.support_radius + 1, c0 + spec.support_radius + 1)
    logw = -((pts - c) ** 2) / (2 * spec.sigma_s**2)
    pmf = np.exp(logw - logsumexp(logw))
    return pts, pmf / pmf.sum()


def coset_log_masses(chain: PartitionChain, shaping: DiscreteGaussianSpec, level: int) -> np.ndarray:
    """
    Log-probabilities of the label prefixes under the product discrete Gaussian.

    The shaping distribution on ``Z^n`` is ``D_{Z, sigma_s, c}`` in every
    coordinate.  Entry ``p`` is ``log P(x_1..x_level = bits of p)`` with
    level 1 as the least significant bit.

    Returns
    -------
    ndarray, shape (2^level,)
    """
    if not 0 <= level <= chain.r:
        raise ValueError(f"level must be in 0..{chain.r}")
    if chain.n == 1:
        return shaping.coset_log_probs(level)
    labels = (np.arange(2**level)[:, None] >> np.arange(level)) & 1
    c = np.full(chain.n, shaping.center)
    logm = chain.lattice(level).periodic_logpdf(chain.offset(labels) - c, shaping.sigma_s)
    return logm - logsumexp(logm)
