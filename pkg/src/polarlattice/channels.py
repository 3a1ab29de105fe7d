"""
Binary-input channel models for the partition levels.

A :class:`DiscreteBMC` is a finite table of output likelihood pairs and is what
the polar construction consumes.  Continuous level channels (the symmetric
mod-lattice channel and the symmetrized shaping channel) are turned into such
tables by :func:`quantize_channel`: outputs are first integrated exactly over a
fine grid of cells, then merged by likelihood ratio down to ``mu`` symbols.
Every step only merges outputs, so the quantized channel is degraded with
respect to the continuous one.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy.optimize import linprog
from scipy.special import log_ndtr, logsumexp, xlogy

from .lattice_core import (
    DiscreteGaussianSpec,
    PartitionChain,
    _ALIAS_SIGMAS,
    _check_positive,
)

LOG2 = math.log(2.0)

# fixed prebinning grid on |LLR| (independent of mu, so merges nest across mu)
_PREBIN_TRIGGER = 8192
_PREBIN_PER_SIDE = 2048
_PREBIN_MAX_LLR = 64.0


class DiscreteBMC:
    """
    Binary-input channel with a finite output alphabet.

    Parameters
    ----------
    p0, p1 : array_like
        ``p0[y] = W(y|0)`` and ``p1[y] = W(y|1)``.
    validate : bool
        Check normalization and drop outputs with ``p0 = p1 = 0``.
    """

    __slots__ = ("p0", "p1")

    def __init__(self, p0, p1, validate: bool = True):
        p0 = np.asarray(p0, dtype=float).ravel()
        p1 = np.asarray(p1, dtype=float).ravel()
        if p0.shape != p1.shape:
            raise ValueError("p0 and p1 must have the same length")
        if validate:
            if np.any(p0 < 0) or np.any(p1 < 0) or not (np.all(np.isfinite(p0)) and np.all(np.isfinite(p1))):
                raise ValueError("likelihoods must be finite and nonnegative")
            keep = (p0 > 0) | (p1 > 0)
            p0, p1 = p0[keep], p1[keep]
            if abs(p0.sum() - 1) > 1e-9 or abs(p1.sum() - 1) > 1e-9:
                raise ValueError(f"likelihoods must sum to 1 (got {p0.sum():.12g}, {p1.sum():.12g})")
        self.p0 = p0
        self.p1 = p1

    @classmethod
    def bsc(cls, p: float) -> "DiscreteBMC":
        return cls([1 - p, p], [p, 1 - p])

    @classmethod
    def bec(cls, eps: float) -> "DiscreteBMC":
        return cls([1 - eps, 0.0, eps], [0.0, 1 - eps, eps])

    @property
    def size(self) -> int:
        return len(self.p0)

    @property
    def outputs(self) -> list[tuple[float, float]]:
        return list(zip(self.p0.tolist(), self.p1.tolist()))

    def bhattacharyya(self) -> float:
        """``Z = sum_y sqrt(W(y|0) W(y|1))``."""
        return float(min(1.0, np.sum(np.sqrt(self.p0 * self.p1))))

    def error_probability(self) -> float:
        """MAP bit error probability under a uniform input (ties count half)."""
        return float(min(0.5, 0.5 * np.sum(np.minimum(self.p0, self.p1))))

    def capacity(self) -> float:
        """Mutual information in bits under a uniform input."""
        return float(np.sum(_output_info(self.p0, self.p1)))

    def llr(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.p0) - np.log(self.p1)

    def to_dict(self) -> dict:
        return {"p0": self.p0.tolist(), "p1": self.p1.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteBMC":
        return cls(d["p0"], d["p1"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DiscreteBMC":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return f"DiscreteBMC(size={self.size}, Z={self.bhattacharyya():.4g}, I={self.capacity():.4g})"


def _output_info(p0, p1):
    # per-output contribution to I(X;Y) with a uniform input, in bits
    s = p0 + p1
    return 0.5 * (xlogy(p0, 2 * p0) - xlogy(p0, s) + xlogy(p1, 2 * p1) - xlogy(p1, s)) / LOG2


# -- degrading merge -----------------------------------------------------------


def _group_identical(p0, p1):
    with np.errstate(divide="ignore", invalid="ignore"):
        llr = np.log(p0) - np.log(p1)
    key = np.where(np.isfinite(llr), np.round(llr, 10), np.sign(llr) * 1e300)
    uniq, inv = np.unique(key, return_inverse=True)
    if len(uniq) == len(p0):
        return p0, p1
    return np.bincount(inv, p0, len(uniq)), np.bincount(inv, p1, len(uniq))


def _prebin(p0, p1):
    # merge outputs whose |LLR| falls in the same fixed-width bin
    with np.errstate(divide="ignore", invalid="ignore"):
        llr = np.log(p0) - np.log(p1)
    step = _PREBIN_MAX_LLR / _PREBIN_PER_SIDE
    mag = np.floor(np.minimum(np.abs(llr), _PREBIN_MAX_LLR + step) / step)
    mag = np.where(np.isinf(llr), _PREBIN_PER_SIDE + 2, mag)
    key = np.where(llr >= 0, mag, -mag - 1).astype(np.int64)
    uniq, inv = np.unique(key, return_inverse=True)
    return np.bincount(inv, p0, len(uniq)), np.bincount(inv, p1, len(uniq))


@njit(cache=True)
def _pair_loss(a0, a1, b0, b1):
    # capacity lost (in nats, up to the factor 1/2) by merging two outputs
    def term(p0, p1):
        s = p0 + p1
        out = 0.0
        if p0 > 0:
            out += p0 * math.log(2 * p0 / s)
        if p1 > 0:
            out += p1 * math.log(2 * p1 / s)
        return out

    return term(a0, a1) + term(b0, b1) - term(a0 + b0, a1 + b1)


@njit(cache=True)
def _heap_push(hc, hi, hv, size, c, i, v):
    k = size
    hc[k] = c
    hi[k] = i
    hv[k] = v
    while k > 0:
        parent = (k - 1) // 2
        if hc[parent] < hc[k] or (hc[parent] == hc[k] and hi[parent] <= hi[k]):
            break
        hc[parent], hc[k] = hc[k], hc[parent]
        hi[parent], hi[k] = hi[k], hi[parent]
        hv[parent], hv[k] = hv[k], hv[parent]
        k = parent
    return size + 1


@njit(cache=True)
def _heap_pop(hc, hi, hv, size):
    c, i, v = hc[0], hi[0], hv[0]
    size -= 1
    hc[0], hi[0], hv[0] = hc[size], hi[size], hv[size]
    k = 0
    while True:
        left = 2 * k + 1
        if left >= size:
            break
        best = left
        right = left + 1
        if right < size and (hc[right] < hc[left] or (hc[right] == hc[left] and hi[right] < hi[left])):
            best = right
        if hc[k] < hc[best] or (hc[k] == hc[best] and hi[k] <= hi[best]):
            break
        hc[best], hc[k] = hc[k], hc[best]
        hi[best], hi[k] = hi[k], hi[best]
        hv[best], hv[k] = hv[k], hv[best]
        k = best
    return c, i, v, size


@njit(cache=True)
def _greedy_merge(p0, p1, mu):
    m = p0.shape[0]
    p0 = p0.copy()
    p1 = p1.copy()
    nxt = np.arange(1, m + 1)
    nxt[m - 1] = -1
    prv = np.arange(-1, m - 1)
    alive = np.ones(m, dtype=np.bool_)
    ver = np.zeros(m, dtype=np.int64)
    cap = 4 * m + 4
    hc = np.empty(cap)
    hi = np.empty(cap, dtype=np.int64)
    hv = np.empty(cap, dtype=np.int64)
    size = 0
    for i in range(m - 1):
        size = _heap_push(hc, hi, hv, size, _pair_loss(p0[i], p1[i], p0[i + 1], p1[i + 1]), i, 0)
    count = m
    while count > mu and size > 0:
        c, i, v, size = _heap_pop(hc, hi, hv, size)
        if not alive[i] or v != ver[i] or nxt[i] < 0:
            continue
        j = nxt[i]
        p0[i] += p0[j]
        p1[i] += p1[j]
        alive[j] = False
        nxt[i] = nxt[j]
        if nxt[j] >= 0:
            prv[nxt[j]] = i
        count -= 1
        ver[i] += 1
        if size + 2 >= cap:
            # compact stale entries
            keep = 0
            for t in range(size):
                if alive[hi[t]] and hv[t] == ver[hi[t]]:
                    hc[keep], hi[keep], hv[keep] = hc[t], hi[t], hv[t]
                    keep += 1
            size = 0
            for t in range(keep):
                size = _heap_push(hc, hi, hv, size, hc[t], hi[t], hv[t])
        if nxt[i] >= 0:
            k = nxt[i]
            size = _heap_push(hc, hi, hv, size, _pair_loss(p0[i], p1[i], p0[k], p1[k]), i, ver[i])
        if prv[i] >= 0:
            k = prv[i]
            ver[k] += 1
            size = _heap_push(hc, hi, hv, size, _pair_loss(p0[k], p1[k], p0[i], p1[i]), k, ver[k])
    return p0[alive], p1[alive]


def degrading_merge(p0, p1, mu: int):
    """
    Merge outputs of a binary-input channel down to at most ``mu`` symbols.

    Outputs are sorted by likelihood ratio; the adjacent pair whose merge
    loses the least capacity is merged repeatedly (greedy, heap driven).
    Outputs with equal likelihood ratio are combined first, and very large
    alphabets are collapsed onto a fixed fine log-likelihood-ratio grid.

    Parameters
    ----------
    p0, p1 : ndarray
    mu : int

    Returns
    -------
    (ndarray, ndarray)
        Merged likelihood arrays, sorted by decreasing LLR.
    """
    if mu < 2:
        raise ValueError("mu must be at least 2")
    keep = (p0 > 0) | (p1 > 0)
    p0, p1 = p0[keep], p1[keep]
    if len(p0) <= mu:
        return p0, p1
    p0, p1 = _group_identical(p0, p1)
    if len(p0) > _PREBIN_TRIGGER:
        p0, p1 = _prebin(p0, p1)
    with np.errstate(divide="ignore", invalid="ignore"):
        llr = np.log(p0) - np.log(p1)
    order = np.argsort(-llr, kind="stable")
    p0, p1 = p0[order], p1[order]
    if len(p0) <= mu:
        return p0, p1
    return _greedy_merge(np.ascontiguousarray(p0), np.ascontiguousarray(p1), int(mu))


# -- continuous level channels ---------------------------------------------------


def _log_interval_prob(lo, hi):
    """``log(Phi(hi) - Phi(lo))`` computed without cancellation."""
    lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
    upper = lo > 0
    a = np.where(upper, -hi, lo)
    b = np.where(upper, -lo, hi)
    la, lb = log_ndtr(a), log_ndtr(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lb + np.log1p(-np.exp(la - lb))
    return np.where(b > a, out, -np.inf)


def _log_periodic_interval(edges, shift, period, sigma):
    """
    Log-mass of each interval ``[e_i, e_{i+1})`` under the ``period``-periodized
    Gaussian centred at ``shift``.
    """
    reach = int(math.ceil((_ALIAS_SIGMAS * sigma + period) / period)) + 1
    k = np.arange(-reach, reach + 1)
    c = shift + period * k
    lo = (edges[:-1, None] - c[None, :]) / sigma
    hi = (edges[1:, None] - c[None, :]) / sigma
    return logsumexp(_log_interval_prob(lo, hi), axis=1)


@dataclass(frozen=True)
class ModLevelChannel:
    """
    Symmetric level channel ``Lambda_{l-1} / Lambda_l`` with Gaussian noise.

    The lower-level labels are fixed to zero, so input ``x`` selects the
    offset ``x * g_l`` and the output is folded into a fundamental box of
    ``Lambda_l``.

    Attributes
    ----------
    chain : PartitionChain
    level : int
        1-based level.
    sigma : float
        Noise standard deviation per dimension.
    cells : int
        Cells per unit-length side of the output grid.
    """

    chain: PartitionChain
    level: int
    sigma: float
    cells: int = 0

    def __post_init__(self):
        _check_positive("sigma", self.sigma)
        if not 1 <= self.level <= self.chain.r:
            raise ValueError(f"level must be in 1..{self.chain.r}")

    def _cells_per_axis(self, side):
        if self.cells:
            return int(self.cells)
        # resolve the noise to ~1/40 sigma, bounded for the 2-D tensor grid
        base = 8192 if self.chain.n == 1 else 256
        want = int(math.ceil(40 * side / self.sigma))
        return int(min(max(base, want), 32768 if self.chain.n == 1 else 512))

    def cell_log_masses(self):
        """
        Exact log-masses of each output cell for inputs 0 and 1.

        Returns
        -------
        (ndarray, ndarray)
            Flattened log-probabilities of the cells.
        """
        chain, level, sigma = self.chain, self.level, self.sigma
        box = chain.level_box(level)
        period, shifts = chain.product_cosets(level)
        rep = chain.coset_reps[level - 1]
        counts = [self._cells_per_axis(box[0])]
        if chain.n == 2:
            m = counts[0]
            counts = [m, int(round(m * box[1] / box[0]))] if box[0] >= box[1] else [int(round(m * box[0] / box[1])), m]
        edges = [np.linspace(-box[d] / 2, box[d] / 2, counts[d] + 1) for d in range(chain.n)]
        out = []
        for x in (0, 1):
            a = x * rep
            parts = []
            for s in shifts:
                per_axis = [_log_periodic_interval(edges[d], a[d] + s[d], period, sigma) for d in range(chain.n)]
                if chain.n == 1:
                    parts.append(per_axis[0])
                else:
                    parts.append((per_axis[0][:, None] + per_axis[1][None, :]).ravel())
            out.append(logsumexp(np.stack(parts), axis=0))
        return out[0], out[1]

    def fine_table(self) -> DiscreteBMC:
        l0, l1 = self.cell_log_masses()
        return DiscreteBMC(np.exp(l0), np.exp(l1), validate=False)

    def cache_key(self) -> dict:
        return {"kind": "mod", "chain": self.chain.name, "r": self.chain.r, "level": self.level,
                "sigma": self.sigma}


@dataclass(frozen=True)
class ShapedLevelChannel:
    """
    Symmetrized level channel of the discrete-Gaussian shaped system (1-D).

    Input ``x~`` is uniform; the output is ``(y, x_{1:l-1}, x_l xor x~)`` with
    ``W(y, p, s | x~) = P(y, X_{1:l-1} = p, X_l = s xor x~)`` under
    ``lambda ~ D_{Z, sigma_s}`` and ``y = lambda + noise``.

    Attributes
    ----------
    shaping : DiscreteGaussianSpec
    level : int
    sigma : float
    cells : int
        Number of output cells for ``y`` (0 = automatic).
    """

    shaping: DiscreteGaussianSpec
    level: int
    sigma: float
    cells: int = 0

    def __post_init__(self):
        _check_positive("sigma", self.sigma)
        if self.level < 1:
            raise ValueError("level must be at least 1")

    def _points(self):
        pts, logp = self.shaping._wide_support(self.shaping.center)
        keep = logp > math.log(1e-20)
        return pts[keep], logp[keep]

    def joint_log_masses(self):
        """
        Log-masses ``log P(y in cell, X_{1:l})``.

        Returns
        -------
        ndarray, shape (cells + 2, 2^(l-1), 2)
            Indexed by cell, prefix value and ``x_l``; two extra cells carry
            the tails outside the grid.
        """
        pts, logp = self._points()
        lo = pts.min() - _ALIAS_SIGMAS * self.sigma
        hi = pts.max() + _ALIAS_SIGMAS * self.sigma
        cells = self.cells or int(min(max(8192, math.ceil(40 * (hi - lo) / self.sigma)), 65536))
        edges = np.r_[-np.inf, np.linspace(lo, hi, cells + 1), np.inf]
        z_lo = (edges[:-1, None] - pts[None, :]) / self.sigma
        z_hi = (edges[1:, None] - pts[None, :]) / self.sigma
        cell_lam = _log_interval_prob(z_lo, z_hi) + logp[None, :]
        m = 2**self.level
        half = m // 2
        res = np.mod(pts, m)
        out = np.full((len(edges) - 1, half, 2), -np.inf)
        for rho in range(m):
            sel = res == rho
            if np.any(sel):
                out[:, rho % half, rho // half] = logsumexp(cell_lam[:, sel], axis=1)
        return out

    def fine_table(self) -> DiscreteBMC:
        j = np.exp(self.joint_log_masses()).reshape(-1, 2)
        p0 = np.r_[j[:, 0], j[:, 1]]
        p1 = np.r_[j[:, 1], j[:, 0]]
        return DiscreteBMC(p0, p1, validate=False)

    def source_table(self) -> DiscreteBMC:
        """Symmetrized channel of ``X_l`` given only ``X_{1:l-1}``."""
        logc = self.shaping.coset_log_probs(self.level)
        half = 2 ** (self.level - 1)
        j = np.exp(np.stack([logc[:half], logc[half:]], axis=1))
        p0 = np.r_[j[:, 0], j[:, 1]]
        p1 = np.r_[j[:, 1], j[:, 0]]
        keep = (p0 > 0) | (p1 > 0)
        return DiscreteBMC(p0[keep] / p0.sum(), p1[keep] / p1.sum(), validate=False)

    def cache_key(self) -> dict:
        return {"kind": "shaped", "level": self.level, "sigma": self.sigma,
                "shaping": self.shaping.to_dict()}


def quantize_channel(channel, mu: int = 128) -> DiscreteBMC:
    """
    Degraded finite-output approximation of a level channel.

    Parameters
    ----------
    channel : DiscreteBMC, ModLevelChannel or ShapedLevelChannel
        Anything with a ``fine_table()`` method, or a table already.
    mu : int
        Output alphabet size of the result.

    Returns
    -------
    DiscreteBMC
        A channel with at most ``mu`` outputs; a table that is already small
        enough is returned unchanged.
    """
    if mu < 2:
        raise ValueError("mu must be at least 2")
    table = channel if isinstance(channel, DiscreteBMC) else channel.fine_table()
    if table.size <= mu:
        return table
    p0, p1 = degrading_merge(table.p0, table.p1, mu)
    return DiscreteBMC(p0 / p0.sum(), p1 / p1.sum(), validate=False)


class ChannelCache:
    """
    On-disk JSON cache of quantized channels keyed by construction parameters.

    Parameters
    ----------
    directory : str or Path
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: dict) -> Path:
        digest = hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:24]
        return self.directory / f"bmc-{digest}.json"

    def get(self, channel, mu: int) -> DiscreteBMC:
        key = dict(channel.cache_key(), mu=mu)
        path = self._path(key)
        if path.exists():
            return DiscreteBMC.from_dict(json.loads(path.read_text())["table"])
        table = quantize_channel(channel, mu)
        path.write_text(json.dumps({"key": key, "table": table.to_dict()}))
        return table


# -- densities -------------------------------------------------------------------


def mod_channel_density(chain: PartitionChain, level: int, sigma: float, y_bar, x_level: int, prefix=()):
    """
    Transition density of the ``Lambda_{l-1} / Lambda_l`` channel.

    Parameters
    ----------
    chain : PartitionChain
    level : int
        1-based level ``l``.
    sigma : float
    y_bar : array_like, shape (..., n)
        Output inside the level box of ``Lambda_l``.
    x_level : int
        Input bit of level ``l``.
    prefix : sequence of int
        Labels ``x_1..x_{l-1}`` (defaults to zeros).

    Returns
    -------
    ndarray
        ``f_{sigma, Lambda_l}(y_bar - a_1 - ... - a_l)``.
    """
    if not 1 <= level <= chain.r:
        raise ValueError(f"level must be in 1..{chain.r}")
    y_bar = np.asarray(y_bar, dtype=float)
    if chain.n == 1 and (y_bar.ndim == 0 or y_bar.shape[-1] != 1):
        y_bar = y_bar[..., None]
    box = chain.level_box(level)
    if np.any(np.abs(y_bar) > box / 2 + 1e-12):
        raise ValueError("y_bar lies outside the level fundamental region")
    bits = list(prefix) + [0] * (level - 1 - len(prefix))
    if len(bits) != level - 1:
        raise ValueError("prefix longer than level - 1")
    offset = chain.offset(np.array(bits + [int(x_level)]))
    return np.exp(chain.lattice(level).periodic_logpdf(y_bar - offset, sigma))


@dataclass(frozen=True)
class AsymmetricLevelChannel:
    """
    Level-``l`` channel of the discrete-Gaussian shaped system (1-D chain).

    Attributes
    ----------
    level : int
    prefix : int
        Natural binary value of the conditioning labels ``x_1..x_{l-1}``.
    shaping : DiscreteGaussianSpec
    sigma : float
        Channel noise standard deviation.
    """

    level: int
    prefix: int
    shaping: DiscreteGaussianSpec
    sigma: float
    prior: tuple = field(init=False)
    mmse_alpha: float = field(init=False)
    sigma_tilde: float = field(init=False)

    def __post_init__(self):
        _check_positive("sigma", self.sigma)
        if not 0 <= self.prefix < 2 ** (self.level - 1):
            raise ValueError("prefix out of range for level")
        logc = self.shaping.coset_log_probs(self.level)
        half = 2 ** (self.level - 1)
        l0, l1 = logc[self.prefix], logc[self.prefix + half]
        p1 = float(np.exp(l1 - np.logaddexp(l0, l1)))
        ss, s = self.shaping.sigma_s, self.sigma
        object.__setattr__(self, "prior", (1.0 - p1, p1))
        object.__setattr__(self, "mmse_alpha", ss**2 / (ss**2 + s**2))
        object.__setattr__(self, "sigma_tilde", ss * s / math.sqrt(ss**2 + s**2))

    @property
    def sigma_s(self) -> float:
        return self.shaping.sigma_s

    def coset_residue(self, x_level: int) -> int:
        return self.prefix + int(x_level) * 2 ** (self.level - 1)

    def _coset_points(self, x_level, center_values):
        # enough points of the coset around the relevant values
        m = 2**self.level
        rho = self.coset_residue(x_level)
        span = _ALIAS_SIGMAS * max(self.shaping.sigma_s, self.sigma) + m
        lo = math.floor((np.min(center_values) - span - rho) / m)
        hi = math.ceil((np.max(center_values) + span - rho) / m)
        return rho + m * np.arange(lo, hi + 1) + 0.0

    def density(self, y, x_level: int) -> np.ndarray:
        """``P(y | x_l, x_{1:l-1})`` as a prior-weighted Gaussian mixture."""
        y = np.asarray(y, dtype=float)
        a = self._coset_points(x_level, np.r_[y.ravel(), self.shaping.center])
        c, ss, s = self.shaping.center, self.shaping.sigma_s, self.sigma
        logw = -((a - c) ** 2) / (2 * ss**2)
        logw -= logsumexp(logw)
        lg = -((y[..., None] - a) ** 2) / (2 * s**2) - 0.5 * math.log(2 * math.pi * s**2)
        return np.exp(logsumexp(lg + logw, axis=-1))

    def density_mmse(self, y, x_level: int) -> np.ndarray:
        """
        Same density written with the MMSE-rescaled alias sum.

        Completing the square turns each mixture term into
        ``exp(-(y-c)^2 / 2(sigma_s^2+sigma^2)) exp(-(u-a)^2 / 2 sigma_tilde^2)``
        with ``u = alpha (y - c) + c``.
        """
        y = np.asarray(y, dtype=float)
        c = self.shaping.center
        alpha, st, ss, s = self.mmse_alpha, self.sigma_tilde, self.shaping.sigma_s, self.sigma
        u = alpha * (y - c) + c
        a = self._coset_points(x_level, np.r_[u.ravel(), c])
        log_mass = logsumexp(-((a - c) ** 2) / (2 * ss**2))
        core = logsumexp(-((u[..., None] - a) ** 2) / (2 * st**2), axis=-1)
        front = -((y - c) ** 2) / (2 * (ss**2 + s**2)) - 0.5 * math.log(2 * math.pi * s**2)
        return np.exp(front + core - log_mass)

    def posterior_llr(self, y) -> np.ndarray:
        """
        ``log P(x_l = 0 | y, x_{1:l-1}) - log P(x_l = 1 | y, x_{1:l-1})``.

        Only the alias sums at the MMSE-scaled output survive; the common
        front factors cancel.
        """
        y = np.asarray(y, dtype=float)
        c = self.shaping.center
        u = self.mmse_alpha * (y - c) + c
        out = []
        for x in (0, 1):
            a = self._coset_points(x, np.r_[u.ravel(), c])
            out.append(logsumexp(-((u[..., None] - a) ** 2) / (2 * self.sigma_tilde**2), axis=-1))
        return out[0] - out[1]

    def likelihood_llr(self, y) -> np.ndarray:
        """``log P(y | x_l = 0) - log P(y | x_l = 1)`` (prior removed)."""
        return self.posterior_llr(y) - math.log(self.prior[0]) + math.log(self.prior[1])


def asymmetric_density(ch: AsymmetricLevelChannel, y, x_level: int) -> np.ndarray:
    """Transition density of the shaped level channel, see :class:`AsymmetricLevelChannel`."""
    return ch.density_mmse(y, x_level)


def symmetrized_density(ch: AsymmetricLevelChannel, y, s_bit: int, x_tilde: int) -> np.ndarray:
    """
    Density of the symmetrized channel: ``P(y, prefix, x_l = s xor x~)``.

    The result is the joint density of output ``y`` together with the
    conditioning prefix of ``ch`` and the level bit.
    """
    logc = ch.shaping.coset_log_probs(ch.level)
    x = int(s_bit) ^ int(x_tilde)
    return np.exp(logc[ch.coset_residue(x)]) * ch.density(y, x)


# -- degradation checks ------------------------------------------------------------


@dataclass
class DegradeResult:
    """Outcome of :func:`degrade_check`; ``witness`` explains the verdict."""

    degraded: bool
    witness: dict

    def __bool__(self):
        return self.degraded


def degrade_check(W_coarse: DiscreteBMC, W_fine: DiscreteBMC, *, lp: bool | None = None,
                  partition=None, tol: float = 1e-9) -> DegradeResult:
    """
    Test whether ``W_coarse`` is degraded with respect to ``W_fine``.

    Necessary conditions ``I(coarse) <= I(fine)`` and ``Z(coarse) >= Z(fine)``
    are always checked.  For small alphabets a linear program searches for
    the kernel ``Q`` with ``W_coarse = W_fine Q``; when ``partition`` is given
    as ``(chain, level, sigma)`` the continuous intermediate-channel
    construction is verified instead.

    Parameters
    ----------
    W_coarse, W_fine : DiscreteBMC
    lp : bool, optional
        Force (True) or skip (False) the kernel search; by default it runs
        when both alphabets have at most 64 outputs and ``partition`` is None.
    partition : tuple, optional
        ``(chain, level, sigma)``: coarse is level ``level`` and fine is level
        ``level + 1`` of ``chain`` at the same ``sigma``.
    tol : float
        Slack on the necessary conditions.

    Returns
    -------
    DegradeResult
    """
    for w in (W_coarse, W_fine):
        if not isinstance(w, DiscreteBMC):
            raise ValueError("channels must be DiscreteBMC tables")
        if abs(w.p0.sum() - 1) > 1e-9 or abs(w.p1.sum() - 1) > 1e-9:
            raise ValueError("channel likelihoods must be normalized")
    ic, i_f = W_coarse.capacity(), W_fine.capacity()
    zc, zf = W_coarse.bhattacharyya(), W_fine.bhattacharyya()
    witness = {"capacity_coarse": ic, "capacity_fine": i_f, "z_coarse": zc, "z_fine": zf}
    if ic > i_f + tol:
        witness["violation"] = "capacity of coarse channel exceeds fine channel"
        return DegradeResult(False, witness)
    if zc < zf - tol:
        witness["violation"] = "Bhattacharyya parameter of coarse channel below fine channel"
        return DegradeResult(False, witness)
    if partition is not None:
        chain, level, sigma = partition
        mismatch = intermediate_channel_check(chain, level, sigma)
        witness["concatenation_mismatch"] = mismatch
        ok = mismatch < 1e-6
        if not ok:
            witness["violation"] = "intermediate channel does not reproduce the coarse channel"
        return DegradeResult(ok, witness)
    if lp is None:
        lp = W_coarse.size <= 64 and W_fine.size <= 64
    if lp:
        kernel = _degrading_kernel(W_coarse, W_fine)
        if kernel is None:
            witness["violation"] = "no stochastic kernel maps the fine channel onto the coarse one"
            return DegradeResult(False, witness)
        witness["kernel"] = kernel.tolist()
    return DegradeResult(True, witness)


def _degrading_kernel(W_coarse, W_fine):
    mf, mc = W_fine.size, W_coarse.size
    nv = mf * mc
    # row-stochastic kernel constraints
    a_rows = np.zeros((mf, nv))
    for j in range(mf):
        a_rows[j, j * mc:(j + 1) * mc] = 1.0
    a_ch = []
    b_ch = []
    for pf, pc in ((W_fine.p0, W_coarse.p0), (W_fine.p1, W_coarse.p1)):
        for k in range(mc):
            row = np.zeros(nv)
            row[k::mc] = pf
            a_ch.append(row)
            b_ch.append(pc[k])
    a_eq = np.vstack([a_rows, np.array(a_ch)])
    b_eq = np.r_[np.ones(mf), b_ch]
    res = linprog(np.zeros(nv), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    return res.x.reshape(mf, mc)


def intermediate_channel_check(chain: PartitionChain, level: int, sigma: float, cells: int = 0) -> float:
    """
    Verify that level ``l`` equals level ``l + 1`` followed by extra noise.

    Level ``l + 1`` at ``sigma`` is, after rescaling, level ``l`` at the
    smaller deviation ``sigma' = sigma / 2`` (1-D) or ``sigma / sqrt 2`` (2-D).
    Passing it through a mod-``Lambda_l`` Gaussian channel of variance
    ``sigma^2 - sigma'^2`` must give back the level-``l`` channel.  The
    convolution is evaluated by FFT on a periodic grid.

    Returns
    -------
    float
        Maximum absolute density mismatch over the grid, both inputs.
    """
    if not 1 <= level < chain.r + 1:
        raise ValueError("level out of range")
    lat = chain.lattice(level)
    scale = 2.0 if chain.n == 1 else math.sqrt(2.0)
    sigma_fine = sigma / scale
    extra = math.sqrt(sigma**2 - sigma_fine**2)
    L = lat.square_period if chain.n == 2 else lat.volume
    m = cells or (4096 if chain.n == 1 else 256)
    g = (np.arange(m) - m // 2) * (L / m)
    if chain.n == 1:
        pts = g[:, None]
    else:
        gx, gy = np.meshgrid(g, g, indexing="ij")
        pts = np.stack([gx, gy], axis=-1)
    # the torus of side L holds L^n / V copies of the fundamental cell
    cell = (L / m) ** chain.n * lat.volume / L**chain.n
    kernel = np.exp(lat.periodic_logpdf(pts, extra))
    kernel = np.fft.ifftshift(kernel)
    worst = 0.0
    for x in (0, 1):
        a = x * chain.coset_reps[level - 1]
        fine = np.exp(lat.periodic_logpdf(pts - a, sigma_fine))
        conv = np.real(np.fft.ifftn(np.fft.fftn(fine) * np.fft.fftn(kernel))) * cell
        coarse = np.exp(lat.periodic_logpdf(pts - a, sigma))
        worst = max(worst, float(np.max(np.abs(conv - coarse))))
    return worst


# -- noise -----------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """I.i.d. Gaussian noise with a reproducibility seed."""

    sigma: float
    seed: int = 0

    def __post_init__(self):
        _check_positive("sigma", self.sigma)


def awgn_sample(noise: NoiseModel, length: int, stream: int = 0) -> np.ndarray:
    """
    Draw ``length`` samples of ``N(0, sigma^2)``.

    Parameters
    ----------
    noise : NoiseModel
    length : int
    stream : int
        Sub-stream index (e.g. trial number) mixed into the seed.

    Returns
    -------
    ndarray
    """
    if length < 1:
        raise ValueError("length must be at least 1")
    rng = np.random.default_rng([int(noise.seed) & (2**64 - 1), int(stream)])
    return rng.normal(0.0, noise.sigma, int(length))
