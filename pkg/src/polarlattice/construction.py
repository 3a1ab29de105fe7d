"""
Polar code construction on quantized binary-input channels.

Index convention: the generator is ``G_N = F^{(x)m}`` with ``F = [[1,0],[1,1]]``
and no bit-reversal.  Subchannel ``i`` has binary expansion ``b_1 ... b_m``
(most significant first); ``b_k = 0`` applies the "minus" transform at stage
``k`` and ``b_k = 1`` the "plus" transform.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channels import (
    ChannelCache,
    DiscreteBMC,
    ModLevelChannel,
    ShapedLevelChannel,
    degrading_merge,
    quantize_channel,
)
from .lattice_core import DiscreteGaussianSpec, PartitionChain


def _check_power_of_two(N: int) -> int:
    N = int(N)
    if N < 1 or N & (N - 1):
        raise ValueError(f"N must be a power of two, got {N}")
    return N


def polar_transform_pair(W: DiscreteBMC, mu: int = 128):
    """
    One polarization step followed by a degrading merge.

    Parameters
    ----------
    W : DiscreteBMC
    mu : int
        Output alphabet bound after merging.

    Returns
    -------
    (DiscreteBMC, DiscreteBMC)
        ``(W_minus, W_plus)``.
    """
    a0, a1 = W.p0, W.p1
    # minus: output (y1, y2), W(y1, y2 | u1) = 1/2 sum_u2 W(y1|u1^u2) W(y2|u2)
    m0 = 0.5 * (np.outer(a0, a0) + np.outer(a1, a1)).ravel()
    m1 = 0.5 * (np.outer(a1, a0) + np.outer(a0, a1)).ravel()
    # plus: output (y1, y2, u1), W(y1, y2, u1 | u2) = 1/2 W(y1|u1^u2) W(y2|u2)
    q0 = 0.5 * np.r_[np.outer(a0, a0).ravel(), np.outer(a1, a0).ravel()]
    q1 = 0.5 * np.r_[np.outer(a1, a1).ravel(), np.outer(a0, a1).ravel()]
    minus = DiscreteBMC(*degrading_merge(m0, m1, mu), validate=False)
    plus = DiscreteBMC(*degrading_merge(q0, q1, mu), validate=False)
    return minus, plus


@dataclass(frozen=True)
class SubchannelProfile:
    """
    Per-index reliability of the ``N`` synthesized subchannels.

    Attributes
    ----------
    z : ndarray
        Bhattacharyya parameters.
    capacity : ndarray
        Mutual information in bits (uniform input).
    error_prob : ndarray
        MAP bit error probability given the output and the correct past.
    """

    z: np.ndarray
    capacity: np.ndarray
    error_prob: np.ndarray

    @property
    def N(self) -> int:
        return len(self.z)


def evolve_profile(W: DiscreteBMC, N: int, mu: int = 128) -> SubchannelProfile:
    """
    Track all ``N`` subchannels through the polarization tree.

    Parameters
    ----------
    W : DiscreteBMC
        Quantized base channel.
    N : int
        Block length (power of two).
    mu : int
        Alphabet bound applied after every transform.

    Returns
    -------
    SubchannelProfile
        Entries in natural index order.  Every merge is degrading, so ``z``
        and ``error_prob`` are upper bounds on the exact values.
    """
    N = _check_power_of_two(N)
    channels = [W]
    while len(channels) < N:
        channels = [c for ch in channels for c in polar_transform_pair(ch, mu)]
    return SubchannelProfile(
        np.array([ch.bhattacharyya() for ch in channels]),
        np.array([ch.capacity() for ch in channels]),
        np.array([ch.error_probability() for ch in channels]),
    )


def evolve_subchannels(W: DiscreteBMC, N: int, mu: int = 128, return_capacity: bool = False):
    """
    Bhattacharyya parameters of all ``N`` synthesized subchannels.

    Parameters
    ----------
    W : DiscreteBMC
    N : int
    mu : int
    return_capacity : bool
        Also return the per-index mutual information.

    Returns
    -------
    ndarray or (ndarray, ndarray)
        ``z[i]`` in natural index order (and ``capacity[i]``).
    """
    prof = evolve_profile(W, N, mu)
    if return_capacity:
        return prof.z, prof.capacity
    return prof.z


def default_threshold(N: int, beta: float = 0.45) -> float:
    """``2^{-N^beta}`` clipped to ``[1e-9, 0.5]``."""
    if not 0 < beta < 0.5:
        raise ValueError("beta must lie in (0, 0.5)")
    return float(np.clip(2.0 ** (-(N**beta)), 1e-9, 0.5))


@dataclass(frozen=True)
class LevelCodeSpec:
    """
    Index partition of one component polar code.

    Attributes
    ----------
    N : int
    level : int
    frozen, info, shaping : tuple of int
        Disjoint, sorted, covering ``range(N)``.
    z_channel : tuple of float
        Bhattacharyya parameter of each subchannel given the channel output.
    z_source : tuple of float
        Bhattacharyya parameter given only the lower-level side information
        (all ones for the uniform-input symmetric design).
    error_prob : tuple of float
        Optional per-index bit error probability; empty when not tracked.
    """

    N: int
    level: int
    frozen: tuple
    info: tuple
    shaping: tuple
    z_channel: tuple
    z_source: tuple
    error_prob: tuple = ()

    def __post_init__(self):
        for name in ("frozen", "info", "shaping"):
            object.__setattr__(self, name, tuple(sorted(int(i) for i in getattr(self, name))))
        object.__setattr__(self, "z_channel", tuple(float(v) for v in self.z_channel))
        object.__setattr__(self, "z_source", tuple(float(v) for v in self.z_source))
        object.__setattr__(self, "error_prob", tuple(float(v) for v in self.error_prob))
        _check_power_of_two(self.N)
        allidx = self.frozen + self.info + self.shaping
        if sorted(allidx) != list(range(self.N)):
            raise ValueError("frozen, info and shaping sets must partition range(N)")
        if len(self.z_channel) != self.N or len(self.z_source) != self.N:
            raise ValueError("z vectors must have length N")
        if self.error_prob and len(self.error_prob) != self.N:
            raise ValueError("error_prob must be empty or have length N")

    @property
    def rate(self) -> float:
        return len(self.info) / self.N

    @property
    def symmetric(self) -> bool:
        return not self.shaping

    def roles(self) -> np.ndarray:
        """Per-index role codes: 0 frozen, 1 information, 2 shaping."""
        out = np.zeros(self.N, dtype=np.int8)
        out[list(self.info)] = 1
        out[list(self.shaping)] = 2
        return out

    def error_bound(self, metric: str = "auto") -> float:
        """
        Union bound on the SC block error probability of this level.

        ``metric`` is ``"z"`` (sum of Bhattacharyya parameters), ``"error"``
        (sum of bit error probabilities) or ``"auto"`` (``"error"`` when
        tracked).
        """
        if metric == "auto":
            metric = "error" if self.error_prob else "z"
        if metric == "z":
            vals = self.z_channel
        elif metric == "error":
            if not self.error_prob:
                raise ValueError("error probabilities were not recorded")
            vals = self.error_prob
        else:
            raise ValueError(f"unknown metric {metric!r}")
        return float(math.fsum(vals[i] for i in self.info))

    def to_dict(self) -> dict:
        d = {
            "N": self.N,
            "level": self.level,
            "frozen": list(self.frozen),
            "info": list(self.info),
            "shaping": list(self.shaping),
            "z_channel": list(self.z_channel),
            "z_source": list(self.z_source),
        }
        if self.error_prob:
            d["error_prob"] = list(self.error_prob)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LevelCodeSpec":
        return cls(int(d["N"]), int(d["level"]), d["frozen"], d["info"], d["shaping"],
                   d["z_channel"], d["z_source"], d.get("error_prob", ()))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "LevelCodeSpec":
        return cls.from_dict(json.loads(text))


def _sorted_by_z(z, secondary=None):
    idx = np.arange(len(z))
    if secondary is None:
        return np.lexsort((idx, z))
    return np.lexsort((idx, secondary, z))


def select_sets_equal_error(z_channel, target_pe: float, level: int = 1,
                            error_prob=None, metric: str | None = None) -> LevelCodeSpec:
    """
    Symmetric code whose union bound stays within a per-level budget.

    Indices are sorted by increasing reliability metric (ties by smaller
    index) and the longest prefix whose metric sum is at most ``target_pe``
    becomes the information set.  The metric is the bit error probability
    when ``error_prob`` is given and ``z`` otherwise; both sums bound the SC
    block error probability, the first more tightly.

    Parameters
    ----------
    z_channel : array_like
    target_pe : float
        Budget in (0, 1).
    level : int
    error_prob : array_like, optional
        Per-index bit error probability of the same subchannels.
    metric : {"error", "z"}, optional
        Budgeted quantity; defaults to ``"error"`` when ``error_prob`` is
        given and ``"z"`` otherwise.

    Returns
    -------
    LevelCodeSpec
    """
    if not 0 < target_pe < 1:
        raise ValueError("target_pe must lie in (0, 1)")
    z = np.asarray(z_channel, dtype=float)
    N = _check_power_of_two(len(z))
    pe = () if error_prob is None else np.asarray(error_prob, dtype=float)
    if len(pe) not in (0, N):
        raise ValueError("error_prob must match z_channel in length")
    metric = metric or ("z" if error_prob is None else "error")
    if metric == "z":
        vals, order = z, _sorted_by_z(z)
    elif metric == "error" and len(pe):
        vals, order = pe, _sorted_by_z(pe, z)
    else:
        raise ValueError("metric must be 'z', or 'error' with error_prob given")
    csum = np.cumsum(vals[order])
    k = int(np.searchsorted(csum, target_pe, side="right"))
    if k == 0:
        warnings.warn("error budget below the most reliable subchannel; empty information set")
    return LevelCodeSpec(N, level, order[k:], order[:k], (), z, np.ones(N), pe)


def select_sets_capacity(z_channel, mutual_info=None, threshold: float | None = None,
                         level: int = 1, beta: float = 0.45) -> LevelCodeSpec:
    """
    Symmetric code from a reliability threshold.

    Information indices satisfy ``z <= threshold`` (and, when per-index
    mutual information is supplied, ``I >= 1 - threshold``).

    Parameters
    ----------
    z_channel : array_like
    mutual_info : array_like, optional
    threshold : float, optional
        Defaults to :func:`default_threshold` for this ``N`` and ``beta``.
    level : int
    beta : float

    Returns
    -------
    LevelCodeSpec
    """
    z = np.asarray(z_channel, dtype=float)
    N = _check_power_of_two(len(z))
    t = default_threshold(N, beta) if threshold is None else float(threshold)
    good = z <= t
    if mutual_info is not None:
        good &= np.asarray(mutual_info, dtype=float) >= 1 - t
    idx = np.arange(N)
    return LevelCodeSpec(N, level, idx[~good], idx[good], (), z, np.ones(N))


def select_sets_asymmetric(z_channel, z_source, threshold: float | None = None, level: int = 1,
                           budget: float | None = None, source_threshold: float | None = None,
                           beta: float = 0.45, error_prob=None, metric: str | None = None) -> LevelCodeSpec:
    """
    Frozen / information / shaping partition for a non-uniform input.

    ``F = {z_channel >= 1 - t}``; information indices must be nearly uniform
    given the past (``z_source >= 1 - t_s``) and reliable given the output.
    Without a budget reliability means ``z_channel <= t``; with a budget the
    most reliable candidates are taken while their ``z`` sum stays within it.
    Everything else is a shaping index.

    Parameters
    ----------
    z_channel, z_source : array_like
    threshold : float, optional
        ``t``; defaults to :func:`default_threshold`.
    level : int
    budget : float, optional
        Union-bound budget for the information set.
    source_threshold : float, optional
        ``t_s``; defaults to ``t``.
    beta : float
    error_prob : array_like, optional
        Per-index bit error probability, recorded in the result.
    metric : {"error", "z"}, optional
        Budgeted quantity; defaults to ``"error"`` when ``error_prob`` is
        given and ``"z"`` otherwise.

    Returns
    -------
    LevelCodeSpec
    """
    zc = np.asarray(z_channel, dtype=float)
    zs = np.asarray(z_source, dtype=float)
    N = _check_power_of_two(len(zc))
    if len(zs) != N:
        raise ValueError("z_channel and z_source must have equal length")
    t = default_threshold(N, beta) if threshold is None else float(threshold)
    ts = t if source_threshold is None else float(source_threshold)
    idx = np.arange(N)
    frozen = zc >= 1 - t
    cand = (zs >= 1 - ts) & ~frozen
    info = np.zeros(N, dtype=bool)
    pe = () if error_prob is None else np.asarray(error_prob, dtype=float)
    if budget is None:
        info = cand & (zc <= t)
    else:
        metric = metric or ("z" if error_prob is None else "error")
        if metric == "error" and error_prob is None:
            raise ValueError("metric 'error' needs error_prob")
        vals = pe if metric == "error" else zc
        order = [i for i in _sorted_by_z(vals, zc) if cand[i]]
        csum = np.cumsum(vals[order]) if order else np.array([])
        k = int(np.searchsorted(csum, budget, side="right"))
        info[np.array(order[:k], dtype=int)] = True
    shaping = ~(frozen | info)
    return LevelCodeSpec(N, level, idx[frozen], idx[info], idx[shaping], zc, zs, pe)


@dataclass(frozen=True)
class NestingCertificate:
    """
    Result of :func:`certify_nesting`.

    Attributes
    ----------
    levels : tuple of int
    pairs : tuple of bool
        ``pairs[k]`` tells whether the coded set of ``levels[k]`` is contained
        in that of ``levels[k + 1]``.
    witness : tuple or None
        ``(level, next_level, index)`` of the first violation.
    """

    levels: tuple
    pairs: tuple
    witness: tuple | None = field(default=None)

    @property
    def valid(self) -> bool:
        return all(self.pairs)

    def to_dict(self) -> dict:
        return {"levels": list(self.levels), "pairs": list(self.pairs), "valid": self.valid,
                "witness": None if self.witness is None else list(self.witness)}


def coded_set(spec: LevelCodeSpec) -> set:
    """Indices not frozen: the information set, plus shaping indices if any."""
    return set(spec.info) | set(spec.shaping)


def certify_nesting(specs) -> NestingCertificate:
    """
    Check that the component codes are nested level by level.

    For symmetric codes this is ``info(l) <= info(l+1)``; for shaped codes the
    shaping indices belong to the code as well.

    Parameters
    ----------
    specs : sequence of LevelCodeSpec
        In level order.

    Returns
    -------
    NestingCertificate
    """
    specs = list(specs)
    if len({s.N for s in specs}) > 1:
        raise ValueError("all level codes must share the block length N")
    pairs = []
    witness = None
    for a, b in zip(specs, specs[1:]):
        extra = sorted(coded_set(a) - coded_set(b))
        pairs.append(not extra)
        if extra and witness is None:
            witness = (a.level, b.level, extra[0])
    return NestingCertificate(tuple(s.level for s in specs), tuple(pairs), witness)


# -- multilevel designs ------------------------------------------------------------


def _quantized(channel, mu, cache):
    return cache.get(channel, mu) if cache is not None else quantize_channel(channel, mu)


def degradation_envelope(profiles) -> list[SubchannelProfile]:
    """
    Make per-index parameters monotone across the levels of a chain.

    Level ``l`` is degraded with respect to level ``l + 1``, so every
    upper bound computed for level ``l + 1`` also bounds level ``l``.  Taking
    the larger bound (smaller capacity) level by level from the bottom keeps
    every value a valid bound and removes the small inversions left by
    quantizing each level separately.
    """
    out = [profiles[-1]]
    for prof in reversed(profiles[:-1]):
        nxt = out[0]
        out.insert(0, SubchannelProfile(np.maximum(prof.z, nxt.z), np.minimum(prof.capacity, nxt.capacity),
                                        np.maximum(prof.error_prob, nxt.error_prob)))
    return out


def level_profiles(chain: PartitionChain, sigma: float, N: int, mu: int = 128,
                   cache: ChannelCache | None = None) -> list[SubchannelProfile]:
    """
    Subchannel profiles of every level of ``chain`` at noise ``sigma``.

    Lower-level labels are fixed to zero; the result passes through
    :func:`degradation_envelope`.
    """
    raw = [evolve_profile(_quantized(ModLevelChannel(chain, level, sigma), mu, cache), N, mu)
           for level in range(1, chain.r + 1)]
    return degradation_envelope(raw)


def design_symmetric(chain: PartitionChain, sigma: float, N: int, target_pe: float, *,
                     rule: str = "equal_error", mu: int = 128, metric: str = "error",
                     threshold: float | None = None, beta: float = 0.45,
                     cache: ChannelCache | None = None) -> list[LevelCodeSpec]:
    """
    Component codes of an unshaped polar lattice.

    Parameters
    ----------
    chain : PartitionChain
    sigma : float
        Design noise standard deviation.
    N : int
    target_pe : float
        Overall block error target; under the equal-error rule each of the
        ``r`` binary levels and the bottom lattice decoder get
        ``target_pe / (r + 1)``.
    rule : {"equal_error", "capacity"}
    mu : int
    metric : {"error", "z"}
        Union-bound metric spent against the budget (equal-error rule).
    threshold, beta
        Capacity-rule threshold (see :func:`select_sets_capacity`).
    cache : ChannelCache, optional

    Returns
    -------
    list of LevelCodeSpec
    """
    if rule not in ("equal_error", "capacity"):
        raise ValueError(f"unknown rule {rule!r}; valid values are 'equal_error', 'capacity'")
    if metric not in ("error", "z"):
        raise ValueError(f"unknown metric {metric!r}; valid values are 'error', 'z'")
    per_level = target_pe / (chain.r + 1)
    profiles = level_profiles(chain, sigma, N, mu, cache)
    specs = []
    for level, prof in enumerate(profiles, start=1):
        if rule == "equal_error":
            specs.append(select_sets_equal_error(prof.z, per_level, level, prof.error_prob, metric))
        else:
            specs.append(select_sets_capacity(prof.z, prof.capacity, threshold, level, beta))
    return specs


def shaped_level_profiles(shaping: DiscreteGaussianSpec, sigma: float, N: int, level: int,
                          mu: int = 128, cache: ChannelCache | None = None):
    """
    Channel-side and source-side subchannel profiles of one shaped level.

    Returns
    -------
    (SubchannelProfile, SubchannelProfile)
        Profiles of the symmetrized channel with output ``(y, x_{1:l-1})``
        and of the source given ``x_{1:l-1}`` alone.
    """
    ch = ShapedLevelChannel(shaping, level, sigma)
    chan = evolve_profile(_quantized(ch, mu, cache), N, mu)
    src = evolve_profile(quantize_channel(ch.source_table(), mu), N, mu)
    return chan, src


def design_shaped(shaping: DiscreteGaussianSpec, sigma: float, N: int, target_pe: float, *,
                  mu: int = 128, threshold: float | None = None,
                  source_threshold: float | None = 1e-4, metric: str = "error", beta: float = 0.45,
                  cache: ChannelCache | None = None) -> list[LevelCodeSpec]:
    """
    Frozen / information / shaping sets for every level of a shaped 1-D lattice.

    Each of the ``shaping.r`` levels receives the budget ``target_pe / r``;
    within it the most reliable nearly-uniform indices carry information.

    Parameters
    ----------
    shaping : DiscreteGaussianSpec
    sigma : float
        Channel noise standard deviation.
    N : int
    target_pe : float
    mu : int
    threshold : float, optional
        Polarization threshold of the frozen set.
    source_threshold : float, optional
        Uniformity slack: information indices need ``z_source >= 1 - t_s``.
        ``None`` reuses ``threshold``.
    metric : {"error", "z"}
    beta : float
    cache : ChannelCache, optional

    Returns
    -------
    list of LevelCodeSpec
    """
    if metric not in ("error", "z"):
        raise ValueError(f"unknown metric {metric!r}; valid values are 'error', 'z'")
    per_level = target_pe / shaping.r
    specs = []
    for level in range(1, shaping.r + 1):
        chan, src = shaped_level_profiles(shaping, sigma, N, level, mu, cache)
        specs.append(select_sets_asymmetric(
            chan.z, src.z, threshold, level, budget=per_level, source_threshold=source_threshold,
            beta=beta, error_prob=chan.error_prob, metric=metric))
    return specs
