"""
Capacities, shaped mutual information, VNR bookkeeping and union bounds.

All information quantities are in bits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr

from .codec import PolarLatticeSpec, coset_posterior_llr
from .construction import evolve_profile
from .channels import ModLevelChannel, quantize_channel
from .lattice_core import (
    DiscreteGaussianSpec,
    Lattice,
    PartitionChain,
    _check_positive,
    coset_log_masses,
    discrete_gaussian_pmf,
)

LOG2 = math.log(2.0)


# -- mod-lattice capacities --------------------------------------------------------------


def _info_density(lattice: Lattice, t, sigma: float) -> np.ndarray:
    # f log2(V f): nonnegative integrand whose mean is the capacity
    logf = lattice.periodic_logpdf(t, sigma)
    f = np.exp(logf)
    return f * (logf + math.log(lattice.volume)) / LOG2


def capacity_mod_lattice(lattice: Lattice, sigma: float, tol: float = 1e-9) -> float:
    """
    Capacity ``log2 V(Lambda) - h(Lambda, sigma^2)`` of the mod-``Lambda`` channel.

    Parameters
    ----------
    lattice : Lattice
        One- or two-dimensional lattice.
    sigma : float
        Noise standard deviation per dimension.
    tol : float
        Absolute accuracy target.

    Returns
    -------
    float
        Bits per channel use (per ``n`` dimensions).

    Notes
    -----
    The integrand is written as ``f log2(V f)`` so the result does not suffer
    from cancellation when the aliased noise is nearly uniform.  In 1-D the
    fundamental interval is integrated adaptively; in 2-D the periodic
    trapezoidal rule is applied on the smallest square period and refined until
    two successive grids agree.
    """
    sigma = _check_positive("sigma", sigma)
    n = lattice.dimension
    if n == 1:
        V = lattice.volume
        val, _ = integrate.quad(lambda t: float(_info_density(lattice, np.array([[t]]), sigma)[0]),
                                -V / 2, V / 2, points=[0.0], epsabs=tol * 1e-2, epsrel=1e-12, limit=500)
        return max(0.0, float(val))
    if n != 2:
        raise ValueError("only one- and two-dimensional lattices are supported")
    L = lattice.square_period
    # start near sigma/4 resolution and double until converged
    m = int(min(max(64, 2 ** math.ceil(math.log2(4 * L / sigma))), 1024))
    prev = None
    while True:
        g = (np.arange(m) + 0.5) * (L / m) - L / 2
        tx, ty = np.meshgrid(g, g, indexing="ij")
        pts = np.stack([tx.ravel(), ty.ravel()], axis=-1)
        # mean over the square times its area L^2, scaled by V / L^2
        val = float(np.mean(_info_density(lattice, pts, sigma))) * lattice.volume
        if prev is not None and abs(val - prev) < tol or m >= 2048:
            return max(0.0, val)
        prev, m = val, 2 * m


def capacity_partition_level(chain: PartitionChain, level: int, sigma: float) -> float:
    """
    ``C(Lambda_{l-1} / Lambda_l, sigma^2) = C(Lambda_l) - C(Lambda_{l-1})``.

    Parameters
    ----------
    chain : PartitionChain
    level : int
        1-based level.
    sigma : float

    Returns
    -------
    float
    """
    if not 1 <= level <= chain.r:
        raise ValueError(f"level must be in 1..{chain.r}")
    return capacity_mod_lattice(chain.lattice(level), sigma) - capacity_mod_lattice(chain.lattice(level - 1), sigma)


def chain_capacities(chain: PartitionChain, sigma: float) -> np.ndarray:
    """Capacities of all levels plus ``C(Lambda_0)`` and ``C(Lambda_r)``.

    Returns
    -------
    ndarray, shape (r + 2,)
        ``[C(Lambda_0), C_1, ..., C_r, C(Lambda_r)]``; the middle entries
        telescope exactly.
    """
    mods = np.array([capacity_mod_lattice(chain.lattice(l), sigma) for l in range(chain.r + 1)])
    return np.r_[mods[0], np.diff(mods), mods[-1]]


# -- gap accounting ----------------------------------------------------------------------


@dataclass(frozen=True)
class GapReport:
    """
    Capacity losses and the resulting gap to the Poltyrev limit.

    Attributes
    ----------
    eps1 : float
        Capacity of the mod-top-lattice channel (loss from the top lattice).
    eps2_bound : float
        Always 0: this loss is nonnegative and neglected.
    eps3 : float
        Total capacity loss of the component codes ``sum_l (C_l - R_l)``.
    log_vnr_gap_bits : float
        ``(2/n)(eps1 + eps3)``.
    gap_db : float
        The same gap in decibels.
    level_capacities, level_rates : tuple of float
    capacity_rule_violation : bool
        True when some rate exceeds its level capacity.
    """

    eps1: float
    eps2_bound: float
    eps3: float
    log_vnr_gap_bits: float
    gap_db: float
    level_capacities: tuple = ()
    level_rates: tuple = ()
    capacity_rule_violation: bool = False

    def to_dict(self) -> dict:
        return {
            "eps1": self.eps1,
            "eps2_bound": self.eps2_bound,
            "eps3": self.eps3,
            "log_vnr_gap_bits": self.log_vnr_gap_bits,
            "gap_db": self.gap_db,
            "level_capacities": list(self.level_capacities),
            "level_rates": list(self.level_rates),
            "capacity_rule_violation": self.capacity_rule_violation,
        }


def gap_from_epsilons(eps1: float, eps3: float, n: int, capacities=(), rates=()) -> GapReport:
    """
    Gap bound for given capacity losses.

    Parameters
    ----------
    eps1, eps3 : float
    n : int
        Dimension of the partition chain.

    Returns
    -------
    GapReport
    """
    bits = 2.0 / n * (eps1 + eps3)
    violation = bool(np.any(np.asarray(rates, float) > np.asarray(capacities, float) + 1e-12)) if len(rates) else eps3 < 0
    return GapReport(float(eps1), 0.0, float(eps3), bits, bits * 10 * math.log10(2.0),
                     tuple(map(float, capacities)), tuple(map(float, rates)), violation)


def gap_report(spec: PolarLatticeSpec, sigma: float | None = None) -> GapReport:
    """
    Gap bound of an unshaped polar lattice at its design noise level.

    Parameters
    ----------
    spec : PolarLatticeSpec
    sigma : float, optional
        Defaults to ``spec.sigma_tilde``.

    Returns
    -------
    GapReport
        ``capacity_rule_violation`` is set when a rate exceeds its capacity.
    """
    sigma = spec.sigma_tilde if sigma is None else float(sigma)
    caps = chain_capacities(spec.chain, sigma)
    levels = caps[1:-1]
    rates = np.array([lv.rate for lv in spec.levels])
    return gap_from_epsilons(caps[0], float(np.sum(levels - rates)), spec.n, levels, rates)


# -- VNR / SNR axes ------------------------------------------------------------------------


def normalized_volume(spec: PolarLatticeSpec) -> float:
    """``V(L)^{2/(nN)}`` of the polar lattice."""
    rate = sum(lv.rate for lv in spec.levels)
    return 2.0 ** (-2.0 * rate / spec.n) * spec.chain.bottom_volume ** (2.0 / spec.n)


def vnr_db(spec: PolarLatticeSpec, sigma: float) -> float:
    """Volume-to-noise ratio ``V(L)^{2/(nN)} / (2 pi e sigma^2)`` in dB."""
    sigma = _check_positive("sigma", sigma)
    return 10 * math.log10(normalized_volume(spec) / (2 * math.pi * math.e * sigma**2))


def sigma_from_vnr(spec: PolarLatticeSpec, vnr: float) -> float:
    """Noise standard deviation at which the lattice has the given VNR (dB)."""
    return math.sqrt(normalized_volume(spec) / (2 * math.pi * math.e * 10 ** (vnr / 10)))


def shaped_power(shaping: DiscreteGaussianSpec) -> float:
    """Average power per dimension of the product discrete Gaussian."""
    return shaping.power()


def snr_db(shaping: DiscreteGaussianSpec, sigma: float) -> float:
    """``10 log10(P / sigma^2)`` with ``P`` the true discrete Gaussian power."""
    return 10 * math.log10(shaped_power(shaping) / sigma**2)


def sigma_from_snr(shaping: DiscreteGaussianSpec, snr: float) -> float:
    """Noise standard deviation giving ``snr`` dB for this shaping."""
    return math.sqrt(shaped_power(shaping) / 10 ** (snr / 10))


# -- union bound ---------------------------------------------------------------------------


def bottom_error_probability(chain: PartitionChain, sigma: float) -> float:
    """
    Probability that one coordinate block leaves the Voronoi cell of the bottom lattice.

    Exact for the cubic bottom lattices of both chains.
    """
    lat = chain.bottom
    if not lat.is_cubic:
        raise ValueError("bottom lattice must be cubic")
    side = abs(lat.basis[0, 0])
    # log P(|w| < side/2) per coordinate
    log_in = math.log1p(-2 * math.exp(float(log_ndtr(-side / (2 * sigma)))))
    return -math.expm1(chain.n * log_in)


def union_bound_pe(spec: PolarLatticeSpec, sigma: float | None = None, metric: str = "z",
                   mu: int = 128) -> float:
    """
    Union bound on the block error probability under multistage decoding.

    ``sum_l sum_{i in I_l} Z_l(i) + N P(noise leaves the bottom Voronoi cell)``.

    Parameters
    ----------
    spec : PolarLatticeSpec
    sigma : float, optional
        Noise level; at a value other than the design one the per-level
        reliabilities are recomputed (unshaped specs only).
    metric : {"z", "error"}
        Per-index term: Bhattacharyya parameter or bit error probability.
    mu : int
        Quantization used when recomputing.

    Returns
    -------
    float
    """
    if metric not in ("z", "error"):
        raise ValueError(f"unknown metric {metric!r}; valid values are 'z', 'error'")
    design = sigma is None or math.isclose(sigma, spec.sigma_tilde, rel_tol=1e-12)
    sigma = spec.sigma_tilde if sigma is None else float(sigma)
    total = 0.0
    for lv in spec.levels:
        if not lv.info:
            continue
        if design:
            total += lv.error_bound(metric)
            continue
        if spec.shaped:
            raise ValueError("off-design bounds are only available for unshaped specs")
        prof = evolve_profile(quantize_channel(ModLevelChannel(spec.chain, lv.level, sigma), mu), lv.N, mu)
        vals = prof.z if metric == "z" else prof.error_prob
        total += math.fsum(vals[list(lv.info)])
    if not spec.shaped:
        total += spec.N * bottom_error_probability(spec.chain, sigma)
    return float(total)


# -- shaped mutual information -------------------------------------------------------------


@dataclass(frozen=True)
class MIEstimate:
    """Monte Carlo estimate with its standard error (bits)."""

    value: float
    stderr: float
    samples: int


def _sample_shaped(chain: PartitionChain, shaping: DiscreteGaussianSpec, size: int, rng):
    spec = DiscreteGaussianSpec(shaping.sigma_s, shaping.r, shaping.required_radius(), shaping.center,
                                shaping.mass_tol)
    pts, pmf = discrete_gaussian_pmf(spec)
    return rng.choice(pts, size=(size, chain.n), p=pmf).astype(float)


def _antithetic_outputs(lam, sigma, rng):
    w = sigma * rng.standard_normal(lam.shape)
    return lam + w, lam - w


def _conditional_entropy(chain, shaping, level) -> float:
    # H(X_l | X_{1:l-1}) from the exact coset masses
    joint = coset_log_masses(chain, shaping, level)
    prev = coset_log_masses(chain, shaping, level - 1)
    p = np.exp(joint)
    cond = joint - np.r_[prev, prev]
    return float(-np.sum(p[np.isfinite(cond)] * cond[np.isfinite(cond)]) / LOG2)


def level_mutual_info_shaped(chain: PartitionChain, shaping: DiscreteGaussianSpec, sigma: float, level: int,
                             samples: int = 10**6, seed: int = 0) -> MIEstimate:
    """
    ``I(Y; X_l | X_{1:l-1})`` for discrete Gaussian input.

    The conditional source entropy is exact; the posterior entropy
    ``H(X_l | Y, X_{1:l-1})`` is estimated by Monte Carlo with antithetic noise
    pairs.

    Parameters
    ----------
    chain : PartitionChain
        Supplies the labelling; any level up to ``chain.r`` (or more for the
        1-D chain, which is extended as needed).
    shaping : DiscreteGaussianSpec
    sigma : float
    level : int
    samples : int
        Number of input draws (each used with two antithetic noise values).
    seed : int

    Returns
    -------
    MIEstimate
    """
    sigma = _check_positive("sigma", sigma)
    if level > chain.r:
        if chain.n != 1:
            raise ValueError(f"level must be at most {chain.r}")
        chain = PartitionChain.one_dimensional(level)
    if shaping.r < level:
        shaping = DiscreteGaussianSpec(shaping.sigma_s, level, shaping.support_radius, shaping.center,
                                       shaping.mass_tol)
    rng = np.random.default_rng([seed, level])
    h_src = _conditional_entropy(chain, shaping, level)
    batch = 1 << 16
    vals = []
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        lam = _sample_shaped(chain, shaping, m, rng)
        bits = chain.labels(lam, level)
        lower = bits[:, :level - 1, None]
        pair = []
        for y in _antithetic_outputs(lam, sigma, rng):
            llr = coset_posterior_llr(chain, level, y[:, None, :], lower, sigma, shaping)[:, 0]
            sgn = np.where(bits[:, level - 1] == 0, 1.0, -1.0)
            # -log2 P(x_l | y, prefix) = log2(1 + exp(-sgn llr))
            pair.append(np.logaddexp(0.0, -sgn * llr) / LOG2)
        vals.append(0.5 * (pair[0] + pair[1]))
        done += m
    h = np.concatenate(vals)
    est = h_src - float(np.mean(h))
    return MIEstimate(est, float(np.std(h, ddof=1) / math.sqrt(len(h))), int(samples))


def total_mutual_info_shaped(chain: PartitionChain, shaping: DiscreteGaussianSpec, sigma: float,
                             samples: int = 10**6, seed: int = 0) -> MIEstimate:
    """
    ``I(Y; X_{1:r})`` for discrete Gaussian input, estimated jointly.

    Used to check the chain rule against :func:`level_mutual_info_shaped`.
    """
    sigma = _check_positive("sigma", sigma)
    r = chain.r
    rng = np.random.default_rng([seed, 10_000])
    logm = coset_log_masses(chain, shaping, r)
    h_src = float(-np.sum(np.exp(logm) * logm) / LOG2)
    labels = (np.arange(2**r)[:, None] >> np.arange(r)) & 1
    offsets = chain.offset(labels)
    ss, c = shaping.sigma_s, shaping.center
    alpha = ss**2 / (ss**2 + sigma**2)
    st = ss * sigma / math.sqrt(ss**2 + sigma**2)
    lat = chain.lattice(r)
    batch = 1 << 15
    vals = []
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        lam = _sample_shaped(chain, shaping, m, rng)
        idx = chain.labels(lam, r) @ (1 << np.arange(r))
        pair = []
        for y in _antithetic_outputs(lam, sigma, rng):
            t = alpha * (y - c) + c
            ll = lat.periodic_logpdf(t[:, None, :] - offsets[None], st)
            post = ll[np.arange(m), idx] - np.logaddexp.reduce(ll, axis=1)
            pair.append(-post / LOG2)
        vals.append(0.5 * (pair[0] + pair[1]))
        done += m
    h = np.concatenate(vals)
    return MIEstimate(h_src - float(np.mean(h)), float(np.std(h, ddof=1) / math.sqrt(len(h))), int(samples))


# -- curves --------------------------------------------------------------------------------


@dataclass
class CapacityCurve:
    """
    Per-level information values along a noise axis.

    Attributes
    ----------
    axis : ndarray
        Noise standard deviations or SNR values (dB).
    values : ndarray, shape (levels, len(axis))
        Row ``l-1`` belongs to level ``l``.
    axis_name : str
        ``"sigma"`` or ``"snr_db"``.
    stderr : ndarray, optional
        Monte Carlo standard errors, same shape as ``values``.
    """

    axis: np.ndarray
    values: np.ndarray
    axis_name: str = "sigma"
    stderr: np.ndarray | None = field(default=None)

    def rows(self):
        for lvl, row in enumerate(self.values, start=1):
            for a, v in zip(self.axis, row):
                yield float(a), lvl, float(v)

    def write_csv(self, path):
        """Write columns ``sigma_or_snr, level, value``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sigma_or_snr", "level", "value"])
            for a, lvl, v in self.rows():
                w.writerow([repr(a), lvl, repr(v)])


def capacity_curve(chain: PartitionChain, sigmas) -> CapacityCurve:
    """Level capacities of ``chain`` on a grid of noise levels."""
    sigmas = np.asarray(sigmas, dtype=float)
    if sigmas.size == 0:
        raise ValueError("empty sigma grid")
    vals = np.array([chain_capacities(chain, s)[1:-1] for s in sigmas]).T
    return CapacityCurve(sigmas, vals, "sigma")


def shaped_mi_curve(chain: PartitionChain, shaping: DiscreteGaussianSpec, snrs, samples: int = 10**5,
                    seed: int = 0) -> CapacityCurve:
    """Per-level mutual information under shaping on an SNR grid (dB)."""
    snrs = np.asarray(snrs, dtype=float)
    if snrs.size == 0:
        raise ValueError("empty SNR grid")
    vals = np.zeros((chain.r, len(snrs)))
    errs = np.zeros_like(vals)
    for j, snr in enumerate(snrs):
        s = sigma_from_snr(shaping, snr)
        for lvl in range(1, chain.r + 1):
            est = level_mutual_info_shaped(chain, shaping, s, lvl, samples, seed)
            vals[lvl - 1, j], errs[lvl - 1, j] = est.value, est.stderr
    return CapacityCurve(snrs, vals, "snr_db", errs)
