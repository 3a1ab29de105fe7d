"""
Construction D encoding, successive-cancellation decoding and the shaped system.

All block operations are vectorized over a batch axis: bit arrays have shape
``(B, N)`` and points have shape ``(B, N, n)``.  A single block may be passed
without the batch axis.

Random streams (frozen bits, shaping draws) are derived from
``(master_seed, block, level, purpose)`` so encoder and decoder regenerate the
same values independently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .construction import LevelCodeSpec, certify_nesting
from .lattice_core import DiscreteGaussianSpec, PartitionChain, coset_log_masses, flatness_factor

_FROZEN_STREAM = 0
_SHAPING_STREAM = 1
_LLR_CLIP = 500.0

FROZEN = 0
INFO = 1
SHAPING = 2


# -- polar transform -----------------------------------------------------------------


def polar_encode(u) -> np.ndarray:
    """
    ``x = u G_N`` over GF(2) with ``G_N = [[1,0],[1,1]]^{(x)m}``.

    Parameters
    ----------
    u : array_like of {0,1}, shape (..., N)

    Returns
    -------
    ndarray of uint8, same shape
    """
    x = np.array(u, dtype=np.uint8, copy=True)
    N = x.shape[-1]
    if N & (N - 1):
        raise ValueError("block length must be a power of two")
    lead = x.shape[:-1]
    h = 1
    while h < N:
        v = x.reshape(lead + (N // (2 * h), 2, h))
        v[..., 0, :] ^= v[..., 1, :]
        h *= 2
    return x


def polar_encode_integer(u) -> np.ndarray:
    """
    ``u G_N`` with the additions carried out over the integers.

    Reducing the result mod 2 gives :func:`polar_encode`.

    Parameters
    ----------
    u : array_like of {0,1}, shape (..., N)

    Returns
    -------
    ndarray of int64, same shape
    """
    x = np.array(u, dtype=np.int64, copy=True)
    N = x.shape[-1]
    if N & (N - 1):
        raise ValueError("block length must be a power of two")
    lead = x.shape[:-1]
    h = 1
    while h < N:
        v = x.reshape(lead + (N // (2 * h), 2, h))
        v[..., 0, :] += v[..., 1, :]
        h *= 2
    return x


def _boxplus(a, b):
    # exact check-node update: the tanh form keeps relative accuracy (and the
    # sign) for small inputs, the log1p form avoids arctanh(1) for large ones
    small = np.minimum(np.abs(a), np.abs(b)) < 5.0
    with np.errstate(invalid="ignore", divide="ignore"):
        t = 2.0 * np.arctanh(np.tanh(0.5 * a) * np.tanh(0.5 * b))
    s = np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
    big = s + np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b)))
    return np.where(small, t, big)


class _SuccessiveCancellation:
    """
    One SC pass over a stack of LLR arrays.

    ``llr[0]`` drives information decisions, ``llr[-1]`` drives shaping
    draws.  In encoder mode the information bits are given.
    """

    def __init__(self, roles, frozen_vals, info_vals=None, uniforms=None, shortcuts=True):
        self.roles = roles
        self.frozen_vals = frozen_vals
        self.info_vals = info_vals
        self.uniforms = uniforms
        self.shortcuts = shortcuts
        self.u = None

    def run(self, llr):
        K, B, N = llr.shape
        self.u = np.zeros((B, N), dtype=np.uint8)
        x = self._node(np.clip(llr, -_LLR_CLIP, _LLR_CLIP), 0, N)
        return self.u, x

    def _known(self, start, n):
        roles = self.roles[start:start + n]
        u = np.where(roles == FROZEN, self.frozen_vals[:, start:start + n], 0).astype(np.uint8)
        if self.info_vals is not None:
            u = np.where(roles == INFO, self.info_vals[:, start:start + n], u).astype(np.uint8)
        return u

    def _node(self, llr, start, n):
        roles = self.roles[start:start + n]
        if self.shortcuts and n > 1:
            has_shaping = np.any(roles == SHAPING)
            has_info = np.any(roles == INFO)
            if not has_shaping and (self.info_vals is not None or not has_info):
                # every bit already known: rate-0 node, or any node while encoding
                u = self._known(start, n)
                self.u[:, start:start + n] = u
                return polar_encode(u)
            if np.all(roles == INFO):
                # rate-1 node: hard decisions on the code bits are optimal
                x = (llr[0] < 0).astype(np.uint8)
                self.u[:, start:start + n] = polar_encode(x)
                return x
        if n == 1:
            return self._leaf(llr[:, :, 0], start)[:, None]
        h = n // 2
        left, right = llr[:, :, :h], llr[:, :, h:]
        xa = self._node(_boxplus(left, right), start, h)
        sign = 1.0 - 2.0 * xa
        xb = self._node(right + sign[None] * left, start + h, h)
        return np.concatenate([xa ^ xb, xb], axis=1)

    def _leaf(self, llr, i):
        role = self.roles[i]
        if role == FROZEN:
            bit = self.frozen_vals[:, i]
        elif role == INFO and self.info_vals is not None:
            bit = self.info_vals[:, i]
        elif role == INFO:
            bit = (llr[0] < 0).astype(np.uint8)
        else:
            # P(bit = 1) = 1 / (1 + exp(llr)) from the shaping LLR
            p1 = 0.5 * (1.0 - np.tanh(0.5 * llr[-1]))
            bit = (self.uniforms[:, i] < p1).astype(np.uint8)
        bit = np.asarray(bit, dtype=np.uint8)
        self.u[:, i] = bit
        return bit


def sc_decode(llr, roles, frozen_vals, uniforms=None, source_llr=None, shortcuts=True):
    """
    Successive-cancellation decoding of one component polar code.

    Parameters
    ----------
    llr : array_like, shape (B, N)
        LLRs ``log P(x=0|.) - log P(x=1|.)`` of the code bits.
    roles : array_like of int, shape (N,)
        0 frozen, 1 information, 2 shaping.
    frozen_vals : array_like, shape (B, N)
        Values used on frozen indices.
    uniforms : array_like, shape (B, N), optional
        Shared uniforms reproducing the shaping draws.
    source_llr : array_like, shape (B, N), optional
        Prior LLRs of the code bits used for the shaping draws.
    shortcuts : bool
        Use rate-0 / rate-1 node shortcuts.

    Returns
    -------
    (u, x) : ndarray of uint8, each (B, N)
    """
    llr = np.atleast_2d(np.asarray(llr, dtype=float))
    stack = [llr] if source_llr is None else [llr, np.atleast_2d(source_llr)]
    roles = np.asarray(roles, dtype=np.int8)
    if np.any(roles == SHAPING) and (uniforms is None or source_llr is None):
        raise ValueError("shaping indices need uniforms and source_llr")
    run = _SuccessiveCancellation(roles, np.atleast_2d(frozen_vals), None,
                                  None if uniforms is None else np.atleast_2d(uniforms), shortcuts)
    return run.run(np.stack(stack))


def sc_encode_shaped(source_llr, roles, frozen_vals, info_vals, uniforms, shortcuts=True):
    """
    Forward SC pass drawing shaping bits from the source distribution.

    Returns
    -------
    (u, x) : ndarray of uint8, each (B, N)
    """
    run = _SuccessiveCancellation(np.asarray(roles, dtype=np.int8), np.atleast_2d(frozen_vals),
                                  np.atleast_2d(info_vals), np.atleast_2d(uniforms), shortcuts)
    return run.run(np.atleast_2d(np.asarray(source_llr, dtype=float))[None])


# -- lattice specification ---------------------------------------------------------


@dataclass(frozen=True)
class PolarLatticeSpec:
    """
    A complete polar lattice (or shaped polar lattice code).

    Attributes
    ----------
    chain : PartitionChain
    levels : tuple of LevelCodeSpec
        One component code per partition level.
    sigma_tilde : float
        Design noise standard deviation.
    shaping : DiscreteGaussianSpec or None
        Discrete Gaussian shaping; ``None`` for the unshaped lattice.
    master_seed : int
        Seed of the shared frozen and shaping streams.
    frozen_mode : {"zero", "random"}
        Frozen-bit values in unshaped mode (shaped mode always uses random).
    flatness_threshold : float
        Largest admissible flatness factor of the top lattice when shaped.
    metadata : dict
        Free-form design record (rule, budgets, mu, ...).
    """

    chain: PartitionChain
    levels: tuple
    sigma_tilde: float
    shaping: DiscreteGaussianSpec | None = None
    master_seed: int = 0
    frozen_mode: str = "zero"
    flatness_threshold: float = 0.05
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if len(self.levels) != self.chain.r:
            raise ValueError(f"need {self.chain.r} level codes, got {len(self.levels)}")
        if len({lv.N for lv in self.levels}) != 1:
            raise ValueError("all level codes must share N")
        if self.frozen_mode not in ("zero", "random"):
            raise ValueError("frozen_mode must be 'zero' or 'random'")
        if self.master_seed is None:
            raise ValueError("a master seed is required: encoder and decoder share its streams")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.sigma_tilde <= 0:
            raise ValueError("sigma_tilde must be positive")
        if self.shaping is None and any(lv.shaping for lv in self.levels):
            raise ValueError("shaping indices present but no shaping distribution configured")
        if self.shaping is not None and self.shaping.r != self.chain.r:
            raise ValueError("shaping labels must cover every level of the chain")
        cert = certify_nesting(self.levels)
        if not cert.valid:
            raise ValueError(f"component codes are not nested: {cert.witness}")

    @property
    def N(self) -> int:
        return self.levels[0].N

    @property
    def n(self) -> int:
        return self.chain.n

    @property
    def shaped(self) -> bool:
        return self.shaping is not None

    @property
    def mmse_alpha(self) -> float:
        """``sigma_s^2 / (sigma_s^2 + sigma^2)`` (1 when unshaped)."""
        if self.shaping is None:
            return 1.0
        ss = self.shaping.sigma_s
        return ss**2 / (ss**2 + self.sigma_tilde**2)

    @property
    def sum_rate(self) -> float:
        """Message bits per block divided by ``N``."""
        return sum(len(lv.info) for lv in self.levels) / self.N

    def top_flatness(self) -> float:
        """Flatness factor of the top lattice at the MMSE noise level."""
        s = self.sigma_tilde
        if self.shaping is not None:
            ss = self.shaping.sigma_s
            s = ss * s / math.sqrt(ss**2 + s**2)
        return float(flatness_factor(self.chain.top, s))

    def check_flatness(self):
        """Raise ``ValueError`` if a shaped design violates the flatness criterion."""
        if self.shaping is None:
            return
        eps = self.top_flatness()
        if not eps < self.flatness_threshold:
            raise ValueError(f"top-lattice flatness factor {eps:.3g} exceeds {self.flatness_threshold:g}")

    def to_dict(self) -> dict:
        return {
            "chain": self.chain.to_dict(),
            "levels": [lv.to_dict() for lv in self.levels],
            "sigma_tilde": self.sigma_tilde,
            "shaping": None if self.shaping is None else self.shaping.to_dict(),
            "master_seed": int(self.master_seed),
            "frozen_mode": self.frozen_mode,
            "flatness_threshold": self.flatness_threshold,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolarLatticeSpec":
        return cls(
            PartitionChain.from_dict(d["chain"]),
            tuple(LevelCodeSpec.from_dict(lv) for lv in d["levels"]),
            float(d["sigma_tilde"]),
            None if d.get("shaping") is None else DiscreteGaussianSpec.from_dict(d["shaping"]),
            int(d.get("master_seed", 0)),
            d.get("frozen_mode", "zero"),
            float(d.get("flatness_threshold", 0.05)),
            dict(d.get("metadata", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "PolarLatticeSpec":
        return cls.from_dict(json.loads(text))


def _stream(spec: PolarLatticeSpec, block: int, level: int, purpose: int):
    return np.random.default_rng([int(spec.master_seed), int(block), int(level), purpose])


def _frozen_values(spec: PolarLatticeSpec, blocks, level: int) -> np.ndarray:
    N = spec.N
    if spec.frozen_mode == "zero" and not spec.shaped:
        return np.zeros((len(blocks), N), dtype=np.uint8)
    return np.stack([_stream(spec, b, level, _FROZEN_STREAM).integers(0, 2, N, dtype=np.uint8)
                     for b in blocks])


def _shaping_uniforms(spec: PolarLatticeSpec, blocks, level: int) -> np.ndarray:
    return np.stack([_stream(spec, b, level, _SHAPING_STREAM).random(spec.N) for b in blocks])


def _blocks(block, B):
    return np.arange(B) + int(block)


# -- codewords -----------------------------------------------------------------------


@dataclass
class Codeword:
    """
    Encoded block(s).

    Attributes
    ----------
    u : ndarray of uint8, shape (B, r, N)
        Input bits of every level (information, frozen and shaping).
    x : ndarray, shape (B, N, n)
        Transmitted points.
    frozen : ndarray of uint8, shape (B, r, N)
        Frozen values that were applied (zero off the frozen set).
    block : int
        Index of the first block; selects the shared random streams.
    bottom : ndarray, shape (B, N, n)
        Bottom-lattice component (zero when shaped).
    """

    u: np.ndarray
    x: np.ndarray
    frozen: np.ndarray
    block: int = 0
    bottom: np.ndarray | None = None

    def reencode(self, spec: PolarLatticeSpec) -> np.ndarray:
        """Point obtained by re-encoding the stored bits."""
        if spec.shaped:
            pts = spec.chain.offset(np.moveaxis(polar_encode(self.u), 1, -1))
            return spec.chain.reduce(pts, spec.chain.r)
        pts = spec.chain.offset(np.moveaxis(polar_encode_integer(self.u), 1, -1))
        return pts + (0.0 if self.bottom is None else self.bottom)

    def info_bits(self, spec: PolarLatticeSpec) -> list:
        """Per-level information bits, each of shape (B, k_l)."""
        return [self.u[:, i, list(lv.info)] for i, lv in enumerate(spec.levels)]

    def to_dict(self) -> dict:
        return {
            "u": self.u.tolist(),
            "x": self.x.tolist(),
            "frozen": self.frozen.tolist(),
            "block": int(self.block),
            "bottom": None if self.bottom is None else self.bottom.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Codeword":
        bottom = d.get("bottom")
        return cls(np.asarray(d["u"], dtype=np.uint8), np.asarray(d["x"], dtype=float),
                   np.asarray(d["frozen"], dtype=np.uint8), int(d.get("block", 0)),
                   None if bottom is None else np.asarray(bottom, dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Codeword":
        return cls.from_dict(json.loads(text))


def _as_batches(info_bits, spec):
    arrays = [np.asarray(bits) for bits in info_bits]
    batched = {a.shape[0] for a in arrays if a.ndim == 2}
    if len(batched) > 1:
        raise ValueError("all levels need the same number of blocks")
    B = batched.pop() if batched else 1
    out = []
    for lv, a in zip(spec.levels, arrays):
        b = np.broadcast_to(a.astype(np.uint8), (B, a.shape[-1])) if a.ndim == 1 else a.astype(np.uint8)
        if a.ndim > 2 or b.shape[-1] != len(lv.info):
            raise ValueError(f"level {lv.level}: expected {len(lv.info)} information bits, got shape {a.shape}")
        if np.any(a > 1) or np.any(a < 0):
            raise ValueError("bits must be 0 or 1")
        out.append(b)
    return out, B


def encode_construction_d(spec: PolarLatticeSpec, info_bits, bottom_points=None, block: int = 0) -> Codeword:
    """
    Lattice point ``sum_l g_l (u_l G_N) + z`` with ``z`` in the bottom lattice.

    The products ``u_l G_N`` are summed over the integers, not mod 2, so the
    carries of each level land in the higher levels and the set of points
    is closed under addition.

    Parameters
    ----------
    spec : PolarLatticeSpec
        Unshaped specification.
    info_bits : sequence of array_like
        Level ``l`` entry has shape (k_l,) or (B, k_l).
    bottom_points : array_like, shape (N, n) or (B, N, n), optional
        Points of the bottom lattice added coordinatewise; zero by default.
    block : int
        Index of the first block (selects random frozen values).

    Returns
    -------
    Codeword
        ``x`` holds the lattice points, shape (B, N, n).
    """
    if spec.shaped:
        raise ValueError("spec is shaped; use encode_shaped")
    if len(info_bits) != spec.chain.r:
        raise ValueError(f"need information bits for {spec.chain.r} levels")
    bits, B = _as_batches(info_bits, spec)
    N, n, r = spec.N, spec.n, spec.chain.r
    blocks = _blocks(block, B)
    u = np.zeros((B, r, N), dtype=np.uint8)
    frozen = np.zeros((B, r, N), dtype=np.uint8)
    for i, lv in enumerate(spec.levels):
        fz = _frozen_values(spec, blocks, lv.level)
        mask = lv.roles() == FROZEN
        frozen[:, i, mask] = fz[:, mask]
        u[:, i] = frozen[:, i]
        u[:, i, list(lv.info)] = bits[i]
    if bottom_points is None:
        z = np.zeros((B, N, n))
    else:
        z = np.broadcast_to(np.asarray(bottom_points, dtype=float).reshape(-1, N, n), (B, N, n)).copy()
        if not np.all(spec.chain.bottom.contains(z)):
            raise ValueError("bottom_points must lie in the bottom lattice")
    x = spec.chain.offset(np.moveaxis(polar_encode_integer(u), 1, -1)) + z
    return Codeword(u, x, frozen, int(block), z)


def _source_llr_table(spec: PolarLatticeSpec, level: int) -> np.ndarray:
    """``log P(x_l = 0 | prefix) - log P(x_l = 1 | prefix)`` indexed by prefix value."""
    logm = coset_log_masses(spec.chain, spec.shaping, level)
    half = 2 ** (level - 1)
    with np.errstate(invalid="ignore"):
        out = logm[:half] - logm[half:]
    return np.nan_to_num(out, nan=0.0, posinf=_LLR_CLIP, neginf=-_LLR_CLIP)


def _prefix_values(xbits_lower) -> np.ndarray:
    # xbits_lower: (B, l-1, N) -> natural binary value per symbol
    k = xbits_lower.shape[1]
    weights = (1 << np.arange(k)).astype(np.int64)
    return np.tensordot(xbits_lower.astype(np.int64), weights, axes=([1], [0])) if k else \
        np.zeros((xbits_lower.shape[0], xbits_lower.shape[2]), dtype=np.int64)


def encode_shaped(spec: PolarLatticeSpec, info_bits, block: int = 0, shortcuts: bool = True) -> Codeword:
    """
    Shaped encoder: information, seeded frozen and drawn shaping bits per level.

    Shaping bits follow ``P(u^i | u^{1:i-1}, x_{1:l-1})`` via an SC forward
    pass on the source LLRs.  The transmitted point is the label point reduced
    into the fundamental box of the bottom lattice.

    Parameters
    ----------
    spec : PolarLatticeSpec
        Shaped specification.
    info_bits : sequence of array_like
    block : int
        Index of the first block (selects the shared streams).
    shortcuts : bool

    Returns
    -------
    Codeword
    """
    if not spec.shaped:
        raise ValueError("spec has no shaping distribution; use encode_construction_d")
    if len(info_bits) != spec.chain.r:
        raise ValueError(f"need information bits for {spec.chain.r} levels")
    bits, B = _as_batches(info_bits, spec)
    N, r = spec.N, spec.chain.r
    blocks = _blocks(block, B)
    u = np.zeros((B, r, N), dtype=np.uint8)
    xb = np.zeros((B, r, N), dtype=np.uint8)
    frozen = np.zeros((B, r, N), dtype=np.uint8)
    for i, lv in enumerate(spec.levels):
        roles = lv.roles()
        fz = _frozen_values(spec, blocks, lv.level)
        frozen[:, i, roles == FROZEN] = fz[:, roles == FROZEN]
        info = np.zeros((B, N), dtype=np.uint8)
        info[:, list(lv.info)] = bits[i]
        src = _source_llr_table(spec, lv.level)[_prefix_values(xb[:, :i])]
        uni = _shaping_uniforms(spec, blocks, lv.level)
        u[:, i], xb[:, i] = sc_encode_shaped(src, roles, frozen[:, i], info, uni, shortcuts)
    x = spec.chain.reduce(spec.chain.offset(np.moveaxis(xb, 1, -1)), r)
    return Codeword(u, x, frozen, int(block), None)


# -- decoding ------------------------------------------------------------------------


def coset_posterior_llr(chain: PartitionChain, level: int, y, lower_bits, sigma: float,
                        shaping: DiscreteGaussianSpec | None = None) -> np.ndarray:
    """
    LLR of the level-``l`` label given the output and the lower labels.

    Without shaping this is the ratio of the mod-``Lambda_l`` densities of the
    two candidate cosets at ``y``.  With discrete Gaussian shaping the same
    ratio is taken at the MMSE-scaled output ``alpha (y - c) + c`` with noise
    ``sigma_s sigma / sqrt(sigma_s^2 + sigma^2)``; this equals the
    a-posteriori LLR under the shaping prior.

    Parameters
    ----------
    chain : PartitionChain
    level : int
    y : ndarray, shape (..., N, n)
    lower_bits : ndarray of {0,1}, shape (..., level-1, N)
    sigma : float
    shaping : DiscreteGaussianSpec, optional

    Returns
    -------
    ndarray, shape (..., N)
    """
    y = np.asarray(y, dtype=float)
    lower_bits = np.asarray(lower_bits)
    off0 = chain.offset(np.moveaxis(lower_bits, -2, -1)) if level > 1 else np.zeros_like(y)
    off1 = off0 + chain.coset_reps[level - 1]
    t, s = y, sigma
    if shaping is not None:
        ss, c = shaping.sigma_s, shaping.center
        t = ss**2 / (ss**2 + sigma**2) * (y - c) + c
        s = ss * sigma / math.sqrt(ss**2 + sigma**2)
    lat = chain.lattice(level)
    return lat.periodic_logpdf(t - off0, s) - lat.periodic_logpdf(t - off1, s)


def level_channel_llr(spec: PolarLatticeSpec, y, lower_bits, level: int, sigma: float) -> np.ndarray:
    """:func:`coset_posterior_llr` for the chain and shaping of ``spec``."""
    return coset_posterior_llr(spec.chain, level, y, lower_bits, sigma, spec.shaping)


@dataclass
class DecodeResult:
    """
    Output of :func:`multistage_decode`.

    Attributes
    ----------
    u : ndarray of uint8, shape (B, r, N)
    x : ndarray, shape (B, N, n)
        Reconstructed points.
    """

    u: np.ndarray
    x: np.ndarray

    def info_bits(self, spec: PolarLatticeSpec) -> list:
        return [self.u[:, i, list(lv.info)] for i, lv in enumerate(spec.levels)]


def sc_decode_level(spec: PolarLatticeSpec, level: int, y, lower_bits, sigma: float | None = None,
                    block: int = 0, shortcuts: bool = True):
    """
    SC decoding of one level given the lower-level code bits.

    Parameters
    ----------
    spec : PolarLatticeSpec
    level : int
        1-based.
    y : ndarray, shape (B, N, n)
    lower_bits : ndarray, shape (B, level-1, N)
        Decided code bits of levels ``1..level-1``.
    sigma : float, optional
        Channel noise standard deviation (defaults to the design value).
    block : int
    shortcuts : bool

    Returns
    -------
    (u, x) : ndarray of uint8, each (B, N)
        Input bits and code bits of this level.
    """
    sigma = spec.sigma_tilde if sigma is None else float(sigma)
    lv = spec.levels[level - 1]
    B = y.shape[0]
    blocks = _blocks(block, B)
    llr = level_channel_llr(spec, y, lower_bits, level, sigma)
    fz = _frozen_values(spec, blocks, level)
    if spec.shaped:
        src = _source_llr_table(spec, level)[_prefix_values(lower_bits)]
        uni = _shaping_uniforms(spec, blocks, level)
        return sc_decode(llr, lv.roles(), fz, uni, src, shortcuts)
    return sc_decode(llr, lv.roles(), fz, shortcuts=shortcuts)


def _as_points(spec, y):
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y.reshape(1, spec.N, spec.n) if spec.n > 1 or y.size == spec.N else y.reshape(-1, spec.N, spec.n)
    elif y.ndim == 2:
        y = y[..., None] if spec.n == 1 and y.shape[-1] == spec.N else y.reshape(-1, spec.N, spec.n)
    if y.shape[1:] != (spec.N, spec.n):
        raise ValueError(f"observations must have shape (B, {spec.N}, {spec.n})")
    return y


def multistage_decode(spec: PolarLatticeSpec, y, sigma: float | None = None, block: int = 0,
                      shortcuts: bool = True) -> DecodeResult:
    """
    Decode levels ``1..r`` in turn, then the bottom lattice by rounding.

    Unshaped points are peeled level by level: the integer sum of each
    decided level is subtracted before the next one is decoded.  Shaped
    points carry plain coset labels and condition on the lower code bits.

    Parameters
    ----------
    spec : PolarLatticeSpec
    y : array_like
        Observations, shape (B, N, n), (N, n), or flat (N*n,) per block.
    sigma : float, optional
        Channel noise standard deviation; defaults to ``spec.sigma_tilde``.
    block : int
        Index of the first block (must match the encoder).
    shortcuts : bool

    Returns
    -------
    DecodeResult
    """
    y = _as_points(spec, y)
    B, N = y.shape[0], spec.N
    r = spec.chain.r
    u = np.zeros((B, r, N), dtype=np.uint8)
    xb = np.zeros((B, r, N), dtype=np.uint8)
    if spec.shaped:
        for i in range(r):
            u[:, i], xb[:, i] = sc_decode_level(spec, i + 1, y, xb[:, :i], sigma, block, shortcuts)
        return DecodeResult(u, spec.chain.reduce(spec.chain.offset(np.moveaxis(xb, 1, -1)), r))
    # peel off the integer contribution of every decided level; what is left
    # lies in Lambda_{l-1} and its level-l label is u_l G_N mod 2
    known = np.zeros_like(y)
    for i in range(r):
        none = np.zeros((B, i, N), dtype=np.uint8)
        u[:, i], _ = sc_decode_level(spec, i + 1, y - known, none, sigma, block, shortcuts)
        known = known + polar_encode_integer(u[:, i])[..., None] * spec.chain.coset_reps[i]
    return DecodeResult(u, known + spec.chain.nearest_bottom(y - known))


def read_observations(path, spec: PolarLatticeSpec) -> np.ndarray:
    """
    Load observations stored one block per line as whitespace-separated floats.

    Returns
    -------
    ndarray, shape (B, N, n)
    """
    rows = []
    with open(path) as fh:
        for k, line in enumerate(fh, 1):
            if not line.strip():
                continue
            vals = np.array(line.split(), dtype=float)
            if vals.size != spec.N * spec.n:
                raise ValueError(f"line {k}: expected {spec.N * spec.n} values, got {vals.size}")
            rows.append(vals.reshape(spec.N, spec.n))
    if not rows:
        raise ValueError("no observations found")
    return np.stack(rows)


def decode_file(spec: PolarLatticeSpec, path, sigma: float | None = None, block: int = 0) -> DecodeResult:
    """Decode every block of an observation file, see :func:`read_observations`."""
    return multistage_decode(spec, read_observations(path, spec), sigma, block)
