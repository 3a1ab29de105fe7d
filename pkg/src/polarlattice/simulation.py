"""
Seeded Monte Carlo error-rate experiments.

Trials are processed in batches.  Batch ``b`` of grid point ``p`` uses the
random stream ``(master_seed, p, b)`` for information bits and noise and the
block indices ``b * batch_size + j`` for the code's shared streams, so a run
is reproducible and independent of the number of worker threads.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from .analysis import sigma_from_snr, sigma_from_vnr
from .codec import PolarLatticeSpec, encode_construction_d, encode_shaped, multistage_decode

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

# decoder noise level used at an infinite axis value
ZERO_NOISE_SIGMA = 1e-3
CSV_COLUMNS = ["axis_db", "trials", "block_errors", "bler", "bler_ci_lo", "bler_ci_hi", "ser", "runtime_s"]


def wilson_interval(errors: int, trials: int, confidence: float = 0.95):
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    ci = binomtest(int(errors), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class ExperimentPlan:
    """
    What to simulate and when to stop.

    Attributes
    ----------
    spec_path : str
        JSON file of the :class:`PolarLatticeSpec`; relative paths are taken
        relative to the plan file.
    points : list of float
        Strictly increasing axis values in dB (``inf`` means no noise).
    axis : {"vnr", "snr"}
        VNR for unshaped lattices, SNR for shaped ones.
    min_errors : int
        Stop a point after this many block errors.
    max_trials : int
        Stop a point after this many blocks.
    master_seed : int
    batch_size : int
    record_timing : bool
        Store wall-clock time; off gives byte-identical outputs across runs.
    """

    spec_path: str = ""
    points: list = field(default_factory=list)
    axis: str = "vnr"
    min_errors: int = 100
    max_trials: int = 10**6
    master_seed: int = 0
    batch_size: int = 256
    record_timing: bool = True

    def __post_init__(self):
        self.points = [float(p) for p in self.points]
        if self.axis not in ("vnr", "snr"):
            raise ValueError(f"unknown axis {self.axis!r}; valid values are 'vnr', 'snr'")
        if self.min_errors < 1 or self.max_trials < self.min_errors:
            raise ValueError("need 1 <= min_errors <= max_trials")
        if not self.points:
            raise ValueError("plan has no grid points")
        if any(b <= a for a, b in zip(self.points, self.points[1:])):
            raise ValueError("grid points must be strictly increasing")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown plan keys: {sorted(unknown)}")
        return cls(**known)

    @classmethod
    def from_file(cls, path) -> "ExperimentPlan":
        """Read a plan from a ``.json`` or ``.toml`` file."""
        path = Path(path)
        text = path.read_text()
        d = tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
        plan = cls.from_dict(d)
        if plan.spec_path and not Path(plan.spec_path).is_absolute():
            plan.spec_path = str(path.parent / plan.spec_path)
        return plan

    def to_dict(self) -> dict:
        return asdict(self)

    def load_spec(self) -> PolarLatticeSpec:
        path = Path(self.spec_path)
        if not path.is_file():
            raise FileNotFoundError(f"spec file not found: {path}")
        return PolarLatticeSpec.from_json(path.read_text())


@dataclass
class TrialRecord:
    """
    Outcome at one grid point.

    Attributes
    ----------
    axis_db : float
    sigma : float
    trials : int
    block_errors : int
    symbol_errors : int
        Erroneous coordinates, out of ``trials * n * N``.
    first_error_level : list of int
        Entry ``l-1`` counts blocks whose first wrong level is ``l``; the last
        entry counts blocks wrong only in the bottom lattice.
    coordinates : int
        ``n * N``.
    runtime_s : float
    """

    axis_db: float
    sigma: float
    trials: int
    block_errors: int
    symbol_errors: int
    first_error_level: list
    coordinates: int
    runtime_s: float = field(default=0.0, compare=False)

    @property
    def bler(self) -> float:
        return self.block_errors / self.trials if self.trials else 0.0

    @property
    def bler_ci(self):
        return wilson_interval(self.block_errors, self.trials)

    @property
    def ser(self) -> float:
        return self.symbol_errors / (self.trials * self.coordinates) if self.trials else 0.0

    def row(self) -> dict:
        lo, hi = self.bler_ci
        return {"axis_db": self.axis_db, "trials": self.trials, "block_errors": self.block_errors,
                "bler": self.bler, "bler_ci_lo": lo, "bler_ci_hi": hi, "ser": self.ser,
                "runtime_s": self.runtime_s}

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(self.row())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        return cls(float(d["axis_db"]), float(d["sigma"]), int(d["trials"]), int(d["block_errors"]),
                   int(d["symbol_errors"]), list(d["first_error_level"]), int(d["coordinates"]),
                   float(d.get("runtime_s", 0.0)))


def axis_sigma(spec: PolarLatticeSpec, axis: str, value: float) -> float:
    """Noise standard deviation at an axis value (0 for ``inf``)."""
    if math.isinf(value) and value > 0:
        return 0.0
    if axis == "snr":
        if not spec.shaped:
            raise ValueError("the SNR axis needs a shaped spec")
        return sigma_from_snr(spec.shaping, value)
    return sigma_from_vnr(spec, value)


def simulate_batch(spec: PolarLatticeSpec, sigma: float, size: int, rng, block: int):
    """
    Encode, transmit and decode ``size`` random blocks.

    Returns
    -------
    block_err : ndarray of bool, shape (size,)
    symbol_err : ndarray of int, shape (size,)
    first_level : ndarray of int, shape (size,)
        1-based first wrong level, ``r + 1`` for a bottom-only error, 0 if correct.
    """
    info = [rng.integers(0, 2, (size, len(lv.info)), dtype=np.uint8) for lv in spec.levels]
    cw = encode_shaped(spec, info, block) if spec.shaped else encode_construction_d(spec, info, block=block)
    y = cw.x + sigma * rng.standard_normal(cw.x.shape)
    dec = multistage_decode(spec, y, sigma=max(sigma, ZERO_NOISE_SIGMA), block=block)
    wrong_coord = dec.x != cw.x
    block_err = np.any(wrong_coord, axis=(1, 2))
    symbol_err = wrong_coord.sum(axis=(1, 2))
    level_wrong = np.any(dec.u != cw.u, axis=2)  # (B, r)
    r = spec.chain.r
    first = np.where(level_wrong.any(axis=1), np.argmax(level_wrong, axis=1) + 1, r + 1)
    return block_err, symbol_err, np.where(block_err, first, 0)


def _run_point(spec, plan, p_idx, value, threads, progress):
    sigma = axis_sigma(spec, plan.axis, value)
    r = spec.chain.r
    B = plan.batch_size
    t0 = time.perf_counter()
    trials = errors = sym = 0
    hist = np.zeros(r + 1, dtype=np.int64)

    def work(b):
        rng = np.random.default_rng([int(plan.master_seed), p_idx, b])
        size = min(B, plan.max_trials - b * B)
        return simulate_batch(spec, sigma, size, rng, b * B)

    n_batches = math.ceil(plan.max_trials / B)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        pending = {}
        next_submit = 0
        for b in range(n_batches):
            while next_submit < n_batches and len(pending) < max(1, threads):
                pending[next_submit] = pool.submit(work, next_submit)
                next_submit += 1
            blk, se, first = pending.pop(b).result()
            # honour the stop rule exactly: cut at the block with the E-th error
            cum = errors + np.cumsum(blk)
            hit = np.nonzero(cum >= plan.min_errors)[0]
            keep = hit[0] + 1 if hit.size else len(blk)
            blk, se, first = blk[:keep], se[:keep], first[:keep]
            trials += keep
            errors += int(blk.sum())
            sym += int(se.sum())
            hist += np.bincount(first[blk], minlength=r + 2)[1:]
            if progress:
                progress(value, trials, errors)
            if errors >= plan.min_errors or trials >= plan.max_trials:
                for f in pending.values():
                    f.cancel()
                break
    runtime = time.perf_counter() - t0 if plan.record_timing else 0.0
    return TrialRecord(float(value), float(sigma), int(trials), int(errors), int(sym), hist.tolist(),
                       spec.N * spec.n, runtime)


def run_experiment(plan: ExperimentPlan, spec: PolarLatticeSpec | None = None, threads: int = 1,
                   progress=None) -> list[TrialRecord]:
    """
    Simulate every grid point of ``plan``.

    Parameters
    ----------
    plan : ExperimentPlan
    spec : PolarLatticeSpec, optional
        Overrides ``plan.spec_path``.
    threads : int
        Number of batches decoded concurrently; results do not depend on it.
    progress : callable, optional
        Called as ``progress(axis_value, trials, errors)`` after each batch.

    Returns
    -------
    list of TrialRecord
    """
    spec = plan.load_spec() if spec is None else spec
    return [_run_point(spec, plan, i, v, threads, progress) for i, v in enumerate(plan.points)]


def estimate_ser(records) -> list[tuple]:
    """
    Symbol (coordinate) error rate of each record with a Wilson 95% interval.

    Returns
    -------
    list of (ser, lo, hi)
    """
    records = list(records)
    if not records:
        raise ValueError("no records")
    out = []
    for rec in records:
        total = rec.trials * rec.coordinates
        lo, hi = wilson_interval(rec.symbol_errors, total)
        out.append((rec.ser, lo, hi))
    return out


def write_csv(records, path):
    """One row per grid point with the columns of ``CSV_COLUMNS``."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for rec in records:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.row().items()})


def write_json(records, path, plan: ExperimentPlan | None = None):
    """Records (and the plan) as a JSON document."""
    doc = {"plan": None if plan is None else plan.to_dict(), "records": [r.to_dict() for r in records]}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def read_json(path) -> list[TrialRecord]:
    doc = json.loads(Path(path).read_text())
    return [TrialRecord.from_dict(d) for d in doc["records"]]
