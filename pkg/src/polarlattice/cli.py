"""
Command-line interface: ``polarlattice {construct,capacity,simulate,decode}``.

Exit codes: 0 success, 2 usage or input error, 3 numerical-validity failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, construction
from .channels import ChannelCache
from .codec import PolarLatticeSpec, decode_file
from .lattice_core import DiscreteGaussianSpec, PartitionChain
from .simulation import ExperimentPlan, run_experiment, write_csv, write_json

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

log = logging.getLogger("polarlattice")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

CONSTRUCT_DEFAULTS = {
    "chain": "1d",
    "r": None,
    "N": 1024,
    "mode": "symmetric",
    "sigma": None,
    "snr_db": None,
    "rule": "equal_error",
    "target_pe": 1e-5,
    "metric": "error",
    "mu": 128,
    "threshold": None,
    "source_threshold": 1e-4,
    "beta": 0.45,
    "frozen_mode": "zero",
    "master_seed": 0,
    "sigma_s": None,
    "support_radius": None,
    "flatness_threshold": 0.05,
    "cache_dir": None,
}

CAPACITY_DEFAULTS = {
    "chain": "1d",
    "r": None,
    "mode": "symmetric",
    "sigmas": None,
    "snrs": None,
    "sigma_s": None,
    "samples": 10**5,
    "seed": 0,
}


class UsageError(Exception):
    """Bad command line or configuration."""


class NumericalError(Exception):
    """A numerical validity criterion failed."""


def load_config(path, defaults: dict) -> dict:
    """Read a TOML or JSON document and fill in defaults; unknown keys are rejected."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    text = path.read_text()
    try:
        raw = tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from exc
    unknown = sorted(set(raw) - set(defaults))
    if unknown:
        raise UsageError(f"unknown config keys {unknown}; valid keys are {sorted(defaults)}")
    cfg = dict(defaults)
    cfg.update(raw)
    return cfg


def _choice(cfg, key, valid):
    if cfg[key] not in valid:
        raise UsageError(f"invalid {key} {cfg[key]!r}; valid values are {', '.join(map(repr, valid))}")


def _chain(cfg) -> PartitionChain:
    _choice(cfg, "chain", ("1d", "2d"))
    return PartitionChain.from_name(cfg["chain"], cfg["r"])


def _shaping(cfg, r) -> DiscreteGaussianSpec:
    if cfg["sigma_s"] is None:
        raise UsageError("shaped mode needs sigma_s")
    probe = DiscreteGaussianSpec(float(cfg["sigma_s"]), r, 1)
    radius = cfg["support_radius"] or probe.required_radius()
    return DiscreteGaussianSpec(float(cfg["sigma_s"]), r, int(radius))


def build_spec(cfg: dict) -> PolarLatticeSpec:
    """Design a :class:`PolarLatticeSpec` from a construct configuration."""
    chain = _chain(cfg)
    _choice(cfg, "mode", ("symmetric", "shaped"))
    _choice(cfg, "rule", ("equal_error", "capacity"))
    _choice(cfg, "metric", ("error", "z"))
    _choice(cfg, "frozen_mode", ("zero", "random"))
    N = int(cfg["N"])
    if N < 1 or N & (N - 1):
        raise UsageError(f"N must be a power of two, got {N}")
    cache = ChannelCache(cfg["cache_dir"]) if cfg["cache_dir"] else None
    # record the resolved values so the spec states every parameter it was built with
    meta = {k: v for k, v in cfg.items() if k != "cache_dir"}
    meta["r"] = chain.r
    if cfg["mode"] == "symmetric":
        if cfg["sigma"] is None:
            raise UsageError("symmetric mode needs sigma")
        sigma = float(cfg["sigma"])
        levels = construction.design_symmetric(
            chain, sigma, N, float(cfg["target_pe"]), rule=cfg["rule"], mu=int(cfg["mu"]),
            metric=cfg["metric"], threshold=cfg["threshold"], beta=float(cfg["beta"]), cache=cache)
        return PolarLatticeSpec(chain, levels, sigma, None, int(cfg["master_seed"]), cfg["frozen_mode"],
                                float(cfg["flatness_threshold"]), meta)
    if chain.n != 1:
        raise UsageError("shaped designs are available for the 1d chain only")
    shaping = _shaping(cfg, chain.r)
    if cfg["sigma"] is not None:
        sigma = float(cfg["sigma"])
    elif cfg["snr_db"] is not None:
        sigma = analysis.sigma_from_snr(shaping, float(cfg["snr_db"]))
    else:
        raise UsageError("shaped mode needs sigma or snr_db")
    meta.update(sigma=sigma, support_radius=shaping.support_radius, frozen_mode="random")
    levels = construction.design_shaped(
        shaping, sigma, N, float(cfg["target_pe"]), mu=int(cfg["mu"]), threshold=cfg["threshold"],
        source_threshold=cfg["source_threshold"], metric=cfg["metric"], beta=float(cfg["beta"]), cache=cache)
    spec = PolarLatticeSpec(chain, levels, sigma, shaping, int(cfg["master_seed"]), "random",
                            float(cfg["flatness_threshold"]), meta)
    try:
        spec.check_flatness()
    except ValueError as exc:
        raise NumericalError(str(exc)) from exc
    return spec


def summarize(spec: PolarLatticeSpec) -> dict:
    """Per-level rates and sets, union bound, gap report and nesting certificate."""
    levels = []
    for lv in spec.levels:
        levels.append({
            "level": lv.level,
            "rate": lv.rate,
            "frozen_fraction": len(lv.frozen) / lv.N,
            "info_fraction": len(lv.info) / lv.N,
            "shaping_fraction": len(lv.shaping) / lv.N,
            "union_bound_z": lv.error_bound("z"),
            "union_bound_error": lv.error_bound("error") if lv.error_prob else None,
        })
    out = {
        "chain": spec.chain.name,
        "N": spec.N,
        "n": spec.n,
        "shaped": spec.shaped,
        "sigma": spec.sigma_tilde,
        "sum_rate": spec.sum_rate,
        "levels": levels,
        "union_bound_z": analysis.union_bound_pe(spec, metric="z"),
        "nesting": construction.certify_nesting(spec.levels).to_dict(),
        "config": spec.metadata,
    }
    if all(lv.error_prob for lv in spec.levels if lv.info):
        out["union_bound_error"] = analysis.union_bound_pe(spec, metric="error")
    if spec.shaped:
        out["snr_db"] = analysis.snr_db(spec.shaping, spec.sigma_tilde)
        out["top_flatness"] = spec.top_flatness()
    else:
        out["vnr_db"] = analysis.vnr_db(spec, spec.sigma_tilde)
        out["gap"] = analysis.gap_report(spec).to_dict()
    return out


def _summary_text(summary: dict) -> str:
    lines = [f"chain {summary['chain']}  N={summary['N']}  sigma={summary['sigma']:.6g}  "
             f"shaped={summary['shaped']}",
             f"sum rate {summary['sum_rate']:.4f} bits per {summary['n']}-dimensional symbol"]
    for lv in summary["levels"]:
        lines.append(f"  level {lv['level']}: rate {lv['rate']:.4f}  F/I/S "
                     f"{lv['frozen_fraction']:.3f}/{lv['info_fraction']:.3f}/{lv['shaping_fraction']:.3f}  "
                     f"sum Z {lv['union_bound_z']:.3g}")
    lines.append(f"union bound (sum Z) {summary['union_bound_z']:.4g}")
    if "union_bound_error" in summary:
        lines.append(f"union bound (sum of bit error probabilities) {summary['union_bound_error']:.4g}")
    if "gap" in summary:
        g = summary["gap"]
        lines.append(f"VNR {summary['vnr_db']:.3f} dB; gap bound {g['gap_db']:.3f} dB "
                     f"(eps1 {g['eps1']:.4f}, eps3 {g['eps3']:.4f})")
    if "snr_db" in summary:
        lines.append(f"SNR {summary['snr_db']:.3f} dB; top-lattice flatness {summary['top_flatness']:.3g}")
    lines.append(f"nesting certificate valid: {summary['nesting']['valid']}")
    lines.append("configuration: " + json.dumps(summary["config"], sort_keys=True))
    return "\n".join(lines) + "\n"


def cmd_construct(args) -> int:
    cfg = load_config(args.config, CONSTRUCT_DEFAULTS)
    if args.seed is not None:
        cfg["master_seed"] = args.seed
    spec = build_spec(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "spec.json").write_text(spec.to_json())
    summary = summarize(spec)
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    text = _summary_text(summary)
    (out / "summary.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def _grid(value, name):
    if value is None:
        raise UsageError(f"{name} grid is missing")
    if isinstance(value, dict):
        grid = np.linspace(float(value["start"]), float(value["stop"]), int(value["num"]))
    else:
        grid = np.asarray(value, dtype=float)
    if grid.size == 0:
        raise UsageError(f"{name} grid is empty")
    return grid


def cmd_capacity(args) -> int:
    cfg = load_config(args.config, CAPACITY_DEFAULTS)
    chain = _chain(cfg)
    _choice(cfg, "mode", ("symmetric", "shaped"))
    if cfg["mode"] == "symmetric":
        curve = analysis.capacity_curve(chain, _grid(cfg["sigmas"], "sigmas"))
    else:
        shaping = _shaping(dict(cfg, support_radius=None), chain.r)
        seed = cfg["seed"] if args.seed is None else args.seed
        curve = analysis.shaped_mi_curve(chain, shaping, _grid(cfg["snrs"], "snrs"), int(cfg["samples"]), seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    curve.write_csv(out / "capacity.csv")
    print(f"wrote {out / 'capacity.csv'} ({curve.values.shape[0]} levels x {len(curve.axis)} points)")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if not Path(args.plan).is_file():
        raise UsageError(f"plan file not found: {args.plan}")
    plan = ExperimentPlan.from_file(args.plan)
    if args.seed is not None:
        plan.master_seed = args.seed
    try:
        spec = plan.load_spec()
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc

    def progress(value, trials, errors):
        log.debug("point %s: %d trials, %d errors", value, trials, errors)

    records = run_experiment(plan, spec, threads=args.threads, progress=progress)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(records, out / "results.csv")
    write_json(records, out / "results.json", plan)
    for rec in records:
        lo, hi = rec.bler_ci
        print(f"{plan.axis} {rec.axis_db:.3f} dB: {rec.block_errors}/{rec.trials} block errors, "
              f"BLER {rec.bler:.3g} [{lo:.3g}, {hi:.3g}], SER {rec.ser:.3g}")
    return EXIT_OK


def cmd_decode(args) -> int:
    path = Path(args.spec)
    if not path.is_file():
        raise UsageError(f"spec file not found: {path}")
    spec = PolarLatticeSpec.from_json(path.read_text())
    if not Path(args.input).is_file():
        raise UsageError(f"input file not found: {args.input}")
    res = decode_file(spec, args.input, sigma=args.sigma, block=args.block)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "decoded.txt", "w") as fh:
        for x in res.x:
            fh.write(" ".join(repr(float(v)) for v in x.ravel()) + "\n")
    bits = [[b.tolist() for b in blk] for blk in zip(*res.info_bits(spec))]
    (out / "decoded_bits.json").write_text(json.dumps(bits))
    print(f"decoded {len(res.x)} block(s) into {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polarlattice", description="Polar lattice construction and simulation.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for simulation")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--out", default=".", help="output directory")
    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("construct", help="design a polar lattice")
    c.add_argument("config", help="TOML or JSON configuration")
    c.set_defaults(func=cmd_construct)
    c = sub.add_parser("capacity", help="per-level capacity or mutual information curves (CSV)")
    c.add_argument("config")
    c.set_defaults(func=cmd_capacity)
    c = sub.add_parser("simulate", help="Monte Carlo error rates")
    c.add_argument("plan", help="experiment plan (TOML or JSON)")
    c.set_defaults(func=cmd_simulate)
    c = sub.add_parser("decode", help="decode observations from a text file")
    c.add_argument("spec", help="spec JSON written by construct")
    c.add_argument("input", help="one block per line, whitespace-separated floats")
    c.add_argument("--sigma", type=float, default=None, help="channel noise std (default: design value)")
    c.add_argument("--block", type=int, default=0, help="index of the first block")
    c.set_defaults(func=cmd_decode)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
