import json
import math

import numpy as np
import pytest

from builders import random_nested_spec, shaped_spec, symmetric_spec
from polarlattice.analysis import vnr_db
from polarlattice.codec import PolarLatticeSpec
from polarlattice.lattice_core import PartitionChain
from polarlattice.simulation import (
    CSV_COLUMNS,
    ExperimentPlan,
    TrialRecord,
    estimate_ser,
    read_json,
    run_experiment,
    wilson_interval,
    write_csv,
    write_json,
)

ONE_D = PartitionChain.one_dimensional(2)


@pytest.fixture(scope="module")
def small_spec():
    return symmetric_spec("1d", 2, 0.45, 64, 1e-2)


def plan_for(spec, offsets, **kw):
    base = vnr_db(spec, spec.sigma_tilde)
    kw.setdefault("batch_size", 128)
    return ExperimentPlan(points=[base + d for d in offsets], **kw)


# -- plans -----------------------------------------------------------------------------


def test_plan_validation():
    with pytest.raises(ValueError):
        ExperimentPlan(points=[1.0, 1.0])
    with pytest.raises(ValueError):
        ExperimentPlan(points=[])
    with pytest.raises(ValueError):
        ExperimentPlan(points=[1.0], min_errors=10, max_trials=5)
    with pytest.raises(ValueError, match="valid values"):
        ExperimentPlan(points=[1.0], axis="ebno")
    with pytest.raises(ValueError, match="unknown plan keys"):
        ExperimentPlan.from_dict({"points": [1.0], "trials": 3})


def test_plan_file_resolves_relative_spec(tmp_path, small_spec):
    (tmp_path / "spec.json").write_text(small_spec.to_json())
    (tmp_path / "plan.toml").write_text('spec_path = "spec.json"\npoints = [1.0, 2.0]\nmin_errors = 5\n')
    plan = ExperimentPlan.from_file(tmp_path / "plan.toml")
    assert plan.load_spec().to_json() == small_spec.to_json()
    with pytest.raises(FileNotFoundError):
        ExperimentPlan(spec_path=str(tmp_path / "missing.json"), points=[1.0]).load_spec()


# -- runs -------------------------------------------------------------------------------


@pytest.mark.parametrize("spec", [random_nested_spec(PartitionChain.two_dimensional(4), 64, frozen_mode="random"),
                                  shaped_spec(64)], ids=["unshaped-2d", "shaped"])
def test_noiseless_point_has_no_errors(spec):
    plan = ExperimentPlan(points=[math.inf], axis="snr" if spec.shaped else "vnr", min_errors=1,
                          max_trials=300, batch_size=100)
    rec = run_experiment(plan, spec)[0]
    assert rec.trials == 300 and rec.block_errors == 0 and rec.sigma == 0.0
    assert estimate_ser([rec]) == [(0.0, 0.0, pytest.approx(wilson_interval(0, 300 * 64 * spec.n)[1]))]


def test_reproducible_bytes_and_thread_independence(tmp_path, small_spec):
    plan = plan_for(small_spec, [-1.0, 0.0], min_errors=20, max_trials=3000, master_seed=9, record_timing=False)
    a = run_experiment(plan, small_spec, threads=1)
    b = run_experiment(plan, small_spec, threads=4)
    assert a == b
    write_csv(a, tmp_path / "a.csv")
    write_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0].split(",")
    assert header == CSV_COLUMNS
    other = run_experiment(ExperimentPlan(**{**plan.to_dict(), "master_seed": 10}), small_spec)
    assert other != a


def test_stop_rule_and_histogram(small_spec):
    plan = plan_for(small_spec, [-1.5], min_errors=37, max_trials=10**5, batch_size=64)
    rec = run_experiment(plan, small_spec, threads=2)[0]
    assert rec.block_errors == 37
    assert sum(rec.first_error_level) == rec.block_errors
    assert len(rec.first_error_level) == small_spec.chain.r + 1
    capped = run_experiment(plan_for(small_spec, [-1.5], min_errors=500, max_trials=500), small_spec)[0]
    assert capped.trials == 500 and capped.block_errors < 500


def test_ser_bounds_and_monotone(small_spec):
    plan = plan_for(small_spec, [-1.0, 0.0, 1.0], min_errors=40, max_trials=20000)
    recs = run_experiment(plan, small_spec)
    sers = estimate_ser(recs)
    for rec, (ser, lo, hi) in zip(recs, sers):
        assert ser <= rec.bler
        assert lo <= ser <= hi
    # decreasing within overlapping intervals
    for (s0, lo0, hi0), (s1, lo1, hi1) in zip(sers, sers[1:]):
        assert lo1 <= hi0
    with pytest.raises(ValueError):
        estimate_ser([])


def test_wilson_interval_shrinks_like_root_n():
    widths = [np.subtract(*wilson_interval(n // 100, n)[::-1]) for n in (10**4, 4 * 10**4, 16 * 10**4)]
    assert widths[0] / widths[1] == pytest.approx(2.0, rel=0.05)
    assert widths[1] / widths[2] == pytest.approx(2.0, rel=0.05)
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_json_round_trip(tmp_path, small_spec):
    plan = plan_for(small_spec, [0.0], min_errors=5, max_trials=500)
    recs = run_experiment(plan, small_spec)
    write_json(recs, tmp_path / "r.json", plan)
    assert read_json(tmp_path / "r.json") == recs
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["plan"]["min_errors"] == 5 and "bler_ci_lo" in doc["records"][0]
    assert TrialRecord.from_dict(doc["records"][0]) == recs[0]


def test_equal_error_design_splits_errors_evenly():
    # every level (and the bottom lattice) gets the same share of the budget
    spec = symmetric_spec("1d", 2, 0.41327, 256, 1e-3, metric="error")
    plan = ExperimentPlan(points=[vnr_db(spec, spec.sigma_tilde)], min_errors=100, max_trials=10**6,
                          batch_size=1024)
    rec = run_experiment(plan, spec, threads=4)[0]
    hist = np.array(rec.first_error_level)
    assert hist.min() > 0 and hist.max() <= 3 * hist.min()


def test_frozen_values_do_not_change_error_rate(small_spec):
    # the level channels are symmetric, so random frozen bits cost nothing
    randomized = PolarLatticeSpec(small_spec.chain, small_spec.levels, small_spec.sigma_tilde, frozen_mode="random")
    plan = plan_for(small_spec, [-0.5], min_errors=150, max_trials=10**5, batch_size=256)
    zero = run_experiment(plan, small_spec, threads=2)[0]
    rand = run_experiment(plan, randomized, threads=2)[0]
    (lo0, hi0), (lo1, hi1) = zero.bler_ci, rand.bler_ci
    assert lo0 <= hi1 and lo1 <= hi0
