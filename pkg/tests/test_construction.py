import json
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from polarlattice.channels import DiscreteBMC, ModLevelChannel, ShapedLevelChannel, quantize_channel
from polarlattice.construction import (
    LevelCodeSpec,
    certify_nesting,
    default_threshold,
    design_symmetric,
    evolve_profile,
    evolve_subchannels,
    level_profiles,
    polar_transform_pair,
    select_sets_asymmetric,
    select_sets_capacity,
    select_sets_equal_error,
    shaped_level_profiles,
)
from polarlattice.lattice_core import DiscreteGaussianSpec, PartitionChain

ONE_D = PartitionChain.one_dimensional(2)
TWO_D = PartitionChain.two_dimensional(4)
SHAPING = DiscreteGaussianSpec(3.0, 5, 22)
# largest Bhattacharyya increase one merge pass may cause
MERGE_SLACK = {16: 1e-2, 128: 1e-3}

channel_tables = st.lists(st.tuples(st.floats(0.01, 1.0), st.floats(0.01, 1.0)), min_size=1, max_size=6)


def table_from(pairs):
    a = np.array(pairs)
    # symmetrize so the channel is a binary memoryless symmetric channel
    p0 = np.r_[a[:, 0], a[:, 1]]
    p1 = np.r_[a[:, 1], a[:, 0]]
    return DiscreteBMC(p0 / p0.sum(), p1 / p1.sum())


# -- one polarization step ------------------------------------------------------------


def test_transform_of_erasure_channel():
    minus, plus = polar_transform_pair(DiscreteBMC.bec(0.5))
    assert minus.bhattacharyya() == pytest.approx(0.75, abs=1e-12)
    assert plus.bhattacharyya() == pytest.approx(0.25, abs=1e-12)
    perfect = DiscreteBMC([1.0, 0.0], [0.0, 1.0])
    assert all(w.bhattacharyya() == 0 for w in polar_transform_pair(perfect))


@given(channel_tables, st.sampled_from([16, 128]))
def test_transform_bounds(pairs, mu):
    W = table_from(pairs)
    z = W.bhattacharyya()
    minus, plus = polar_transform_pair(W, mu)
    assert minus.capacity() + plus.capacity() <= 2 * W.capacity() + 1e-12
    assert plus.bhattacharyya() <= z * z + MERGE_SLACK[mu]
    assert minus.bhattacharyya() <= 2 * z - z * z + MERGE_SLACK[mu]
    for w in (minus, plus):
        assert w.size <= mu and 0 <= w.bhattacharyya() <= 1 + 1e-12


@given(channel_tables)
def test_transform_without_merging_is_exact(pairs):
    W = table_from(pairs)
    z = W.bhattacharyya()
    minus, plus = polar_transform_pair(W, 10**6)
    assert plus.bhattacharyya() == pytest.approx(z * z, abs=1e-12)
    assert minus.bhattacharyya() <= 2 * z - z * z + 1e-12
    assert minus.capacity() + plus.capacity() == pytest.approx(2 * W.capacity(), abs=1e-10)


# -- evolution against the brute-force oracle ------------------------------------------


def test_single_index_and_power_of_two():
    W = DiscreteBMC.bsc(0.2)
    assert np.allclose(evolve_subchannels(W, 1), [W.bhattacharyya()])
    with pytest.raises(ValueError):
        evolve_subchannels(W, 6)


def test_erasure_recursion():
    for eps in (0.2, 0.5, 0.9):
        assert np.allclose(evolve_subchannels(DiscreteBMC.bec(eps), 8), oracles.bec_recursion(eps, 8), atol=1e-12)


def test_bsc_matches_exhaustive_computation():
    W = DiscreteBMC.bsc(0.11)
    z, pe = oracles.subchannel_parameters(W.p0, W.p1, 8)
    prof = evolve_profile(W, 8)
    assert np.allclose(prof.z, z, atol=1e-12)
    assert np.allclose(prof.error_prob, pe, atol=1e-12)


def test_capacity_is_conserved_without_merging():
    W = DiscreteBMC.bsc(0.11)
    _, cap = evolve_subchannels(W, 8, mu=10**6, return_capacity=True)
    assert cap.sum() == pytest.approx(8 * W.capacity(), abs=1e-10)


@given(st.lists(st.floats(0.02, 1.0), min_size=4, max_size=4))
def test_asymmetric_subchannels_equal_symmetrized(weights):
    # Z(U_i | U_<i, Y) of a non-uniform input equals Z of the symmetrized channel
    w = np.array(weights)
    joint = (w / w.sum()).reshape(2, 2)  # joint[x, y]
    j = joint.T
    sym = DiscreteBMC(np.r_[j[:, 0], j[:, 1]], np.r_[j[:, 1], j[:, 0]])
    assert np.allclose(evolve_subchannels(sym, 4, mu=10**6), oracles.asymmetric_parameters(joint, 4), atol=1e-10)


def test_asymmetric_subchannels_at_length_eight():
    joint = np.array([[0.5, 0.1], [0.15, 0.25]])
    j = joint.T
    sym = DiscreteBMC(np.r_[j[:, 0], j[:, 1]], np.r_[j[:, 1], j[:, 0]])
    assert np.allclose(evolve_subchannels(sym, 8, mu=10**6), oracles.asymmetric_parameters(joint, 8), atol=1e-10)


def test_source_subchannels_match_exhaustive():
    ch = ShapedLevelChannel(DiscreteGaussianSpec(0.6, 2, 12), 1, 0.5)
    src = ch.source_table()
    px = np.exp(DiscreteGaussianSpec(0.6, 2, 12).coset_log_probs(1))
    ref = oracles.asymmetric_parameters(px[:, None], 8)
    assert np.allclose(evolve_subchannels(src, 8), ref, atol=1e-12)


def test_conditioning_reduces_bhattacharyya():
    for level in (1, 2, 3):
        chan, src = shaped_level_profiles(SHAPING, 0.5, 16, level)
        assert np.all(chan.z <= src.z + 1e-6)


# separately quantized levels may invert by this much on indices with z near 1e-10
QUANTIZATION_SLACK = 1e-8


@pytest.mark.parametrize("chain", [ONE_D, TWO_D])
@pytest.mark.parametrize("N", [64, 256])
def test_subchannels_ordered_across_levels(chain, N):
    raw = [evolve_profile(quantize_channel(ModLevelChannel(chain, lv, 0.35), 128), N)
           for lv in range(1, chain.r + 1)]
    for a, b in zip(raw, raw[1:]):
        assert np.all(a.z >= b.z - QUANTIZATION_SLACK)
    env = level_profiles(chain, 0.35, N)
    for a, b in zip(env, env[1:]):
        assert np.all(a.z >= b.z) and np.all(a.error_prob >= b.error_prob)
    # the envelope only ever loosens a bound
    for e, r in zip(env, raw):
        assert np.all(e.z >= r.z) and np.all(e.capacity <= r.capacity)
        assert np.max(e.z - r.z) <= QUANTIZATION_SLACK


# -- index selection -----------------------------------------------------------------


def test_default_threshold():
    assert default_threshold(16) == pytest.approx(2.0 ** -(16**0.45))
    assert default_threshold(2**20) == 1e-9
    with pytest.raises(ValueError):
        default_threshold(64, beta=0.5)


@given(st.lists(st.floats(0.0, 1.0), min_size=16, max_size=16), st.floats(1e-6, 0.99))
def test_equal_error_selects_cheapest_prefix(z, budget):
    z = np.array(z)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        spec = select_sets_equal_error(z, budget)
    assert spec.error_bound("z") <= budget
    assert spec.symmetric
    assert sorted(spec.frozen + spec.info) == list(range(16))
    if spec.info and spec.frozen:
        assert max(z[list(spec.info)]) <= min(z[list(spec.frozen)])
    # the next cheapest index would exceed the budget
    rest = sorted(z[list(spec.frozen)])
    if rest:
        assert spec.error_bound("z") + rest[0] > budget


def test_equal_error_edge_cases():
    z = np.array([0.1, 0.2, 0.2, 0.05])
    assert select_sets_equal_error(z, 0.9).rate == 1.0
    with pytest.warns(UserWarning):
        assert select_sets_equal_error(z, 0.01).rate == 0.0
    # ties broken towards the smaller index
    assert select_sets_equal_error(z, 0.36).info == (0, 1, 3)
    with pytest.raises(ValueError):
        select_sets_equal_error(z, 1.5)


def test_capacity_rule_examples():
    assert select_sets_capacity(np.zeros(8)).rate == 1.0
    z = np.array([1e-12, 0.5, 1e-3, 0.9])
    assert select_sets_capacity(z, threshold=1e-2).info == (0, 2)


def test_asymmetric_partition_definitions():
    rng = np.random.default_rng(3)
    zc = rng.uniform(0, 1, 64) ** 4
    zs = np.maximum(zc, rng.uniform(0, 1, 64) ** 0.2)
    t = 0.05
    spec = select_sets_asymmetric(zc, zs, threshold=t)
    F, I = np.array(spec.frozen, dtype=int), np.array(spec.info, dtype=int)
    assert np.all(zc[F] >= 1 - t)
    assert np.all((zc[I] <= t) & (zs[I] >= 1 - t))
    assert len(spec.frozen) + len(spec.info) + len(spec.shaping) == 64
    expected_i = np.nonzero((zc <= t) & (zs >= 1 - t) & (zc < 1 - t))[0]
    assert np.array_equal(I, expected_i)


def test_uniform_prior_degenerates_to_symmetric():
    z = np.sort(np.random.default_rng(1).uniform(0, 1, 32) ** 6)
    spec = select_sets_asymmetric(z, np.ones(32), threshold=1e-3, budget=1e-2, source_threshold=1e-3)
    sym = select_sets_equal_error(z, 1e-2)
    assert spec.info == sym.info
    assert spec.shaping == tuple(i for i in range(32) if z[i] < 1 - 1e-3 and i not in spec.info)


def test_level_spec_validation_and_json():
    spec = LevelCodeSpec(4, 1, (0,), (1, 3), (2,), [0.9, 0.1, 0.5, 0.01], [1, 1, 0.2, 1], [0.4, 0.05, 0.3, 0.0])
    assert LevelCodeSpec.from_json(spec.to_json()) == spec
    assert "error_prob" not in json.loads(LevelCodeSpec(2, 1, (0,), (1,), (), [1, 0], [1, 1]).to_json())
    assert spec.error_bound("z") == pytest.approx(0.11)
    assert spec.error_bound() == pytest.approx(0.05)
    assert list(spec.roles()) == [0, 1, 2, 1]
    with pytest.raises(ValueError):
        LevelCodeSpec(4, 1, (0,), (1,), (2,), [0] * 4, [1] * 4)


# -- nesting ---------------------------------------------------------------------


def make(N, level, info):
    frozen = [i for i in range(N) if i not in info]
    return LevelCodeSpec(N, level, frozen, info, (), [0.5] * N, [1.0] * N)


def test_nesting_certificate():
    a, b = make(8, 1, (7,)), make(8, 2, (3, 5, 6, 7))
    assert certify_nesting([a, b]).valid
    assert certify_nesting([a, a]).valid
    bad = certify_nesting([make(8, 1, (3, 5, 6, 7)), make(8, 2, (7,))])
    assert not bad.valid and bad.witness == (1, 2, 3)
    with pytest.raises(ValueError):
        certify_nesting([a, make(16, 2, (15,))])


@pytest.mark.parametrize("chain", [ONE_D, TWO_D])
def test_symmetric_designs_are_nested(chain):
    for rule in ("equal_error", "capacity"):
        specs = design_symmetric(chain, 0.35, 256, 1e-3, rule=rule)
        assert certify_nesting(specs).valid
        assert all(s.symmetric for s in specs)
        budget = 1e-3 / (chain.r + 1)
        if rule == "equal_error":
            assert all(s.error_bound("error") <= budget for s in specs)


# -- finite-length rule comparisons ----------------------------------------------


@pytest.fixture(scope="module")
def reference_profiles():
    out = {}
    for level in (1, 2):
        W = quantize_channel(ModLevelChannel(ONE_D, level, 0.3380), 128)
        out[level] = (W, {N: evolve_profile(W, N) for N in (256, 1024, 4096)})
    return out


def test_good_fraction_grows_towards_capacity(reference_profiles):
    for level, (W, profs) in reference_profiles.items():
        for t in (1e-2, 1e-3):
            frac = [select_sets_capacity(profs[N].z, profs[N].capacity, t).rate for N in (256, 1024, 4096)]
            assert frac[0] < frac[1] < frac[2] < W.capacity()


def test_equal_error_and_capacity_rules_agree(reference_profiles):
    budget = 1e-5 / 3
    for level, (W, profs) in reference_profiles.items():
        p = profs[4096]
        ee = select_sets_equal_error(p.z, budget, level, p.error_prob)
        cap = select_sets_capacity(p.z, p.capacity, threshold=budget, level=level)
        assert np.mean(ee.roles() == cap.roles()) >= 0.9
