import math
from pathlib import Path

import numpy as np
import pytest

from hiercp_core import nodesets
from hiercp_core.conformal import CalibrationError, CalibrationSet, calibrate_family
from hiercp_core.covers import enumerate_nol_covers
from hiercp_core.evaluation import SynthConfig, synth_arrays
from hiercp_core.inference import (
    Candidate,
    CandidatePool,
    CostParams,
    bonferroni,
    candidate_pool,
    candidate_pools,
    dynamic_prune,
    hcc_predict,
    predict_batch,
    select_candidate,
    set_cost,
)
from hiercp_core.propagation import LeafScores, propagate_batch
from hiercp_core.taxonomy import build_taxonomy, leaf_cover, load_taxonomy, perfect_binary_tree

ASSETS = Path(__file__).parent / "assets"


def _dish():
    return load_taxonomy(ASSETS / "dish_taxonomy.json")


def _family(t, n=500, seed=0, signal=2.0):
    scores, truths = synth_arrays(SynthConfig(taxonomy=t, n=n, signal=signal, seed=seed))
    calibration = CalibrationSet.from_arrays(t, propagate_batch(t, scores), truths)
    return calibrate_family(t, enumerate_nol_covers(t), calibration)


def _test_rows(t, n=200, seed=1, signal=2.0):
    scores, truths = synth_arrays(SynthConfig(taxonomy=t, n=n, signal=signal, seed=seed))
    return scores, propagate_batch(t, scores), truths


def test_set_cost_examples():
    t = _dish()
    cp = CostParams(1 / 3)
    assert set_cost(t, t.mask_of(["lunch"]), cp) == pytest.approx(1 + 5 / 3)
    assert set_cost(t, t.mask_of(["Caesar salad"]), cp) == pytest.approx(4 / 3)
    assert set_cost(t, 0, CostParams(2.0)) == 0
    assert set_cost(t, t.mask_of(["breakfast", "sandwich"]), CostParams(0.0)) == 2


def test_cost_params_validation():
    for beta in (-0.1, math.inf, math.nan):
        with pytest.raises(ValueError, match="beta must be a nonnegative number"):
            CostParams(beta)


def test_bonferroni_examples():
    assert bonferroni(0.1, 5) == pytest.approx(0.02)
    assert bonferroni(0.1, 1) == 0.1
    assert bonferroni(0.05, 11) == pytest.approx(0.004545454545)
    with pytest.raises(ValueError, match="m >= 1"):
        bonferroni(0.1, 0)
    with pytest.raises(CalibrationError):
        bonferroni(1.0, 3)


def test_prune_around_lunch():
    t = _dish()
    fam = _family(t)
    result = dynamic_prune(fam, t, t.mask_of(["Caesar salad", "cheese sandwich"]))
    assert t.names_of(result.lca) == ["lunch"]
    assert result.m_effective == 9
    assert result.survivors == (1, 2, 4, 5, 6, 7, 8, 9, 10)
    assert result.pruned == 1
    assert result.collapsed == 1


def test_prune_around_single_leaf():
    t = _dish()
    fam = _family(t)
    result = dynamic_prune(fam, t, t.mask_of(["Caesar salad"]))
    assert t.names_of(result.lca) == ["Caesar salad"]
    assert result.survivors == (4, 10)
    assert result.pruned == 7
    assert result.collapsed == 2
    for cover_id in result.survivors:
        members = fam.by_id(cover_id).cover.members
        assert not members & t.mask_of(["salad", "lunch", "dish"])


def test_prune_with_all_leaves_or_none():
    t = _dish()
    fam = _family(t)
    assert dynamic_prune(fam, t, t.leaves).m_effective == 11
    empty = dynamic_prune(fam, t, 0)
    assert empty.m_effective == 11
    assert empty.lca == 0


def test_leaf_cover_always_survives_pruning():
    t = perfect_binary_tree(3)
    fam = _family(t, n=200)
    rng = np.random.default_rng(12)
    for _ in range(50):
        leaf_set = int(rng.integers(1, 1 << 8))
        leaf_set = nodesets.from_indices(t.leaf_indices[i] for i in nodesets.iter_indices(leaf_set))
        result = dynamic_prune(fam, t, leaf_set)
        assert fam.leaf_predictor_id in result.survivors
        assert result.m_effective + result.pruned + result.collapsed == len(fam)


def test_audit_fields_are_consistent():
    t = _dish()
    fam = _family(t)
    _, propagated, _ = _test_rows(t)
    for pool in candidate_pools(fam, t, propagated, 0.1):
        assert 1 <= pool.m_effective <= pool.m_total == 11
        assert pool.alpha_corrected == pytest.approx(0.1 / pool.m_effective)
        assert pool.alpha_corrected <= 0.1


def test_no_pruning_uses_every_cover():
    t = _dish()
    fam = _family(t)
    _, propagated, _ = _test_rows(t, n=50)
    pruned = candidate_pools(fam, t, propagated, 0.1)
    full = candidate_pools(fam, t, propagated, 0.1, prune=False)
    for a, b in zip(pruned, full):
        assert b.m_effective == 11
        assert b.alpha_corrected == pytest.approx(0.1 / 11)
        assert b.m_effective >= a.m_effective


def test_beta_zero_picks_fewest_nodes():
    t = _dish()
    fam = _family(t)
    _, propagated, _ = _test_rows(t)
    for values in propagated.tolist():
        pool = candidate_pool(fam, t, values, 0.1)
        prediction = select_candidate(t, pool, CostParams(0.0))
        if pool.candidates:
            assert prediction.size == min(c.size for c in pool.candidates)


def test_large_beta_picks_fewest_leaves():
    t = _dish()
    fam = _family(t)
    _, propagated, _ = _test_rows(t)
    for values in propagated.tolist():
        pool = candidate_pool(fam, t, values, 0.1)
        prediction = select_candidate(t, pool, CostParams(1000.0))
        if pool.candidates:
            assert prediction.n_covered == min(c.n_covered for c in pool.candidates)


def test_selection_never_costs_more_than_leaf_candidate():
    t = _dish()
    fam = _family(t)
    _, propagated, _ = _test_rows(t)
    cp = CostParams(1 / 3)
    for values in propagated.tolist():
        pool = candidate_pool(fam, t, values, 0.1)
        prediction = select_candidate(t, pool, cp)
        leaf_set = fam.leaf_predictor.predict(values, pool.alpha_corrected)
        if leaf_set:
            assert prediction.cost <= set_cost(t, leaf_set, cp) + 1e-12
        assert prediction.cost == pytest.approx(set_cost(t, prediction.selected, cp))
        assert prediction.covered_leaves == leaf_cover(t, prediction.selected)


def _candidate(cover_id, size, n_covered):
    return Candidate(
        cover_id=cover_id, selected=1 << cover_id, covered_leaves=0, size=size, n_covered=n_covered
    )


def _pool(candidates, leaf_set=0):
    return CandidatePool(
        candidates=tuple(candidates),
        leaf_set=leaf_set,
        leaf_cover_id=10,
        m_effective=len(candidates) or 1,
        m_total=11,
        alpha_corrected=0.1,
        pruned=0,
    )


def test_ties_prefer_fewer_leaves_then_fewer_nodes_then_lower_id():
    t = _dish()
    cp = CostParams(1.0)
    wide = _candidate(1, size=1, n_covered=2)
    narrow = _candidate(5, size=2, n_covered=1)
    assert select_candidate(t, _pool([wide, narrow]), cp).selected_cover_id == 5
    twin = _candidate(4, size=2, n_covered=1)
    assert select_candidate(t, _pool([narrow, twin]), cp).selected_cover_id == 4
    assert select_candidate(t, _pool([twin, narrow]), cp).selected_cover_id == 4


def test_empty_pool_falls_back_to_leaf_set():
    t = _dish()
    leaf_set = t.mask_of(["Caesar salad", "Greek salad"])
    prediction = select_candidate(t, _pool([], leaf_set=leaf_set), CostParams(0.5))
    assert prediction.fallback is True
    assert prediction.selected == leaf_set
    assert prediction.cost == pytest.approx(2 + 0.5 * 2)
    assert prediction.selected_cover_id == 10


def test_hcc_predict_on_single_node_taxonomy():
    t = build_taxonomy(["only"], [])
    fam = _family(t, n=20)
    prediction = hcc_predict(fam, t, LeafScores(values=np.array([1.0])), 0.1, CostParams(0.25))
    assert t.names_of(prediction.selected) == ["only"]
    assert prediction.cost == pytest.approx(1.25)
    assert prediction.m_effective == 1
    assert prediction.fallback is False


def test_hcc_predict_rejects_other_taxonomy():
    t = _dish()
    fam = _family(t, n=50)
    other = perfect_binary_tree(2)
    with pytest.raises(CalibrationError, match="different taxonomy"):
        hcc_predict(fam, other, LeafScores(values=np.full(4, 0.25)), 0.1, CostParams(0.5))


def test_hcc_predict_matches_batch():
    t = _dish()
    fam = _family(t)
    scores, propagated, _ = _test_rows(t, n=30)
    cp = CostParams(1 / 3)
    batch = predict_batch(fam, t, propagated, 0.1, cp)
    for row, expected in zip(scores, batch):
        assert hcc_predict(fam, t, LeafScores(values=row), 0.1, cp) == expected


def test_batch_is_deterministic_across_threads():
    t = _dish()
    fam = _family(t)
    _, propagated, _ = _test_rows(t, n=120)
    cp = CostParams(1 / 3)
    single = predict_batch(fam, t, propagated, 0.1, cp, threads=1)
    assert predict_batch(fam, t, propagated, 0.1, cp, threads=1) == single
    assert predict_batch(fam, t, propagated, 0.1, cp, threads=3) == single


@pytest.mark.parametrize("alpha", [0.05, 0.1, 0.2])
def test_hierarchical_coverage(alpha):
    t = _dish()
    n_cal = n_test = 2000
    fam = _family(t, n=n_cal, seed=40)
    _, propagated, truths = _test_rows(t, n=n_test, seed=41)
    predictions = predict_batch(fam, t, propagated, alpha, CostParams(1 / 3))
    covered = np.mean([nodesets.contains(p.covered_leaves, int(y)) for p, y in zip(predictions, truths)])
    se = math.sqrt(alpha * (1 - alpha) * (1 / n_cal + 1 / n_test))
    assert covered >= 1 - alpha - 3 * se


def test_hcc_predict_accepts_numpy_alpha():
    t = _dish()
    fam = _family(t, n=200)
    scores, _, _ = _test_rows(t, n=10)
    cp = CostParams(1 / 3)
    for alpha in np.linspace(0.1, 0.4, 4):
        for row in scores:
            ls = LeafScores(values=row)
            assert hcc_predict(fam, t, ls, alpha, cp) == hcc_predict(fam, t, ls, float(alpha), cp)
