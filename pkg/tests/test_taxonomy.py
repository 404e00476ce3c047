from pathlib import Path

import numpy as np
import pytest

from hiercp_core import nodesets
from hiercp_core.taxonomy import (
    TaxonomyError,
    build_taxonomy,
    lca_set,
    leaf_cover,
    load_taxonomy,
    node_depth,
    parse_taxonomy,
    perfect_binary_tree,
    random_dag,
)

ASSETS = Path(__file__).parent / "assets"


def _dish():
    return load_taxonomy(ASSETS / "dish_taxonomy.json")


def _naive_descendants(t, v):
    seen = set()
    stack = list(t.children[v])
    while stack:
        node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        stack.extend(t.children[node])
    return seen


def test_dish_taxonomy_shape():
    t = _dish()
    assert t.size == 12
    assert len(t.leaf_indices) == 7
    assert t.depth == 3
    assert t.names[t.root] == "dish"
    assert t.leaf_names == (
        "omelette",
        "pancakes",
        "Greek salad",
        "Caesar salad",
        "cheese sandwich",
        "ham sandwich",
        "tuna sandwich",
    )


def test_leaf_cover_of_breakfast_and_sandwich():
    t = _dish()
    covered = leaf_cover(t, t.mask_of(["breakfast", "sandwich"]))
    assert set(t.names_of(covered)) == {
        "omelette",
        "pancakes",
        "cheese sandwich",
        "ham sandwich",
        "tuna sandwich",
    }


def test_leaf_cover_of_leaf_and_empty_set():
    t = _dish()
    caesar = t.mask_of(["Caesar salad"])
    assert leaf_cover(t, caesar) == caesar
    assert leaf_cover(t, 0) == 0
    assert leaf_cover(t, nodesets.bit(t.root)) == t.leaves


def test_leaf_cover_is_monotone():
    rng = np.random.default_rng(3)
    for seed in range(20):
        t = random_dag(2 + seed, seed)
        for _ in range(20):
            small = nodesets.from_indices(v for v in range(t.size) if rng.random() < 0.3)
            extra = nodesets.from_indices(v for v in range(t.size) if rng.random() < 0.3)
            assert nodesets.is_subset(leaf_cover(t, small), leaf_cover(t, small | extra))


def test_leaf_cover_of_children_matches_parent():
    taxonomies = [_dish(), perfect_binary_tree(3)] + [random_dag(2 + seed, seed) for seed in range(20)]
    for t in taxonomies:
        for v in t.internal_indices:
            children = nodesets.from_indices(t.children[v])
            assert leaf_cover(t, children) == leaf_cover(t, nodesets.bit(v))


def test_lca_set_examples():
    t = _dish()
    assert t.names_of(lca_set(t, t.mask_of(["Caesar salad", "cheese sandwich"]))) == ["lunch"]
    assert t.names_of(lca_set(t, t.mask_of(["Caesar salad"]))) == ["Caesar salad"]
    assert t.names_of(lca_set(t, t.leaves)) == ["dish"]
    assert t.names_of(lca_set(t, t.mask_of(["dish", "lunch"]))) == ["dish"]


def test_lca_set_of_empty_set_raises():
    with pytest.raises(TaxonomyError, match="empty node set"):
        lca_set(_dish(), 0)


def test_lca_set_on_diamond_has_two_members():
    t = build_taxonomy(
        ["r", "a", "b", "c", "d"],
        [("r", "a"), ("r", "b"), ("a", "c"), ("a", "d"), ("b", "c"), ("b", "d")],
    )
    assert t.names_of(lca_set(t, t.mask_of(["c", "d"]))) == ["a", "b"]


def test_lca_set_is_minimal_antichain_on_random_dags():
    rng = np.random.default_rng(11)
    for seed in range(50):
        t = random_dag(3 + seed % 18, seed)
        others = [v for v in range(t.size) if v != t.root]
        for _ in range(30):
            k = int(rng.integers(2, len(others) + 1))
            s = nodesets.from_indices(int(v) for v in rng.choice(others, size=k, replace=False))
            result = lca_set(t, s)
            members = nodesets.to_indices(result)
            assert members
            common = t.all_nodes
            for v in nodesets.iter_indices(s):
                common &= t.ancestors[v]
            for a in members:
                assert not t.descendants[a] & result
                for v in nodesets.iter_indices(s):
                    assert t.is_ancestor(a, v)
            for c in nodesets.iter_indices(common):
                assert any(c == a or t.is_ancestor(c, a) for a in members)


def test_node_depth():
    t = _dish()
    assert node_depth(t, t.node_id("dish")) == 0
    assert node_depth(t, t.node_id("Caesar salad")) == 3
    assert node_depth(t, t.node_id("omelette")) == 2
    with pytest.raises(TaxonomyError, match="outside"):
        node_depth(t, 12)


def test_depth_is_longest_path_on_dag():
    t = build_taxonomy(["r", "a", "b", "c"], [("r", "a"), ("a", "b"), ("r", "c"), ("b", "c")])
    assert node_depth(t, t.node_id("c")) == 3


def test_rejects_cycle():
    doc = {"nodes": ["r", "a", "b"], "edges": [["r", "a"], ["a", "b"], ["b", "a"]]}
    with pytest.raises(TaxonomyError, match="Cycle detected"):
        parse_taxonomy(doc)


def test_rejects_self_loop():
    with pytest.raises(TaxonomyError, match="Cycle detected: a -> a"):
        build_taxonomy(["r", "a"], [("r", "a"), ("a", "a")])


def test_rejects_two_roots():
    with pytest.raises(TaxonomyError, match="exactly one root, found 2"):
        build_taxonomy(["r", "s", "a"], [("r", "a"), ("s", "a")])


def test_rejects_duplicate_names():
    with pytest.raises(TaxonomyError, match="Duplicate node name 'a'"):
        build_taxonomy(["r", "a", "a"], [("r", "a")])


def test_rejects_unknown_edge_endpoint_with_suggestion():
    doc = {"nodes": ["dish", "lunch"], "edges": [["dish", "lunh"]]}
    with pytest.raises(TaxonomyError, match="closest: lunch"):
        parse_taxonomy(doc)


def test_rejects_empty_and_malformed_documents():
    with pytest.raises(TaxonomyError, match="Invalid taxonomy document"):
        parse_taxonomy({"nodes": []})
    with pytest.raises(TaxonomyError, match="Invalid taxonomy document"):
        parse_taxonomy("{not json")
    with pytest.raises(TaxonomyError, match="Invalid taxonomy document"):
        parse_taxonomy({"nodes": ["r"], "colour": "blue"})


def test_missing_file_raises(tmp_path):
    with pytest.raises(TaxonomyError, match="Cannot read taxonomy file"):
        load_taxonomy(tmp_path / "missing.json")


def test_single_node_taxonomy():
    t = parse_taxonomy('{"nodes": ["only"]}')
    assert t.leaves == nodesets.bit(0)
    assert t.depth == 0
    assert lca_set(t, t.leaves) == t.leaves


def test_fingerprint_ignores_edge_order():
    a = build_taxonomy(["r", "a", "b"], [("r", "a"), ("r", "b")])
    b = build_taxonomy(["r", "a", "b"], [("r", "b"), ("r", "a")])
    c = build_taxonomy(["r", "b", "a"], [("r", "a"), ("r", "b")])
    assert a.fingerprint == b.fingerprint
    assert a.fingerprint != c.fingerprint


def test_to_document_round_trip():
    t = _dish()
    assert parse_taxonomy(t.to_document()).fingerprint == t.fingerprint


def test_reachability_matches_dfs_on_random_dags():
    for seed in range(30):
        t = random_dag(1 + seed % 50, seed)
        for v in range(t.size):
            assert set(nodesets.iter_indices(t.descendants[v])) == _naive_descendants(t, v)
            for a in nodesets.iter_indices(t.ancestors[v]):
                assert t.is_ancestor(a, v)


def test_perfect_binary_tree_sizes():
    for depth in range(5):
        t = perfect_binary_tree(depth)
        assert t.size == 2 ** (depth + 1) - 1
        assert len(t.leaf_indices) == 2**depth
        assert t.depth == depth
