import json
import math

import numpy as np
import pytest

from neuropathnet.errors import ContractError, SchemaError
from neuropathnet.partitions import (
    BUNDLED,
    PartitionScheme,
    all_pairs,
    community_sizes,
    load_scheme,
    path_index,
    path_pair,
    save_scheme,
    scheme_from_dict,
)


def _doc(assignment, n, name="t"):
    return {"name": name, "num_rois": len(assignment), "num_communities": n,
            "assignment": [[i, c] for i, c in enumerate(assignment)]}


def test_bundled_community_counts():
    assert load_scheme("yeo7").n_communities == 7
    assert load_scheme("yeo17").n_communities == 17
    s = load_scheme("schaefer100_10")
    assert (s.num_rois, s.n_communities) == (100, 10)


def test_bundled_fixture_sizes_match_file_counts():
    for name in BUNDLED:
        s = load_scheme(name)
        sizes = community_sizes(s)
        assert sizes.sum() == s.num_rois
        assert np.all(sizes > 0)
    np.testing.assert_array_equal(community_sizes(load_scheme("yeo17")),
                                  [4, 5, 3, 4, 4, 5, 3, 4, 4, 5, 3, 4, 4, 5, 3, 4, 4])


def test_empty_community_is_rejected_with_index():
    with pytest.raises(SchemaError, match="community 1 of declared N=2"):
        scheme_from_dict(_doc([0, 0], 2))


def test_out_of_range_and_duplicate_entries():
    doc = _doc([0, 1, 1], 2)
    doc["assignment"][2] = [2, 5]
    with pytest.raises(SchemaError, match="community 5"):
        scheme_from_dict(doc)
    doc = _doc([0, 1, 1], 2)
    doc["assignment"].append([1, 0])
    with pytest.raises(SchemaError, match="duplicate entry for ROI 1"):
        scheme_from_dict(doc)
    doc = _doc([0, 1, 1], 2)
    doc["assignment"][0] = [7, 0]
    with pytest.raises(SchemaError, match="ROI index 7"):
        scheme_from_dict(doc)


def test_missing_roi_and_single_community():
    doc = _doc([0, 1, 1], 2)
    del doc["assignment"][1]
    with pytest.raises(SchemaError, match="ROI 1"):
        scheme_from_dict(doc)
    with pytest.raises(SchemaError):
        scheme_from_dict(_doc([0, 0, 0], 1))


def test_community_sizes_examples():
    np.testing.assert_array_equal(community_sizes(scheme_from_dict(_doc([0, 0, 1], 2))), [2, 1])
    s = scheme_from_dict(_doc([0] * 9 + [1], 2))
    np.testing.assert_array_equal(community_sizes(s), [9, 1])


def test_loading_is_row_order_insensitive(tmp_path, rng):
    base = load_scheme("yeo7")
    doc = base.to_dict()
    rows = doc["assignment"]
    doc["assignment"] = [rows[i] for i in rng.permutation(len(rows))]
    f = tmp_path / "shuffled.json"
    f.write_text(json.dumps(doc))
    assert load_scheme(f) == base


def test_save_load_round_trip(tmp_path):
    s = load_scheme("schaefer100_10")
    save_scheme(s, tmp_path / "s.json")
    assert load_scheme(tmp_path / "s.json") == s


def test_missing_file():
    with pytest.raises(SchemaError):
        load_scheme("/nonexistent/scheme.json")


def test_path_index_examples():
    assert path_index(0, 1, 7) == 0
    assert len(all_pairs(7)) == 21 == math.comb(7, 2)
    with pytest.raises(ContractError):
        path_index(2, 2, 5)
    with pytest.raises(ContractError):
        path_index(3, 1, 5)


@pytest.mark.parametrize("n", range(2, 21))
def test_path_index_is_a_bijection(n):
    seen = [path_index(i, j, n) for i in range(n) for j in range(i + 1, n)]
    assert sorted(seen) == list(range(math.comb(n, 2)))
    for i, j in all_pairs(n):
        assert path_pair(path_index(i, j, n), n) == (i, j)


def test_scheme_members_and_paths():
    s = PartitionScheme("x", 4, 2, (1, 0, 1, 0))
    np.testing.assert_array_equal(s.members(0), [1, 3])
    assert s.n_paths == 1
