import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chaoskit.errors import UnderflowAt
from chaoskit.multiindex import (
    IndexSet,
    MultiIndex,
    TruncationSpec,
    add,
    characteristic_set,
    enumerate_indices,
    factorial,
    flat_slot,
    graded_rank,
    graded_unrank,
    sub_unit,
    unflat_slot,
)

e = MultiIndex.unit


def dense(*a):
    return MultiIndex(a)


def brute_force(N, K, support=None):
    """Every alpha in {0..N}^K with |alpha| <= N, in graded lex order."""
    out = [a for a in itertools.product(range(N + 1), repeat=K) if sum(a) <= N]
    if support is not None:
        out = [a for a in out if sum(x > 0 for x in a) <= support]
    out.sort(key=lambda a: (sum(a), tuple(-x for x in a)))
    return [MultiIndex(a) for a in out]


multiindices = st.dictionaries(st.integers(1, 12), st.integers(1, 4), max_size=5).map(MultiIndex)


class TestMultiIndex:
    def test_factorial_examples(self):
        assert factorial(e(3)) == 1
        assert factorial(dense(2, 1)) == 2
        assert factorial(dense(3, 0, 2)) == 12

    def test_factorial_overflows_to_inf(self):
        assert factorial(MultiIndex({1: 170})) == float(math.factorial(170))
        assert factorial(MultiIndex({1: 171})) == math.inf

    def test_add_examples(self):
        assert e(1) + e(1) == MultiIndex({1: 2})
        assert e(1) + e(2) == dense(1, 1)
        assert add(MultiIndex(), dense(0, 3, 1)) == dense(0, 3, 1)

    def test_sub_unit_examples(self):
        assert sub_unit(MultiIndex({1: 2}), 1) == e(1)
        assert sub_unit(e(1) + e(2), 2) == e(1)
        with pytest.raises(UnderflowAt) as exc:
            sub_unit(e(1), 2)
        assert exc.value.slot == 2

    def test_characteristic_set_examples(self):
        assert characteristic_set(MultiIndex()) == ()
        assert characteristic_set(MultiIndex({1: 2, 3: 1})) == (1, 1, 3)
        assert characteristic_set(e(2) + e(5)) == (2, 5)

    def test_dense_and_mapping_forms_agree(self):
        assert dense(0, 2, 0, 1) == MultiIndex({2: 2, 4: 1})
        assert dense(0, 2, 0, 1).to_dense(5) == (0, 2, 0, 1, 0)

    def test_rejects_bad_entries(self):
        with pytest.raises(ValueError):
            MultiIndex({0: 1})
        with pytest.raises(ValueError):
            MultiIndex({1: -1})

    def test_flat_slot_roundtrip(self):
        K = 7
        for field in (1, 2, 3):
            for k in range(1, K + 1):
                assert unflat_slot(flat_slot(k, field, K), K) == (k, field)
        with pytest.raises(ValueError):
            flat_slot(8, 1, 7)

    @given(multiindices, multiindices)
    def test_add_commutes_and_orders_add(self, a, b):
        assert a + b == b + a
        assert (a + b).order == a.order + b.order

    @given(multiindices)
    def test_characteristic_set_roundtrip(self, a):
        assert MultiIndex.from_characteristic_set(characteristic_set(a)) == a

    @given(multiindices, st.integers(1, 12))
    def test_sub_unit_inverts_add(self, a, k):
        assert sub_unit(a + e(k), k) == a


class TestEnumeration:
    def test_examples(self):
        assert enumerate_indices(TruncationSpec(0, 5)) == [MultiIndex()]
        assert enumerate_indices(TruncationSpec(1, 2)) == [MultiIndex(), e(1), e(2)]
        assert len(enumerate_indices(TruncationSpec(2, 2))) == 6

    @pytest.mark.parametrize("N,K", [(0, 3), (1, 1), (2, 3), (3, 4), (4, 3), (5, 2)])
    def test_matches_brute_force(self, N, K):
        assert enumerate_indices(TruncationSpec(N, K)) == brute_force(N, K)
        assert TruncationSpec(N, K).size() == math.comb(N + K, K)

    @pytest.mark.parametrize("N,K,s", [(3, 4, 1), (4, 4, 2), (5, 3, 2), (4, 5, 3)])
    def test_sparse_matches_brute_force(self, N, K, s):
        tr = TruncationSpec(N, K, s)
        ref = brute_force(N, K, s)
        assert enumerate_indices(tr) == ref
        assert tr.size() == len(ref)

    def test_sparse_size_for_large_sets(self):
        tr = TruncationSpec(8, 64, 2)
        idx = IndexSet.from_truncation(tr)
        assert len(idx) == tr.size() == 56961
        assert idx.is_downward_closed()

    @given(st.integers(0, 4), st.integers(1, 6))
    def test_rank_is_position(self, N, K):
        idx = IndexSet.from_truncation(TruncationSpec(N, K))
        assert idx.ranks() == list(range(len(idx)))

    @given(st.integers(0, 5000), st.integers(1, 9))
    def test_unrank_rank_roundtrip(self, r, K):
        assert graded_rank(graded_unrank(r, K), K) == r

    @given(multiindices)
    def test_rank_unrank_roundtrip(self, a):
        K = max(a.max_slot, 1)
        assert graded_unrank(graded_rank(a, K), K) == a

    def test_rank_rejects_wide_index(self):
        with pytest.raises(ValueError):
            graded_rank(e(4), 3)


class TestIndexSet:
    def test_lookup_and_containment(self):
        idx = IndexSet.from_truncation(TruncationSpec(3, 4))
        for i, a in enumerate(idx):
            assert idx.index_of(a) == i
            assert a in idx
        assert idx.index_of(MultiIndex({1: 4})) == -1
        assert e(5) not in idx

    def test_grade_slices_partition(self):
        idx = IndexSet.from_truncation(TruncationSpec(4, 3))
        sizes = [len(range(*idx.grade_slice(n).indices(len(idx)))) for n in range(5)]
        assert sizes == [math.comb(n + 2, 2) for n in range(5)]

    def test_lowering_table_against_definition(self):
        idx = IndexSet.from_truncation(TruncationSpec(3, 3))
        par, slot, mult = idx.lowering_table()
        for i, a in enumerate(idx):
            got = {(int(par[i, p]), int(slot[i, p]) + 1, int(mult[i, p])) for p in range(par.shape[1]) if mult[i, p]}
            want = {(idx.index_of(sub_unit(a, k)), k, m) for k, m in a.items}
            assert got == want

    def test_lowering_table_from_narrower_source(self):
        tgt = IndexSet.from_truncation(TruncationSpec(2, 4))
        src = IndexSet.from_truncation(TruncationSpec(1, 2))
        par, slot, mult = tgt.lowering_table(src)
        for i, a in enumerate(tgt):
            for p in range(par.shape[1]):
                if mult[i, p]:
                    k = int(slot[i, p]) + 1
                    assert src[int(par[i, p])] == sub_unit(a, k)

    def test_from_multiindices_sorts(self):
        idx = IndexSet.from_multiindices([e(2), MultiIndex(), e(1) + e(2), e(1)])
        assert list(idx) == [MultiIndex(), e(1), e(2), e(1) + e(2)]

    def test_log_factorials(self):
        idx = IndexSet.from_truncation(TruncationSpec(4, 3))
        np.testing.assert_allclose(np.exp(idx.log_factorials), [factorial(a) for a in idx])

    def test_code_overflow_guard(self):
        with pytest.raises(ValueError):
            IndexSet.from_truncation(TruncationSpec(20, 2000, 1))

    def test_truncation_contains_and_widen(self):
        tr = TruncationSpec(3, 4, 2)
        assert tr.contains(dense(1, 1))
        assert not tr.contains(dense(1, 1, 1))
        assert not tr.contains(e(5))
        w = tr.widen(TruncationSpec(5, 2))
        assert (w.max_order, w.max_dim, w.max_support) == (5, 4, None)
        with pytest.raises(ValueError):
            TruncationSpec(-1, 3)
