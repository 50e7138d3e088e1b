import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esas.errors import DimensionMismatch
from esas.knnse import (
    OwnerKey,
    PlainVector,
    SecureIndex,
    Trapdoor,
    dot,
    encrypt_index,
    extend_index_vector,
    extend_query_vector,
    gen_trapdoor,
    integer_adjugate,
    owner_keygen,
    score,
    split_index_vector,
    split_query_vector,
)
from oracles import plain_dot


def identity(size):
    return [[int(i == j) for j in range(size)] for i in range(size)]


def matmul(a, b):
    return [[sum(Fraction(a[i][k]) * b[k][j] for k in range(len(b))) for j in range(len(b[0]))] for i in range(len(a))]


def test_keygen_dimensions(rng):
    key = owner_keygen(3, rng)
    assert key.n == 3
    assert len(key.S) == 4 and set(key.S) <= {0, 1}
    assert len(key.m1) == 4 and all(len(r) == 4 for r in key.m1)


def test_keygen_inverses_exact(rng):
    key = owner_keygen(5, rng)
    assert matmul(key.m1, key.m1_inv) == identity(6)
    assert matmul(key.m2, key.m2_inv) == identity(6)


def test_keygen_draws_fresh_keys(rng):
    keys = [owner_keygen(8, rng) for _ in range(5)]
    assert len({k.S for k in keys}) > 1
    assert len({k.m1 for k in keys}) == 5


def test_keygen_rejects_zero_dimension():
    with pytest.raises(ValueError):
        owner_keygen(0)


def test_integer_adjugate_small_oracle():
    det, adj = integer_adjugate([[2, 1], [7, 4]])
    assert det == 1
    assert adj == ((4, -1), (-7, 2))
    det, adj = integer_adjugate([[0, 3], [5, 0]])
    assert det == -15
    assert adj == ((0, -3), (-5, 0))
    with pytest.raises(ZeroDivisionError):
        integer_adjugate([[1, 2], [2, 4]])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.integers(-50, 50), min_size=4, max_size=4), min_size=4, max_size=4))
def test_integer_adjugate_property(m):
    try:
        det, adj = integer_adjugate(m)
    except ZeroDivisionError:
        # singular: some row combination vanishes; Fraction-based elimination must agree
        rows = [[Fraction(x) for x in r] for r in m]
        rank = 0
        for c in range(4):
            piv = next((i for i in range(rank, 4) if rows[i][c] != 0), None)
            if piv is None:
                continue
            rows[rank], rows[piv] = rows[piv], rows[rank]
            for i in range(4):
                if i != rank and rows[i][c] != 0:
                    f = rows[i][c] / rows[rank][c]
                    rows[i] = [x - f * y for x, y in zip(rows[i], rows[rank])]
            rank += 1
        assert rank < 4
        return
    inv = [[Fraction(x, det) for x in row] for row in adj]
    assert matmul(m, inv) == identity(4)


def test_singular_matrix_is_resampled():
    class Scripted(random.Random):
        calls = 0

        def randrange(self, *args):
            # first matrix all zeros, everything afterwards random
            Scripted.calls += 1
            if Scripted.calls <= 4:
                return 0
            return super().randrange(*args)

    rng = Scripted(5)
    key = owner_keygen(1, rng)
    assert matmul(key.m1, key.m1_inv) == identity(2)
    assert any(any(row) for row in key.m1)


def test_extend_index_vector():
    assert extend_index_vector([0, 0, 0]) == (0, 0, 0, 1)
    assert extend_index_vector(PlainVector((2, 5))) == (2, 5, 1)
    q = (3, 4)
    assert dot(extend_index_vector([2, 5]), q + (0,)) == plain_dot([2, 5], q)


def test_extend_query_vector():
    assert extend_query_vector([1, 0], 2, 3) == (2, 0, 3)
    assert extend_query_vector([0, 0, 0], 1, 1) == (0, 0, 0, 1)
    with pytest.raises(ValueError, match="cannot be 0"):
        extend_query_vector([1, 0], 2, 0)
    with pytest.raises(ValueError):
        extend_query_vector([1, 0], 0, 1)


def test_index_split_branches(rng):
    v = (Fraction(3), Fraction(1, 2), Fraction(0), Fraction(1))
    first, second = split_index_vector(v, [0, 0, 0, 0], rng)
    assert first == second == v
    first, second = split_index_vector(v, [1, 1, 1, 1], rng)
    assert tuple(a + b for a, b in zip(first, second)) == v
    S = [0, 1, 0, 1]
    first, second = split_index_vector(v, S, rng)
    for t, bit in enumerate(S):
        if bit == 0:
            assert first[t] == second[t] == v[t]
        else:
            assert first[t] + second[t] == v[t]


def test_query_split_branches(rng):
    q = (Fraction(2), Fraction(0), Fraction(-7))
    first, second = split_query_vector(q, [1, 1, 1], rng)
    assert first == second == q
    first, second = split_query_vector(q, [0, 0, 0], rng)
    assert tuple(a + b for a, b in zip(first, second)) == q


def test_split_length_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        split_index_vector((1, 2), [0], rng)


def test_degenerate_identity_key(rng):
    key = OwnerKey.from_parts([0, 0, 0], identity(3), identity(3))
    vc = PlainVector((1, 2))
    ic = encrypt_index(key, vc, rng)
    assert ic.first == ic.second == (1, 2, 1)
    td, a, r = gen_trapdoor(key, PlainVector((3, 0)), rng)
    assert tuple(x + y for x, y in zip(td.first, td.second)) == (3 * a, 0, r)


def test_score_identity_matches_plain_oracle(rng):
    for n in (1, 2, 5, 9):
        key = owner_keygen(n, rng)
        v = [Fraction(rng.randint(0, 9), rng.randint(1, 5)) for _ in range(n)]
        q = [rng.randint(0, 1) for _ in range(n)]
        ic = encrypt_index(key, PlainVector(v), rng)
        td, a, r = gen_trapdoor(key, PlainVector(q), rng)
        assert score(ic, td) == a * plain_dot(v, q) + r


def test_zero_index_scores_offset(rng):
    key = owner_keygen(4, rng)
    ic = encrypt_index(key, PlainVector((0, 0, 0, 0)), rng)
    td, _, r = gen_trapdoor(key, PlainVector((1, 0, 1, 1)), rng)
    assert score(ic, td) == r


def test_ranking_preserved(rng):
    key = owner_keygen(3, rng)
    v1, v2 = (3, 1, 0), (1, 1, 0)
    q = PlainVector((1, 1, 1))
    td, _, _ = gen_trapdoor(key, q, rng)
    s1 = score(encrypt_index(key, PlainVector(v1), rng), td)
    s2 = score(encrypt_index(key, PlainVector(v2), rng), td)
    assert plain_dot(v1, q.values) > plain_dot(v2, q.values)
    assert s1 > s2


def test_repeated_encryption_differs(rng):
    key = owner_keygen(4, rng)
    while not any(key.S):
        key = owner_keygen(4, rng)
    vc = PlainVector((1, 0, 2, 0))
    assert encrypt_index(key, vc, rng) != encrypt_index(key, vc, rng)


def test_repeated_trapdoors_differ_without_shared_ratio(rng):
    key = owner_keygen(4, rng)
    q = PlainVector((1, 0, 1, 0))
    t1, _, _ = gen_trapdoor(key, q, rng)
    t2, _, _ = gen_trapdoor(key, q, rng)
    assert t1.to_bytes() != t2.to_bytes()
    ratios = {b / a for a, b in zip(t1.first + t1.second, t2.first + t2.second) if a != 0}
    assert len(ratios) > 1


def test_dimension_mismatch(rng):
    key = owner_keygen(3, rng)
    with pytest.raises(DimensionMismatch):
        encrypt_index(key, PlainVector((1, 2)), rng)
    with pytest.raises(DimensionMismatch):
        gen_trapdoor(key, PlainVector((1, 2, 3, 4)), rng)
    other = owner_keygen(2, rng)
    ic = encrypt_index(key, PlainVector((1, 2, 3)), rng)
    td, _, _ = gen_trapdoor(other, PlainVector((1, 1)), rng)
    with pytest.raises(DimensionMismatch):
        score(ic, td)


def test_negative_plain_vector_rejected():
    with pytest.raises(ValueError):
        PlainVector((1, -1))


def test_serialization_round_trips(rng):
    key = owner_keygen(3, rng)
    again = OwnerKey.from_dict(key.to_dict())
    assert again == key
    ic = encrypt_index(key, PlainVector((Fraction(1, 3), 0, 2), vocab_version=4), rng)
    td, _, _ = gen_trapdoor(key, PlainVector((1, 1, 0), vocab_version=4), rng)
    assert SecureIndex.from_dict(ic.to_dict()) == ic
    assert Trapdoor.from_dict(td.to_dict()) == td
    assert score(SecureIndex.from_dict(ic.to_dict()), Trapdoor.from_dict(td.to_dict())) == score(ic, td)


def test_tampered_dimension_rejected(rng):
    key = owner_keygen(2, rng)
    data = encrypt_index(key, PlainVector((1, 1)), rng).to_dict()
    data["dimension"] = 5
    with pytest.raises(DimensionMismatch):
        SecureIndex.from_dict(data)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 8),
    seed=st.integers(0, 2**32),
    data=st.data(),
)
def test_score_identity_property(n, seed, data):
    rng = random.Random(seed)
    key = owner_keygen(n, rng)
    v = data.draw(st.lists(st.fractions(min_value=0, max_value=100, max_denominator=1000), min_size=n, max_size=n))
    q = data.draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
    td, a, r = gen_trapdoor(key, PlainVector(q), rng)
    assert score(encrypt_index(key, PlainVector(v), rng), td) == a * plain_dot(v, q) + r


def test_singular_stored_key_fails_at_trapdoor(rng):
    key = OwnerKey.from_parts([0, 1], [[1, 2], [2, 4]], identity(2))
    ic = encrypt_index(key, PlainVector((1,)), rng)
    assert ic.dimension == 1
    with pytest.raises(ValueError, match="singular"):
        gen_trapdoor(key, PlainVector((1,)), rng)
