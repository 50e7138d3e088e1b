import stat

import pytest

from esas import cpabe, entities, knnse, semantic
from esas.entities import (
    QueryRequest,
    Workspace,
    ams_refresh,
    ams_release,
    build_query,
    compute_authorization,
    csp_search,
    kgc_register_owner,
    kgc_register_user,
    owner_ingest,
    sign_query,
    user_decrypt,
    user_query,
    verify_query,
)
from esas.errors import (
    CapacityExceeded,
    DuplicateId,
    SignatureError,
    TreeUnsatisfied,
    UnknownEntity,
    WorkspaceError,
)
from oracles import plain_dot

THEME = semantic.ExtractionMode.THEME_SENTENCE
T = semantic.Triple


@pytest.fixture
def ws(rng):
    ws = Workspace.create(None, 32, rng=rng)
    kgc_register_owner(ws, "hospital")
    return ws


def test_owner_registration(ws):
    kgc_register_owner(ws, "clinic")
    assert sorted(ws.owners) == ["clinic", "hospital"]
    with pytest.raises(DuplicateId):
        kgc_register_owner(ws, "clinic")
    with pytest.raises(ValueError):
        kgc_register_owner(ws, "../evil")


def test_two_owners_share_one_trapdoor(ws):
    kgc_register_owner(ws, "clinic")
    d1 = owner_ingest(ws, "hospital", b"one", "doctor", triples=[T("treat", "obj", "flu")])
    d2 = owner_ingest(ws, "clinic", b"two", "doctor", triples=[T("treat", "obj", "flu"), T("treat", "obj", "cold")])
    kgc_register_user(ws, "alice", ["doctor"])
    request = build_query(ws, ws.user_credentials("alice"), "", 5)
    q = [0] * ws.capacity
    q[ws.vocab.dimension_of(T("treat", "obj", "flu")) - 1] = 1
    td, a, r = knnse.gen_trapdoor(ws.knn_key, knnse.PlainVector(q, ws.vocab.version), ws.rng)
    for doc in (d1, d2):
        ic = ws.record(doc).index
        assert knnse.score(ic, td) == a * plain_dot(_plain(ws, doc), q) + r
    assert request.trapdoor.dimension == ws.capacity


def _plain(ws, doc_id):
    # recompute the plaintext vector the owner indexed
    return {
        "hospital-000001": semantic.vectorize_tfidf([T("treat", "obj", "flu")], _vocab_after(ws, 1)).values,
        "clinic-000001": semantic.vectorize_tfidf(
            [T("treat", "obj", "flu"), T("treat", "obj", "cold")], _vocab_after(ws, 2)
        ).values,
    }[doc_id]


def _vocab_after(ws, docs):
    v = semantic.Vocabulary(capacity=ws.capacity)
    v = semantic.update_vocabulary(v, [T("treat", "obj", "flu")])
    if docs > 1:
        v = semantic.update_vocabulary(v, [T("treat", "obj", "flu"), T("treat", "obj", "cold")])
    return v


def test_user_registration_after_documents(ws):
    policies = ["doctor", "and(doctor, cardiology)", "nurse"]
    ids = [owner_ingest(ws, "hospital", f"doc {i}".encode(), p, triples=[T("v", "obj", f"x{i}")]) for i, p in enumerate(policies)]
    creds = kgc_register_user(ws, "alice", ["doctor", "cardiology"])
    expected = {d for d in ids if cpabe.verify_authorization(ws.ams_ck[d], creds.key, ws.order)}
    assert ws.lists["alice"] == expected == {ids[0], ids[1]}
    kgc_register_user(ws, "zed", ["janitor"])
    assert ws.lists["zed"] == set()
    with pytest.raises(DuplicateId):
        kgc_register_user(ws, "alice", ["doctor"])
    with pytest.raises(ValueError):
        kgc_register_user(ws, "nobody", [])


def test_ingest_round_trip(ws):
    kgc_register_user(ws, "alice", ["doctor", "cardiology"])
    kgc_register_user(ws, "bob", ["doctor", "cardiology", "nurse"])
    doc = "The cardiologist treats the patient with aspirin.".encode()
    doc_id = owner_ingest(ws, "hospital", doc, "and(doctor, cardiology)")
    assert doc_id == "hospital-000001"
    assert doc_id in ws.lists["alice"] and doc_id in ws.lists["bob"]
    assert user_decrypt(ws.record(doc_id), ws.user_key("alice")) == doc
    assert user_decrypt(ws.record(doc_id), ws.user_key("bob")) == doc


def test_unsatisfiable_policy_reaches_nobody(ws):
    kgc_register_user(ws, "alice", ["doctor"])
    doc_id = owner_ingest(ws, "hospital", b"secret", "and(doctor, admin)", triples=[T("a", "obj", "b")])
    assert all(doc_id not in ids for ids in ws.lists.values())
    with pytest.raises(TreeUnsatisfied, match="access tree unsatisfied"):
        user_decrypt(ws.record(doc_id), ws.user_key("alice"))


def test_ingest_unknown_owner_and_capacity(ws):
    with pytest.raises(UnknownEntity):
        owner_ingest(ws, "ghost", b"x", "a", triples=[T("a", "obj", "b")])
    with pytest.raises(CapacityExceeded):
        owner_ingest(ws, "hospital", b"x", "a", triples=[T("v", "obj", str(i)) for i in range(33)])
    assert not ws.csp


def test_refresh_idempotent_and_matches_oracle(ws):
    assert ams_refresh(ws) == {}
    kgc_register_user(ws, "alice", ["a"])
    kgc_register_user(ws, "bob", ["b", "c"])
    ids = [
        owner_ingest(ws, "hospital", p.encode(), p, triples=[T("p", "obj", p)])
        for p in ["a", "or(a, b)", "and(b, c)", "2-of(a, b, c)"]
    ]
    incremental = {u: set(ids) for u, ids in ws.lists.items()}
    first = {u: set(ids) for u, ids in ams_refresh(ws).items()}
    second = {u: set(ids) for u, ids in ams_refresh(ws).items()}
    assert incremental == first == second
    assert first == {
        "alice": {ids[0], ids[1]},
        "bob": {ids[1], ids[2], ids[3]},
    }


def test_stores_consistent_and_reloadable(tmp_path, rng):
    ws = Workspace.create(tmp_path / "w", 16, rng=rng)
    kgc_register_owner(ws, "o")
    kgc_register_user(ws, "alice", ["x"])
    doc_id = owner_ingest(ws, "o", b"hello world", "x", triples=[T("a", "obj", "b")])
    ws.check_consistency()
    again = Workspace.open(tmp_path / "w", rng=rng)
    again.check_consistency()
    assert again.lists == ws.lists and again.vocab == ws.vocab
    assert user_decrypt(again.record(doc_id), again.user_key("alice")) == b"hello world"
    mode = (tmp_path / "w" / "params" / "master.env").stat().st_mode
    assert stat.S_IMODE(mode) == 0o600
    with pytest.raises(WorkspaceError):
        Workspace.create(tmp_path / "w", 16)
    with pytest.raises(WorkspaceError):
        Workspace.open(tmp_path / "missing")


def test_inconsistent_stores_detected(ws):
    owner_ingest(ws, "hospital", b"x", "a", triples=[T("a", "obj", "b")])
    ws.ams_ck.clear()
    with pytest.raises(WorkspaceError):
        ws.check_consistency()


def test_perfect_match_outside_list_excluded(ws):
    kgc_register_user(ws, "alice", ["doctor"])
    text = "Amy is going to London by train."
    hidden = owner_ingest(ws, "hospital", text.encode(), "admin", THEME)
    visible = owner_ingest(ws, "hospital", b"Bob visits Rome.", "doctor", THEME)
    results = user_query(ws, "alice", text, 10)
    assert [r.doc_id for r in results] == [visible]
    assert hidden not in [r.doc_id for r in results]


def test_ranking_and_k_bounds(ws):
    kgc_register_user(ws, "alice", ["doctor"])
    docs = {
        "a": "Amy is going to London by train.",
        "b": "Amy is going to Paris by car.",
        "c": "Bob visits Rome.",
    }
    ids = {k: owner_ingest(ws, "hospital", v.encode(), "doctor", THEME) for k, v in docs.items()}
    results = user_query(ws, "alice", "Amy is going to London by train", 10)
    assert [r.doc_id for r in results] == [ids["a"], ids["b"], ids["c"]]
    assert [r.rank for r in results] == [1, 2, 3]
    assert results[0].score > results[1].score > results[2].score
    top = user_query(ws, "alice", "Amy is going to London by train", 1)
    assert [r.doc_id for r in top] == [ids["a"]]


def test_ties_break_by_id(ws):
    kgc_register_user(ws, "alice", ["doctor"])
    ids = [owner_ingest(ws, "hospital", b"x", "doctor", triples=[T("same", "obj", "thing")]) for _ in range(3)]
    results = user_query(ws, "alice", "nothing matches here", 3)
    assert [r.doc_id for r in results] == ids
    assert len({r.score for r in results}) == 1


def test_query_signatures(ws):
    alice = kgc_register_user(ws, "alice", ["a"])
    bob = kgc_register_user(ws, "bob", ["b"])
    request = build_query(ws, alice, "anything", 3)
    raw = request.trapdoor.to_bytes()
    assert verify_query(ws, "alice", raw, request.tag)
    assert not verify_query(ws, "alice", raw, sign_query(bob, raw))
    tampered = bytearray(raw)
    tampered[-2] ^= 0x01
    assert not verify_query(ws, "alice", bytes(tampered), request.tag)
    forged = QueryRequest("alice", request.trapdoor, 3, sign_query(bob, raw))
    with pytest.raises(SignatureError):
        ams_release(ws, forged)
    with pytest.raises(UnknownEntity):
        verify_query(ws, "mallory", raw, request.tag)


def test_offline_and_recomputed_lists_agree(ws):
    kgc_register_user(ws, "alice", ["a"])
    for p in ["a", "b", "or(a, b)"]:
        owner_ingest(ws, "hospital", p.encode(), p, triples=[T("v", "obj", p)])
    creds = ws.user_credentials("alice")
    request = build_query(ws, creds, "", 5)
    assert ams_release(ws, request) == ams_release(ws, request, recompute=True) == compute_authorization(ws, "alice")
    assert [r.doc_id for r in csp_search(ws, request, ams_release(ws, request))] == [
        r.doc_id for r in csp_search(ws, request, ams_release(ws, request, recompute=True))
    ]


def test_stale_trapdoor_rejected(ws):
    from esas.errors import DimensionMismatch

    kgc_register_user(ws, "alice", ["a"])
    request = build_query(ws, ws.user_credentials("alice"), "", 5)
    owner_ingest(ws, "hospital", b"x", "a", triples=[T("v", "obj", "new")])
    with pytest.raises(DimensionMismatch):
        csp_search(ws, request, ws.lists["alice"])


def test_credentials_export_import(ws):
    creds = kgc_register_user(ws, "alice", ["a", "b"])
    again = entities.import_credentials(entities.export_credentials(creds))
    assert again.user_id == "alice" and again.signing_key == creds.signing_key
    assert again.key.S == creds.key.S and again.knn_key == creds.knn_key


def test_unknown_lookups(ws):
    with pytest.raises(UnknownEntity):
        ws.record("nope")
    with pytest.raises(UnknownEntity):
        ws.user_key("nope")
    creds = kgc_register_user(ws, "alice", ["a"])
    with pytest.raises(ValueError):
        build_query(ws, creds, "x", 0)


def test_metadata_is_public(ws):
    kgc_register_user(ws, "alice", ["doctor"])
    owner_ingest(ws, "hospital", b"x", "doctor", triples=[T("a", "obj", "b")])
    meta = ws.metadata()
    assert meta["curve"] == "BLS12-381"
    assert meta["documents"] == [{"id": "hospital-000001", "policy": "doctor"}]
    assert meta["authorization"] == {"alice": 1}
    flat = repr(meta)
    assert "alpha" not in flat and "M1" not in flat
