"""Protocol roles over a persistent workspace.

Six parties share one :class:`Workspace`:

* KGC  - system setup, owner and user registration (``kgc_*``)
* DO   - document ingestion (``owner_ingest``)
* NLPS - triples and secure index, run inside ``owner_ingest``
* AMS  - offline authorization lists, query authentication (``ams_*``)
* CSP  - encrypted storage and top-k scoring (``csp_*``)
* DU   - trapdoors, signed queries, decryption (``user_*``)

Layout of a workspace::

    workspace.env                 capacity, security level, format
    params/system.env             public parameters
    params/master.env             KGC master secret            (0600)
    params/knnse.env              system KNN-SE key            (0600)
    owners/<id>.env               owner registration record
    owners/<id>.key.env           KNN-SE key delivered to owner (0600)
    users/<id>.env                attributes + verification key
    users/<id>.key.env            user credentials for delivery (0600)
    ams/ck/<doc>.env              (ID, CK) held by the AMS
    ams/lists.env                 authorization lists
    csp/<doc>.env                 stored document records
    vocab/vocabulary.env          triple vocabulary
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from . import cpabe, envelope, knnse, semantic
from .errors import (
    DimensionMismatch,
    DuplicateId,
    SignatureError,
    TreeUnsatisfied,
    UnknownEntity,
    WorkspaceError,
)
from .group import RandomSource, default_rng, kdf_key, setup_group, sym_decrypt, sym_encrypt
from .store import DirectoryStore, MemoryStore, Store

_ID_RE = re.compile(r"[A-Za-z0-9_.@-]{1,128}")


def _check_id(kind: str, value: str) -> str:
    if not isinstance(value, str) or not _ID_RE.fullmatch(value) or value.startswith("."):
        raise ValueError(f"invalid {kind} id {value!r}")
    return value


# -- records -----------------------------------------------------------------


@dataclass(frozen=True)
class DocumentRecord:
    doc_id: str
    ck: cpabe.KeyCiphertext
    index: knnse.SecureIndex
    ciphertext: bytes

    @property
    def owner_id(self) -> str:
        return self.doc_id.rsplit("-", 1)[0]

    def to_dict(self) -> dict:
        return {
            "id": self.doc_id,
            "ck": self.ck.to_dict(),
            "index": self.index.to_dict(),
            "ciphertext": envelope.b64(self.ciphertext),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DocumentRecord":
        return cls(
            doc_id=data["id"],
            ck=cpabe.KeyCiphertext.from_dict(data["ck"]),
            index=knnse.SecureIndex.from_dict(data["index"]),
            ciphertext=envelope.unb64(data["ciphertext"]),
        )


@dataclass
class OwnerRecord:
    owner_id: str
    next_doc: int = 1

    def to_dict(self) -> dict:
        return {"id": self.owner_id, "next_doc": self.next_doc}


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    attributes: frozenset[str]
    verify_key: bytes

    def to_dict(self) -> dict:
        return {
            "id": self.user_id,
            "attributes": sorted(self.attributes),
            "verify_key": envelope.b64(self.verify_key),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "UserRecord":
        return cls(data["id"], frozenset(data["attributes"]), envelope.unb64(data["verify_key"]))


@dataclass(frozen=True)
class UserCredentials:
    """Everything delivered to a data user over the secure channel."""

    user_id: str
    key: cpabe.UserKey
    signing_key: bytes
    knn_key: knnse.OwnerKey

    def to_dict(self) -> dict:
        return {
            "id": self.user_id,
            "user_key": self.key.to_dict(),
            "signing_key": envelope.b64(self.signing_key),
            "knnse_key": self.knn_key.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "UserCredentials":
        return cls(
            user_id=data["id"],
            key=cpabe.UserKey.from_dict(data["user_key"]),
            signing_key=envelope.unb64(data["signing_key"]),
            knn_key=knnse.OwnerKey.from_dict(data["knnse_key"]),
        )


@dataclass(frozen=True)
class QueryRequest:
    user_id: str
    trapdoor: knnse.Trapdoor
    k: int
    tag: bytes

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1")


@dataclass(frozen=True)
class QueryResult:
    rank: int
    doc_id: str
    score: Fraction
    record: DocumentRecord


# -- workspace ---------------------------------------------------------------


@dataclass
class Workspace:
    store: Store
    params: cpabe.SystemParams
    msk: cpabe.MasterSecret
    knn_key: knnse.OwnerKey
    vocab: semantic.Vocabulary
    rng: RandomSource = field(default_factory=default_rng)
    owners: dict[str, OwnerRecord] = field(default_factory=dict)
    users: dict[str, UserRecord] = field(default_factory=dict)
    credentials: dict[str, UserCredentials] = field(default_factory=dict)
    ams_ck: dict[str, cpabe.KeyCiphertext] = field(default_factory=dict)
    csp: dict[str, DocumentRecord] = field(default_factory=dict)
    lists: dict[str, set[str]] = field(default_factory=dict)

    @property
    def order(self) -> int:
        return self.params.ctx.order

    @property
    def capacity(self) -> int:
        return self.knn_key.n

    @classmethod
    def create(
        cls,
        location: Union[Store, os.PathLike, str, None],
        capacity: int,
        security_level: int = 128,
        rng: Optional[RandomSource] = None,
    ) -> "Workspace":
        """KGC initialization: group, PP/MSK, the system KNN-SE key, empty stores."""
        store = _as_store(location)
        if not store.is_empty():
            raise WorkspaceError("workspace exists (target is not empty)")
        if not isinstance(capacity, int) or capacity < 1:
            raise ValueError("vocabulary capacity must be a positive integer")
        rng = rng or default_rng()
        ctx = setup_group(security_level)
        params, msk = cpabe.system_setup(ctx, rng)
        ws = cls(
            store=store,
            params=params,
            msk=msk,
            knn_key=knnse.owner_keygen(capacity, rng),
            vocab=semantic.Vocabulary(capacity=capacity),
            rng=rng,
        )
        store.write(
            "workspace.env",
            envelope.dump("WORKSPACE", {"capacity": capacity, "security_level": security_level}),
        )
        store.write("params/system.env", envelope.dump("SYSTEM-PARAMS", params.to_dict()))
        store.write("params/master.env", envelope.dump("MASTER-SECRET", msk.to_dict(ctx.order)), private=True)
        store.write("params/knnse.env", envelope.dump("KNNSE-KEY", ws.knn_key.to_dict()), private=True)
        ws._save_vocab()
        ws._save_lists()
        return ws

    @classmethod
    def open(cls, location: Union[Store, os.PathLike, str], rng: Optional[RandomSource] = None) -> "Workspace":
        store = _as_store(location)
        if not store.exists("workspace.env"):
            raise WorkspaceError("not a workspace (workspace.env missing)")
        meta = envelope.load(store.read("workspace.env"), "WORKSPACE")
        params = cpabe.SystemParams.from_dict(envelope.load(store.read("params/system.env"), "SYSTEM-PARAMS"))
        order = params.ctx.order
        ws = cls(
            store=store,
            params=params,
            msk=cpabe.MasterSecret.from_dict(envelope.load(store.read("params/master.env"), "MASTER-SECRET"), order),
            knn_key=knnse.OwnerKey.from_dict(envelope.load(store.read("params/knnse.env"), "KNNSE-KEY")),
            vocab=semantic.Vocabulary.from_dict(envelope.load(store.read("vocab/vocabulary.env"), "VOCABULARY")),
            rng=rng or default_rng(),
        )
        if ws.knn_key.n != int(meta["capacity"]):
            raise WorkspaceError("KNN-SE key dimension disagrees with workspace capacity")
        for name in store.list("owners"):
            if not name.endswith(".key.env"):
                data = envelope.load(store.read(name), "OWNER-RECORD")
                ws.owners[data["id"]] = OwnerRecord(data["id"], int(data["next_doc"]))
        for name in store.list("users"):
            if name.endswith(".key.env"):
                creds = UserCredentials.from_dict(envelope.load(store.read(name), "USER-CREDENTIALS"))
                ws.credentials[creds.user_id] = creds
            else:
                rec = UserRecord.from_dict(envelope.load(store.read(name), "USER-RECORD"))
                ws.users[rec.user_id] = rec
        for name in store.list("ams/ck"):
            data = envelope.load(store.read(name), "KEY-CIPHERTEXT")
            ws.ams_ck[data["id"]] = cpabe.KeyCiphertext.from_dict(data["ck"])
        for name in store.list("csp"):
            rec = DocumentRecord.from_dict(envelope.load(store.read(name), "DOCUMENT-RECORD"))
            ws.csp[rec.doc_id] = rec
        lists = envelope.load(store.read("ams/lists.env"), "AUTH-LISTS")
        ws.lists = {user: set(ids) for user, ids in lists.items()}
        return ws

    # persistence helpers

    def _save_vocab(self) -> None:
        self.store.write("vocab/vocabulary.env", envelope.dump("VOCABULARY", self.vocab.to_dict()))

    def _save_lists(self) -> None:
        data = {user: sorted(ids) for user, ids in sorted(self.lists.items())}
        self.store.write("ams/lists.env", envelope.dump("AUTH-LISTS", data))

    def _save_owner(self, rec: OwnerRecord) -> None:
        self.store.write(f"owners/{rec.owner_id}.env", envelope.dump("OWNER-RECORD", rec.to_dict()))

    def user_key(self, user_id: str) -> cpabe.UserKey:
        return self.user_credentials(user_id).key

    def user_credentials(self, user_id: str) -> UserCredentials:
        try:
            return self.credentials[user_id]
        except KeyError:
            raise UnknownEntity(f"unknown user {user_id!r}") from None

    def record(self, doc_id: str) -> DocumentRecord:
        try:
            return self.csp[doc_id]
        except KeyError:
            raise UnknownEntity(f"unknown document {doc_id!r}") from None

    def check_consistency(self) -> None:
        """AMS (ID, CK) pairs must mirror the CSP store."""
        if set(self.ams_ck) != set(self.csp):
            raise WorkspaceError("AMS and CSP document sets differ")
        for doc_id, ck in self.ams_ck.items():
            if ck.to_dict() != self.csp[doc_id].ck.to_dict():
                raise WorkspaceError(f"AMS and CSP disagree on CK of {doc_id}")

    def metadata(self) -> dict:
        ctx = self.params.ctx
        return {
            "curve": ctx.curve,
            "security_level": ctx.security_level,
            "capacity": self.capacity,
            "vocabulary": {"size": len(self.vocab), "version": self.vocab.version, "documents": self.vocab.doc_count},
            "owners": sorted(self.owners),
            "users": {u: sorted(r.attributes) for u, r in sorted(self.users.items())},
            "documents": [
                {"id": d, "policy": self.csp[d].ck.tree.to_policy()} for d in sorted(self.csp)
            ],
            "authorization": {u: len(self.lists.get(u, ())) for u in sorted(self.users)},
        }


def _as_store(location) -> Store:
    if location is None:
        return MemoryStore()
    if isinstance(location, (str, os.PathLike)):
        return DirectoryStore(location)
    return location


# -- KGC ---------------------------------------------------------------------


def kgc_register_owner(ws: Workspace, owner_id: str) -> knnse.OwnerKey:
    _check_id("owner", owner_id)
    if owner_id in ws.owners:
        raise DuplicateId(f"owner {owner_id!r} already registered")
    rec = OwnerRecord(owner_id)
    ws.owners[owner_id] = rec
    ws._save_owner(rec)
    ws.store.write(f"owners/{owner_id}.key.env", envelope.dump("KNNSE-KEY", ws.knn_key.to_dict()), private=True)
    return ws.knn_key


def kgc_register_user(ws: Workspace, user_id: str, attributes: Iterable[str]) -> UserCredentials:
    _check_id("user", user_id)
    attrs = frozenset(a.strip() for a in attributes if a.strip())
    if user_id in ws.users:
        raise DuplicateId(f"user {user_id!r} already registered")
    if not attrs:
        raise ValueError("a user needs at least one attribute")
    key = cpabe.user_keygen(ws.params, ws.msk, attrs, ws.rng)
    seed = ws.rng.getrandbits(256).to_bytes(32, "big")
    signer = Ed25519PrivateKey.from_private_bytes(seed)
    verify = signer.public_key().public_bytes_raw()
    creds = UserCredentials(user_id, key, seed, ws.knn_key)
    ws.users[user_id] = UserRecord(user_id, attrs, verify)
    ws.credentials[user_id] = creds
    ws.store.write(f"users/{user_id}.env", envelope.dump("USER-RECORD", ws.users[user_id].to_dict()))
    ws.store.write(f"users/{user_id}.key.env", envelope.dump("USER-CREDENTIALS", creds.to_dict()), private=True)
    # offline authorization for the newcomer over every stored document
    ws.lists[user_id] = {doc_id for doc_id, ck in ws.ams_ck.items() if cpabe.verify_authorization(ck, key, ws.order)}
    ws._save_lists()
    return creds


def export_credentials(creds: UserCredentials) -> str:
    return envelope.dump("USER-CREDENTIALS", creds.to_dict())


def import_credentials(text: str) -> UserCredentials:
    return UserCredentials.from_dict(envelope.load(text, "USER-CREDENTIALS"))


# -- data owner + NLPS --------------------------------------------------------


def build_plain_vector(
    triples: Sequence[semantic.Triple], vocab: semantic.Vocabulary, mode: semantic.ExtractionMode
) -> knnse.PlainVector:
    if mode is semantic.ExtractionMode.THEME_SENTENCE:
        return semantic.vectorize_binary(triples, vocab)
    return semantic.vectorize_tfidf(triples, vocab)


def owner_ingest(
    ws: Workspace,
    owner_id: str,
    document: bytes,
    policy: Union[str, cpabe.AccessTree],
    mode: semantic.ExtractionMode = semantic.ExtractionMode.ALL_SENTENCES,
    triples: Optional[Sequence[semantic.Triple]] = None,
) -> str:
    """Outsource one document; returns its ID."""
    try:
        owner = ws.owners[owner_id]
    except KeyError:
        raise UnknownEntity(f"unknown owner {owner_id!r}") from None
    tree = cpabe.parse_policy(policy) if isinstance(policy, str) else policy
    if triples is None:
        triples = semantic.extract_triples(document.decode("utf-8", errors="replace"), mode)
    triples = list(triples)
    vocab = semantic.update_vocabulary(ws.vocab, triples)

    # NLPS: index under the system KNN-SE key
    vector = build_plain_vector(triples, vocab, mode)
    index = knnse.encrypt_index(ws.knn_key, vector, ws.rng)

    # DO: fresh K, CP-ABE encapsulation, symmetric encryption under H1(K)
    K, ck = cpabe.encapsulate_key(ws.params, tree, ws.rng)
    ciphertext = sym_encrypt(kdf_key(K), document, ws.rng)

    doc_id = f"{owner_id}-{owner.next_doc:06d}"
    owner.next_doc += 1
    record = DocumentRecord(doc_id, ck, index, ciphertext)
    ws.vocab = vocab
    ws.csp[doc_id] = record
    ws.ams_ck[doc_id] = ck
    ws.store.write(f"csp/{doc_id}.env", envelope.dump("DOCUMENT-RECORD", record.to_dict()))
    ws.store.write(f"ams/ck/{doc_id}.env", envelope.dump("KEY-CIPHERTEXT", {"id": doc_id, "ck": ck.to_dict()}))
    ws._save_owner(owner)
    ws._save_vocab()
    _ams_authorize_document(ws, doc_id)
    return doc_id


# -- AMS ---------------------------------------------------------------------


def _ams_authorize_document(ws: Workspace, doc_id: str) -> None:
    ck = ws.ams_ck[doc_id]
    for user_id, creds in ws.credentials.items():
        members = ws.lists.setdefault(user_id, set())
        if cpabe.verify_authorization(ck, creds.key, ws.order):
            members.add(doc_id)
        else:
            members.discard(doc_id)
    ws._save_lists()


def compute_authorization(ws: Workspace, user_id: str) -> set[str]:
    key = ws.user_key(user_id)
    return {doc_id for doc_id, ck in ws.ams_ck.items() if cpabe.verify_authorization(ck, key, ws.order)}


def ams_refresh(ws: Workspace) -> dict[str, set[str]]:
    """Recompute every user's list from scratch."""
    ws.lists = {user_id: compute_authorization(ws, user_id) for user_id in ws.credentials}
    ws._save_lists()
    return ws.lists


def sign_query(creds: UserCredentials, trapdoor_bytes: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(creds.signing_key).sign(trapdoor_bytes)


def verify_query(ws: Workspace, user_id: str, trapdoor_bytes: bytes, tag: bytes) -> bool:
    try:
        rec = ws.users[user_id]
    except KeyError:
        raise UnknownEntity(f"unknown user {user_id!r}") from None
    try:
        Ed25519PublicKey.from_public_bytes(rec.verify_key).verify(tag, trapdoor_bytes)
    except InvalidSignature:
        return False
    return True


def ams_release(ws: Workspace, request: QueryRequest, recompute: bool = False) -> set[str]:
    """Authenticate the query and hand the user's list to the CSP."""
    if not verify_query(ws, request.user_id, request.trapdoor.to_bytes(), request.tag):
        raise SignatureError(f"query authentication failed for user {request.user_id!r}")
    if recompute:
        return compute_authorization(ws, request.user_id)
    return set(ws.lists.get(request.user_id, ()))


# -- CSP ---------------------------------------------------------------------


def csp_search(ws: Workspace, request: QueryRequest, authorized: Iterable[str]) -> list[QueryResult]:
    td = request.trapdoor
    scored = []
    for doc_id in authorized:
        record = ws.record(doc_id)
        if record.index.vocab_version > td.vocab_version:
            raise DimensionMismatch(
                f"trapdoor built on vocabulary v{td.vocab_version} is older than index {doc_id} (v{record.index.vocab_version})"
            )
        scored.append((knnse.score(record.index, td), doc_id))
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [
        QueryResult(rank, doc_id, value, ws.csp[doc_id])
        for rank, (value, doc_id) in enumerate(scored[: request.k], start=1)
    ]


# -- data user ---------------------------------------------------------------


def build_query(ws: Workspace, creds: UserCredentials, query_text: str, k: int) -> QueryRequest:
    if k < 1:
        raise ValueError("k must be at least 1")
    q = semantic.query_to_vector(query_text, ws.vocab)
    td, _, _ = knnse.gen_trapdoor(creds.knn_key, q, ws.rng)
    return QueryRequest(creds.user_id, td, k, sign_query(creds, td.to_bytes()))


def user_query(
    ws: Workspace, user_id: str, query_text: str, k: int, recompute: bool = False
) -> list[QueryResult]:
    """Trapdoor -> AMS authentication and list release -> CSP ranked top-k.

    ``recompute`` rebuilds the list at query time instead of using the offline one.
    """
    creds = ws.user_credentials(user_id)
    request = build_query(ws, creds, query_text, k)
    return csp_search(ws, request, ams_release(ws, request, recompute))


def user_decrypt(record: DocumentRecord, ukey: cpabe.UserKey) -> bytes:
    order = setup_group().order
    root_value = cpabe.recover_root(record.ck, ukey, order)
    if root_value is None:
        raise TreeUnsatisfied()
    K = cpabe.decapsulate_key(record.ck, ukey, root_value)
    return sym_decrypt(kdf_key(K), record.ciphertext)
