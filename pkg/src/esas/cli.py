"""Command-line driver for a workspace.

Every command prints one JSON document on stdout; diagnostics go to stderr.
Exit codes: 0 success, 1 usage, 2 protocol/crypto failure, 3 I/O.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import cpabe, entities, envelope, semantic
from .errors import EsasError, WorkspaceError
from .group import default_rng
from .store import DirectoryStore

EXIT_OK, EXIT_USAGE, EXIT_PROTOCOL, EXIT_IO = 0, 1, 2, 3

WORKSPACE_ENV = "ESAS_WORKSPACE"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="esas", description="Semantic, attribute-authorized search over encrypted documents.")
    parser.add_argument("--workspace", "-w", help=f"workspace directory (default: ${WORKSPACE_ENV})")
    parser.add_argument("--seed", type=int, help="seed the RNG for reproducible transcripts (testing only)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("setup", help="KGC initialization of a new workspace")
    p.add_argument("--capacity", "-n", type=int, required=True, help="vocabulary capacity n")
    p.add_argument("--security-level", type=int, default=128)

    p = sub.add_parser("register", help="register a data owner or data user")
    p.add_argument("role", choices=["owner", "user"])
    p.add_argument("id")
    p.add_argument("--attrs", help="comma-separated attributes (users only)")
    p.add_argument("--export", help="also write the delivered key material to this file")

    p = sub.add_parser("ingest", help="outsource a document")
    p.add_argument("owner")
    p.add_argument("input", help="document file")
    p.add_argument("--policy", required=True, help='access policy, e.g. "and(doctor, or(cardiology, oncology))"')
    p.add_argument("--mode", choices=["theme", "all"], default="all",
                   help="theme: theme sentence + binary vector; all: every sentence + TF-IDF")
    p.add_argument("--triples", help="TAB-separated triple file used instead of extraction")

    p = sub.add_parser("query", help="ranked search as a data user")
    p.add_argument("user")
    p.add_argument("text")
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--out", help="directory to write retrieved document records into")

    p = sub.add_parser("decrypt", help="decrypt a retrieved document")
    p.add_argument("user")
    p.add_argument("doc_id")
    p.add_argument("out", help="output file for the plaintext")
    p.add_argument("--record", help="read the record from this file instead of the CSP store")

    sub.add_parser("refresh", help="recompute all authorization lists")
    sub.add_parser("inspect", help="dump public workspace metadata")
    return parser


def _rng(args):
    if args.seed is None:
        return default_rng()
    # distinct commands under one seed must not replay the same randomness
    return random.Random(f"{args.seed}|{' '.join(args.argv)}")


def _workspace_path(args) -> Path:
    path = args.workspace or os.environ.get(WORKSPACE_ENV)
    if not path:
        raise UsageError(f"no workspace given (use --workspace or ${WORKSPACE_ENV})")
    return Path(path)


def _open(args) -> entities.Workspace:
    return entities.Workspace.open(_workspace_path(args), rng=_rng(args))


def cmd_setup(args) -> dict:
    if args.capacity < 1:
        raise UsageError("capacity must be at least 1")
    store = DirectoryStore(_workspace_path(args))
    if not store.is_empty():
        raise WorkspaceError("workspace exists")
    with store.lock():
        ws = entities.Workspace.create(store, args.capacity, args.security_level, _rng(args))
    return {"workspace": str(store.root), "capacity": ws.capacity, **ws.metadata()}


def cmd_register(args) -> dict:
    path = _workspace_path(args)
    with DirectoryStore(path).lock():
        ws = _open(args)
        if args.role == "owner":
            if args.attrs:
                raise UsageError("owners do not take attributes")
            entities.kgc_register_owner(ws, args.id)
            export_name = f"owners/{args.id}.key.env"
            text = ws.store.read(export_name)
            out = {"role": "owner", "id": args.id}
        else:
            attrs = [a.strip() for a in (args.attrs or "").split(",") if a.strip()]
            if not attrs:
                raise UsageError("a user needs --attrs")
            creds = entities.kgc_register_user(ws, args.id, attrs)
            export_name = f"users/{args.id}.key.env"
            text = entities.export_credentials(creds)
            out = {
                "role": "user",
                "id": args.id,
                "attributes": sorted(creds.key.attributes),
                "authorized_documents": sorted(ws.lists.get(args.id, ())),
            }
    out["key_file"] = str(path / export_name)
    if args.export:
        Path(args.export).write_text(text, encoding="utf-8")
        os.chmod(args.export, 0o600)
        out["key_file"] = args.export
    return out


def cmd_ingest(args) -> dict:
    document = Path(args.input).read_bytes()
    triples = None
    if args.triples:
        triples = semantic.parse_triples(Path(args.triples).read_text(encoding="utf-8"))
    mode = semantic.ExtractionMode(args.mode)
    with DirectoryStore(_workspace_path(args)).lock():
        ws = _open(args)
        doc_id = entities.owner_ingest(ws, args.owner, document, args.policy, mode, triples)
        authorized = sorted(u for u, ids in ws.lists.items() if doc_id in ids)
    return {"id": doc_id, "policy": cpabe.parse_policy(args.policy).to_policy(), "authorized_users": authorized}


def cmd_query(args) -> dict:
    if args.k < 1:
        raise UsageError("k must be at least 1")
    ws = _open(args)
    results = entities.user_query(ws, args.user, args.text, args.k)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for r in results:
            (out_dir / f"{r.doc_id}.env").write_text(
                envelope.dump("DOCUMENT-RECORD", r.record.to_dict()), encoding="utf-8"
            )
    return {
        "user": args.user,
        "k": args.k,
        "results": [{"rank": r.rank, "id": r.doc_id} for r in results],
    }


def cmd_decrypt(args) -> dict:
    ws = _open(args)
    if args.record:
        record = entities.DocumentRecord.from_dict(
            envelope.load(Path(args.record).read_text(encoding="utf-8"), "DOCUMENT-RECORD")
        )
        if record.doc_id != args.doc_id:
            raise UsageError(f"record file holds {record.doc_id}, not {args.doc_id}")
    else:
        record = ws.record(args.doc_id)
    plaintext = entities.user_decrypt(record, ws.user_key(args.user))
    Path(args.out).write_bytes(plaintext)
    return {"id": args.doc_id, "out": args.out, "bytes": len(plaintext)}


def cmd_refresh(args) -> dict:
    with DirectoryStore(_workspace_path(args)).lock():
        ws = _open(args)
        lists = entities.ams_refresh(ws)
    return {"lists": {u: sorted(ids) for u, ids in sorted(lists.items())}}


def cmd_inspect(args) -> dict:
    return _open(args).metadata()


COMMANDS = {
    "setup": cmd_setup,
    "register": cmd_register,
    "ingest": cmd_ingest,
    "query": cmd_query,
    "decrypt": cmd_decrypt,
    "refresh": cmd_refresh,
    "inspect": cmd_inspect,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        argv = list(sys.argv[1:] if argv is None else argv)
        args = parser.parse_args(argv)
        args.argv = argv
        result = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"esas: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"esas: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except WorkspaceError as exc:
        print(f"esas: workspace error: {exc}", file=sys.stderr)
        return EXIT_IO
    except EsasError as exc:
        print(f"esas: error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except OSError as exc:
        print(f"esas: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    json.dump(result, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
