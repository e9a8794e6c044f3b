"""labbook command line: init, serve, mkcol, import, search, lineage,
sign, verify, archive, sync, query plus key management helpers.

Exit codes: 0 ok, 1 validation error, 2 I/O or network failure,
3 integrity failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import chunks as chunkmod
from . import fabric as fabricmod
from . import glp as glpmod
from . import graph as graphmod
from . import traversal
from .client import RemotePeer, ServiceError
from .fabric import Repository
from .identity import KeyRegistry, Keyfile, UnknownSignerKey
from .questions import (
    MissingRuleset,
    NoStage,
    ProgressAnswer,
    QualityReport,
    Question,
    answer,
    default_ruleset,
)
from .notebook import (
    ImportRequest,
    MetadataViolation,
    MissingPayload,
    Notebook,
    NotCopyable,
    NotebookError,
    PlacementViolation,
    UnknownInfluence,
)
from .provstore import ProvenanceStore, ProvenanceUnavailable
from .service import LabService

CONFIG_NAME = "config.json"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_INTEGRITY = 3

_VALIDATION_ERRORS = (
    PlacementViolation,
    MetadataViolation,
    UnknownInfluence,
    NotCopyable,
    NotebookError,
    fabricmod.PathTaken,
    fabricmod.ParentNotCollection,
    fabricmod.MissingArchivalLocation,
    fabricmod.InvalidPath,
    fabricmod.InvalidItem,
    fabricmod.UnknownItem,
    fabricmod.BadPredicate,
    chunkmod.UnknownDigest,
    glpmod.UnknownCollectionType,
    glpmod.SpecInvalid,
    graphmod.DuplicateIdentifier,
    graphmod.EmptyIdentifier,
    graphmod.EndpointKindViolation,
    graphmod.UnknownNode,
    traversal.QueryError,
    UnknownSignerKey,
    MissingRuleset,
    NoStage,
    ValueError,
    fabricmod.FabricError,
    chunkmod.ChunkStoreError,
    graphmod.GraphError,
)

_IO_ERRORS = (
    fabricmod.PeerUnreachable,
    ProvenanceUnavailable,
    graphmod.IoFailure,
    chunkmod.IoFailure,
    ConnectionError,
    OSError,
)

_INTEGRITY_ERRORS = (
    graphmod.CorruptSnapshot,
    fabricmod.DigestMismatch,
    chunkmod.ChunkMissing,
    MissingPayload,
)


class Workspace:
    """A repository directory opened per the config file."""

    def __init__(self, root: Path):
        self.root = root
        config_path = root / CONFIG_NAME
        if not config_path.exists():
            raise fabricmod.FabricError(
                f"{root} is not a labbook repository (missing {CONFIG_NAME}); run init"
            )
        self.config = json.loads(config_path.read_text())
        self.registry = KeyRegistry(root / self.config["key_registry"])
        self.spec = glpmod.load_spec(root / self.config["spec_path"])
        self.repo = Repository(root / "fabric", self.config["site_id"])
        self.provenance = ProvenanceStore(root / "provenance" / "store.bin")
        self.notebook = Notebook(
            self.repo,
            self.provenance,
            self.spec,
            self.registry,
            root / "journal.jsonl",
        )
        self.notebook.replay_journal()

    def keyfile(self, override: str | None = None) -> Keyfile:
        path = Path(override) if override else self.root / self.config["identity"]
        return Keyfile.load(path)


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_init(args) -> int:
    root = Path(args.repo)
    root.mkdir(parents=True, exist_ok=True)
    config_path = root / CONFIG_NAME
    if config_path.exists():
        print(f"error: {config_path} already exists", file=sys.stderr)
        return EXIT_VALIDATION
    (root / "keys").mkdir(exist_ok=True)
    (root / "provenance").mkdir(exist_ok=True)
    dn = args.dn or f"CN={args.site_id}"
    keyfile = Keyfile.generate(dn)
    keyfile.save(root / "keys" / "identity.json")
    registry = KeyRegistry(root / "keys" / "registry.json")
    registry.add(dn, keyfile.public_b64)
    glpmod.save_spec(glpmod.default_glp_spec(), root / "glp-spec.json")
    config = {
        "site_id": args.site_id,
        "listen": args.listen,
        "peers": [],
        "key_registry": "keys/registry.json",
        "spec_path": "glp-spec.json",
        "identity": "keys/identity.json",
    }
    config_path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    Repository(root / "fabric", args.site_id)  # lay down fabric dirs
    _print({"repo": str(root), "site_id": args.site_id, "dn": dn})
    return EXIT_OK


def cmd_serve(args, ws: Workspace) -> int:
    if args.site_id and args.site_id != ws.config["site_id"]:
        print(
            f"error: repository belongs to site {ws.config['site_id']!r}; "
            "site ids are fixed at init",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    listen = args.listen or ws.config.get("listen") or "127.0.0.1:8722"
    host, _, port = listen.rpartition(":")
    static = ws.root / "webui"
    if not static.is_dir():
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        static = bundled if bundled.is_dir() else None
    service = LabService(
        ws.notebook,
        ws.registry,
        host or "127.0.0.1",
        int(port),
        static_dir=static,
    )
    peers = args.peer or ws.config.get("peers") or []
    if peers:
        _start_background_sync(ws, peers, args.sync_interval)
    print(f"listening on {service.base_url}", file=sys.stderr)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def _start_background_sync(ws: Workspace, peers: list[str], interval: float) -> None:
    """Replication as a background activity: pull from each peer on a timer."""
    import threading
    import time as timemod

    keyfile = ws.keyfile()

    def loop() -> None:
        remotes = [RemotePeer(url, keyfile) for url in peers]
        while True:
            for remote in remotes:
                try:
                    ws.repo.sync_with(remote)
                except Exception as exc:
                    print(f"sync: {exc}", file=sys.stderr)
            timemod.sleep(interval)

    threading.Thread(target=loop, daemon=True).start()


def cmd_mkcol(args, ws: Workspace) -> int:
    record = ws.notebook.create_collection(
        args.path, args.type, _parse_meta(args.meta)
    )
    _print(record.to_json_dict())
    return EXIT_OK


def _parse_meta(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValueError(f"--meta takes k=v, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key] = value
    return out


def cmd_import(args, ws: Workspace) -> int:
    payload = None
    if args.file is not None:
        payload = Path(args.file).read_bytes()
    actor = args.actor or ws.keyfile().dn
    request = ImportRequest(
        path=args.to,
        item_type=args.type,
        metadata=_parse_meta(args.meta),
        payload=payload,
        physical_location=args.location if args.physical else None,
        influences=args.influence or [],
        actor_dn=actor,
    )
    record, result = ws.notebook.import_item(request)
    _print({"item": record.to_json_dict(), "batch": result.to_json_dict()})
    return EXIT_OK


def cmd_search(args, ws: Workspace) -> int:
    records = ws.notebook.search(args.text)
    _print([r.to_json_dict() for r in records])
    return EXIT_OK


def cmd_lineage(args, ws: Workspace) -> int:
    graph = ws.provenance.graph
    node = graph.find_node(graphmod.NodeKind.ARTIFACT, args.id)
    if node is None:
        print(f"error: no artifact node for {args.id}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.question:
        context = None
        question = Question(args.question)
        if question is Question.QUALITY:
            context = {"ruleset": default_ruleset()}
        result = answer(graph, question, node.id, context)
        if isinstance(result, ProgressAnswer):
            _print({"stage": result.stage, "finalized": result.finalized})
        elif isinstance(result, QualityReport):
            _print(
                {
                    "passed": result.passed,
                    "violations": [
                        {"rule": v.rule, "message": v.message}
                        for v in result.violations
                    ],
                }
            )
        else:
            _print(
                [
                    _descriptor(graph.get_node(n))
                    for n in result.items
                ]
            )
    else:
        from .questions import LineageDirection, lineage

        ids = lineage(graph, node.id, LineageDirection(args.direction))
        _print([_descriptor(graph.get_node(n)) for n in sorted(ids)])
    return EXIT_OK


def _descriptor(node) -> dict:
    return {
        "kind": node.kind.value,
        "identifier": node.identifier,
        "annotations": dict(node.annotations),
    }


def cmd_sign(args, ws: Workspace) -> int:
    keyfile = Keyfile.load(args.key)
    record = ws.notebook.sign_item(args.id, keyfile)
    _print(record.to_json_dict())
    return EXIT_OK


def cmd_verify(args, ws: Workspace) -> int:
    verdicts = ws.notebook.verify_item(args.id)
    _print([{"signer_dn": dn, "valid": valid} for dn, valid in verdicts])
    if not verdicts or not all(valid for _, valid in verdicts):
        return EXIT_INTEGRITY
    return EXIT_OK


def cmd_archive(args, ws: Workspace) -> int:
    summary = ws.notebook.export_archive(args.report_id, args.out)
    _print(
        {
            "report": summary.report_item_id,
            "items": summary.item_count,
            "nodes": summary.node_count,
            "edges": summary.edge_count,
            "payload_bytes": summary.payload_bytes,
            "out": summary.out_dir,
        }
    )
    return EXIT_OK


def cmd_sync(args, ws: Workspace) -> int:
    keyfile = ws.keyfile(args.identity)
    peers = args.peer or ws.config.get("peers") or []
    if not peers:
        print("error: no peers given (use --peer or config)", file=sys.stderr)
        return EXIT_VALIDATION
    reports = {}
    for url in peers:
        peer = RemotePeer(url, keyfile)
        report = ws.repo.sync_with(peer)
        reports[url] = report.to_json_dict()
    _print(reports)
    return EXIT_OK


def cmd_query(args, ws: Workspace) -> int:
    graph = ws.provenance.graph
    last = ws.provenance.query_last(args.expr)
    if last.tag == traversal.VALUES:
        _print(list(last.items))
    elif last.tag == traversal.NODES:
        _print([_descriptor(graph.get_node(n)) for n in last.items])
    else:
        _print(
            [
                {
                    "label": graph.get_edge(e).label.value,
                    "source": _descriptor(graph.get_node(graph.get_edge(e).source)),
                    "target": _descriptor(graph.get_node(graph.get_edge(e).target)),
                }
                for e in last.items
            ]
        )
    return EXIT_OK


def cmd_keygen(args) -> int:
    keyfile = Keyfile.generate(args.dn)
    keyfile.save(args.out)
    _print({"dn": args.dn, "public_key": keyfile.public_b64, "keyfile": args.out})
    return EXIT_OK


def cmd_register_key(args, ws: Workspace) -> int:
    if args.keyfile:
        keyfile = Keyfile.load(args.keyfile)
        dn, public = keyfile.dn, keyfile.public_b64
    else:
        dn, public = args.dn, args.public_key
    if not dn or not public:
        raise ValueError("register-key needs --keyfile or --dn plus --public-key")
    ws.registry.add(dn, public)
    _print({"registered": dn})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labbook")
    parser.add_argument("--repo", default=".", help="repository directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a repository")
    p.add_argument("--site-id", required=True)
    p.add_argument("--listen", default="127.0.0.1:8722")
    p.add_argument("--dn", help="identity DN (default CN=<site-id>)")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--listen")
    p.add_argument("--site-id", help="must match the configured site id")
    p.add_argument("--peer", action="append")
    p.add_argument("--sync-interval", type=float, default=5.0)

    p = sub.add_parser("mkcol", help="create a typed collection")
    p.add_argument("--path", required=True)
    p.add_argument("--type", required=True)
    p.add_argument("--meta", action="append")

    p = sub.add_parser("import", help="import an item with provenance")
    p.add_argument("--to", required=True, help="target collection path")
    p.add_argument("--type", required=True, help="item type")
    p.add_argument("--meta", action="append")
    p.add_argument("--influence", action="append")
    p.add_argument("--file")
    p.add_argument("--physical", action="store_true")
    p.add_argument("--location", help="archival location for physical items")
    p.add_argument("--actor", help="acting DN (default: identity keyfile)")

    p = sub.add_parser("search", help="substring search over items")
    p.add_argument("text")

    p = sub.add_parser("lineage", help="lineage and provenance questions")
    p.add_argument("id", help="item id")
    p.add_argument(
        "--question",
        choices=[q.value for q in Question],
    )
    p.add_argument(
        "--direction", choices=["ancestors", "descendants"], default="ancestors"
    )

    p = sub.add_parser("sign", help="sign an item")
    p.add_argument("id")
    p.add_argument("--key", required=True, help="keyfile path")

    p = sub.add_parser("verify", help="verify an item's signatures")
    p.add_argument("id")

    p = sub.add_parser("archive", help="export an evidential archive")
    p.add_argument("report_id")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sync", help="pull changes from peers")
    p.add_argument("--peer", action="append")
    p.add_argument("--identity", help="keyfile for request signing")

    p = sub.add_parser("query", help="run a traversal query")
    p.add_argument("--expr", required=True)

    p = sub.add_parser("keygen", help="generate an identity keyfile")
    p.add_argument("--dn", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("register-key", help="register a public key for a DN")
    p.add_argument("--keyfile")
    p.add_argument("--dn")
    p.add_argument("--public-key")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "init":
            return cmd_init(args)
        if args.command == "keygen":
            return cmd_keygen(args)
        ws = Workspace(Path(args.repo))
        handlers = {
            "serve": cmd_serve,
            "mkcol": cmd_mkcol,
            "import": cmd_import,
            "search": cmd_search,
            "lineage": cmd_lineage,
            "sign": cmd_sign,
            "verify": cmd_verify,
            "archive": cmd_archive,
            "sync": cmd_sync,
            "query": cmd_query,
            "register-key": cmd_register_key,
        }
        return handlers[args.command](args, ws)
    except _INTEGRITY_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except ServiceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO if exc.status >= 500 else EXIT_VALIDATION
    except _IO_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
