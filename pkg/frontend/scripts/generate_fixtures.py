"""Regenerate the golden API fixtures the frontend tests run against.

Boots a real backend (temp repository + HTTP service), drives it the way
the UI would, and snapshots the responses byte-for-byte. Run from the
repository root:

    python3 frontend/scripts/generate_fixtures.py
"""

import base64
import contextlib
import io
import json
import sys
import tempfile
import urllib.parse
from pathlib import Path

from labbook.cli import main as cli_main
from labbook.fabric import Repository
from labbook.glp import default_glp_spec
from labbook.identity import (
    KeyRegistry,
    Keyfile,
    request_digest,
    signature_headers,
)
from labbook.notebook import ImportRequest, Notebook
from labbook.provstore import ProvenanceStore
from labbook.client import HttpClient
from labbook.service import LabService

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

FIXED_SEED = bytes(range(32))


def signing_fixture() -> dict:
    keyfile = Keyfile("CN=fixture", base64.b64encode(FIXED_SEED).decode())
    cases = []
    for method, path, body, ts in [
        ("GET", "/stats", b"", 1700000000),
        ("GET", "/query?expr=%24x%20%3A%3D%20%24_g", b"", 1700000001),
        ("POST", "/batch", json.dumps({"batch_id": "b1", "nodes": [], "edges": []}).encode(), 1700000002),
        ("PUT", "/content", b"\x00\x01\x02binary body\xff", 1700000003),
    ]:
        headers = signature_headers(keyfile, method, path, body, ts=ts)
        cases.append(
            {
                "method": method,
                "path": path,
                "body_b64": base64.b64encode(body).decode(),
                "ts": ts,
                "digest": request_digest(method, path, body),
                "headers": headers,
            }
        )
    return {
        "dn": keyfile.dn,
        "private_key": keyfile.private_b64,
        "public_key": keyfile.public_b64,
        "cases": cases,
    }


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / "signing.json").write_text(
        json.dumps(signing_fixture(), indent=2, sort_keys=True) + "\n"
    )

    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        cli_main(["--repo", str(root), "init", "--site-id", "fixture-site", "--dn", "CN=alice"])
        args = ["--repo", str(root)]
        for path, ctype in [
            ("/study1", "study"),
            ("/study1/preparation", "preparation"),
            ("/study1/execution", "execution"),
            ("/study1/evaluation", "evaluation"),
            ("/study1/interpretation", "interpretation"),
            ("/study1/archiving", "archiving"),
        ]:
            cli_main(args + ["mkcol", "--path", path, "--type", ctype])

        from labbook.cli import Workspace

        ws = Workspace(root)
        keyfile = ws.keyfile()

        def do_import(path, item_type, name, influences=(), physical=False, **meta):
            request = ImportRequest(
                path=path,
                item_type=item_type,
                metadata={
                    "creator": "alice",
                    "created": "2011-07-14",
                    "name": name,
                    **meta,
                },
                payload=None if physical else f"payload of {name}".encode(),
                physical_location="shelf 4" if physical else None,
                influences=list(influences),
                actor_dn=keyfile.dn,
            )
            record, _ = ws.notebook.import_item(request)
            return record

        plan = do_import("/study1/preparation", "study-plan", "plan.txt")
        specimen = do_import(
            "/study1/execution",
            "physical-sample",
            "specimen-1",
            physical=True,
            type="specimen",
        )
        raw = do_import(
            "/study1/execution",
            "raw-data",
            "raw.dat",
            influences=[plan.item_id, specimen.item_id],
        )
        processed = do_import(
            "/study1/evaluation", "processed-data", "proc.dat", influences=[raw.item_id]
        )
        report = do_import(
            "/study1/interpretation", "report", "report.pdf", influences=[processed.item_id]
        )
        archive = do_import(
            "/study1/archiving", "archive-package", "archive.tar", influences=[report.item_id]
        )
        ws.notebook.sign_item(report.item_id, keyfile)

        service = LabService(ws.notebook, ws.registry, "127.0.0.1", 0)
        service.start()
        client = HttpClient(service.base_url, keyfile)
        try:
            # the biological-study example, recorded through the wire
            from conftest_fixture import study_example_wire_batch

            client.request("POST", "/batch", json.dumps(study_example_wire_batch()).encode())

            graphs = []
            subjects = [
                ("artifact", "research paper", "ancestors"),
                ("artifact", "results", "ancestors"),
                ("artifact", "discovery", "ancestors"),
                ("artifact", "specimen samples", "descendants"),
                ("agent", "scientistX", "descendants"),
                ("artifact", archive.item_id, "ancestors"),
                ("artifact", report.item_id, "ancestors"),
                ("artifact", raw.item_id, "ancestors"),
                ("artifact", plan.item_id, "descendants"),
                ("artifact", processed.item_id, "ancestors"),
            ]
            for kind, identifier, direction in subjects:
                response = client.request(
                    "GET",
                    f"/lineage/{kind}/{urllib.parse.quote(identifier, safe='')}"
                    f"?format=graph&direction={direction}",
                )
                graphs.append(
                    {
                        "subject": {"kind": kind, "identifier": identifier},
                        "direction": direction,
                        "response": response,
                        "node_count": len(response["nodes"]),
                        "edge_count": len(response["edges"]),
                    }
                )
            (FIXTURES / "graphs.json").write_text(
                json.dumps(graphs, indent=2, sort_keys=True) + "\n"
            )

            (FIXTURES / "spec.json").write_text(
                json.dumps(client.request("GET", "/spec"), indent=2, sort_keys=True) + "\n"
            )
            items = client.request("GET", "/items")
            detail = client.request("GET", f"/items/{report.item_id}")
            verify = client.request("GET", f"/items/{report.item_id}/verify")
            (FIXTURES / "items.json").write_text(
                json.dumps(
                    {"items": items, "detail": detail, "verify": verify},
                    indent=2,
                    sort_keys=True,
                )
                + "\n"
            )

            query = urllib.parse.quote(
                json.dumps({"meta": {"key": "type", "op": "eq", "value": "specimen"}})
            )
            api_search = client.request("GET", f"/items?query={query}")

            stdout = io.StringIO()
            with contextlib.redirect_stdout(stdout):
                cli_main(args + ["search", "specimen"])
            cli_search = json.loads(stdout.getvalue())
            (FIXTURES / "search.json").write_text(
                json.dumps(
                    {
                        "needle": "specimen",
                        "cli": cli_search,
                        "api_items_query": api_search,
                    },
                    indent=2,
                    sort_keys=True,
                )
                + "\n"
            )

            # a wizard-shaped import accepted by the real server
            wizard_body = {
                "path": "/study1/execution",
                "item_type": "raw-data",
                "metadata": {
                    "creator": "alice",
                    "created": "2011-07-14",
                    "name": "wizard.dat",
                    "type": "raw-data",
                },
                "content_b64": base64.b64encode(b"wizard payload").decode(),
                "influences": [plan.item_id, specimen.item_id],
            }
            response = client.request(
                "POST", "/import", json.dumps(wizard_body).encode()
            )
            (FIXTURES / "wizard.json").write_text(
                json.dumps(
                    {
                        "accepted_body": wizard_body,
                        "server_response_item_path": response["item"]["path"],
                        "influences": [plan.item_id, specimen.item_id],
                    },
                    indent=2,
                    sort_keys=True,
                )
                + "\n"
            )
        finally:
            service.stop()
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    sys.path.insert(0, str(Path(__file__).resolve().parent))
    main()
