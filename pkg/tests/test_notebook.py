import json
import random

import pytest

from labbook.fabric import ItemKind, PathTaken, Repository, UnknownItem
from labbook.glp import default_glp_spec
from labbook.graph import Direction, EdgeLabel, NodeKind
from labbook.identity import KeyRegistry, Keyfile, UnknownSignerKey
from labbook.notebook import (
    ImportRequest,
    MetadataViolation,
    MissingPayload,
    NotCopyable,
    Notebook,
    PlacementViolation,
    UnknownInfluence,
)
from labbook.provstore import ProvenanceStore, ProvenanceUnavailable
from labbook.questions import LineageDirection, Question, answer, lineage

from oracles import closure_oracle

GOOD_META = {"creator": "alice", "created": "2011-07-14"}


class SimulatedCrash(Exception):
    pass


def build_notebook(tmp_path, crash_hook=None, provenance=None, name="repo"):
    root = tmp_path / name
    repo = Repository(root / "fabric", "site-a")
    prov = provenance if provenance is not None else ProvenanceStore(root / "store.bin")
    registry = KeyRegistry(root / "registry.json")
    nb = Notebook(
        repo,
        prov,
        default_glp_spec(),
        registry,
        root / "journal.jsonl",
        crash_hook=crash_hook,
    )
    return nb


def reopen_notebook(tmp_path, name="repo"):
    root = tmp_path / name
    repo = Repository(root / "fabric", "site-a")
    prov = ProvenanceStore(root / "store.bin")
    registry = KeyRegistry(root / "registry.json")
    nb = Notebook(repo, prov, default_glp_spec(), registry, root / "journal.jsonl")
    nb.replay_journal()
    return nb


def seed_hierarchy(nb):
    nb.create_collection("/study1", "study")
    for stage in ("preparation", "execution", "evaluation", "interpretation", "archiving"):
        nb.create_collection(f"/study1/{stage}", stage)


def import_simple(nb, path, item_type, name, influences=(), payload=b"data", **meta):
    request = ImportRequest(
        path=path,
        item_type=item_type,
        metadata=dict(GOOD_META, name=name, **meta),
        payload=payload,
        influences=list(influences),
        actor_dn="CN=alice",
    )
    return nb.import_item(request)


class TestCollections:
    def test_placement_enforced(self, tmp_path):
        nb = build_notebook(tmp_path)
        nb.create_collection("/study1", "study")
        nb.create_collection("/study1/execution", "execution")
        with pytest.raises(PlacementViolation):
            nb.create_collection("/study1/substudy", "study")
        with pytest.raises(PlacementViolation):
            nb.create_collection("/freestanding", "execution")


class TestImport:
    def test_emits_three_nodes_and_edges(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        plan, plan_batch = import_simple(
            nb, "/study1/preparation", "study-plan", "plan.txt"
        )
        assert len(plan_batch.node_ids) == 3  # artifact, process, new agent
        assert len(plan_batch.edge_ids) == 2
        raw, raw_batch = import_simple(
            nb,
            "/study1/execution",
            "raw-data",
            "raw.dat",
            influences=[plan.item_id],
        )
        assert len(raw_batch.node_ids) == 2  # agent reused
        assert len(raw_batch.edge_ids) == 3  # wGB + wUB + used

        graph = nb.provenance.graph
        artifact = graph.find_node(NodeKind.ARTIFACT, raw.item_id)
        assert artifact.annotations["item_type"] == "raw-data"
        assert artifact.annotations["creator"] == "alice"
        process_id = graph.neighbors(
            artifact.id, Direction.OUTGOING, EdgeLabel.WAS_GENERATED_BY
        )[0][1]
        assert graph.get_node(process_id).annotations["stage"] == "execution"
        used = graph.neighbors(process_id, Direction.OUTGOING, EdgeLabel.USED)
        assert [graph.get_node(n).identifier for _, n in used] == [plan.item_id]

    def test_placement_violation(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        with pytest.raises(PlacementViolation):
            import_simple(nb, "/study1/preparation", "raw-data", "wrong.dat")

    def test_metadata_violation(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        request = ImportRequest(
            path="/study1/execution",
            item_type="raw-data",
            metadata={"created": "2011-07-14"},  # creator missing
            payload=b"x",
            actor_dn="CN=alice",
        )
        with pytest.raises(MetadataViolation) as err:
            nb.import_item(request)
        assert len(err.value.violations) == 1

    def test_unknown_influence(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        with pytest.raises(UnknownInfluence):
            import_simple(
                nb, "/study1/execution", "raw-data", "r.dat", influences=["ghost"]
            )

    def test_tombstoned_influence_rejected(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        plan, _ = import_simple(nb, "/study1/preparation", "study-plan", "p.txt")
        nb.repo.delete_item(plan.item_id)
        with pytest.raises(UnknownInfluence):
            import_simple(
                nb,
                "/study1/execution",
                "raw-data",
                "r.dat",
                influences=[plan.item_id],
            )

    def test_untracked_item_cannot_influence(self, tmp_path):
        # an item created behind the notebook's back has no artifact node
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        side = nb.repo.create_item(
            "/study1/execution/side",
            ItemKind.PHYSICAL_ITEM,
            {"archival_location": "shelf"},
        )
        with pytest.raises(UnknownInfluence):
            import_simple(
                nb, "/study1/execution", "raw-data", "r.dat", influences=[side.item_id]
            )

    def test_physical_import(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        request = ImportRequest(
            path="/study1/execution",
            item_type="physical-sample",
            metadata=dict(GOOD_META, name="sample-1", type="physical-sample"),
            physical_location="freezer 3",
            actor_dn="CN=alice",
        )
        record, _ = nb.import_item(request)
        assert record.kind is ItemKind.PHYSICAL_ITEM
        assert record.metadata["archival_location"] == "freezer 3"

    def test_chain_of_events_invariant(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        ids = []
        plan, _ = import_simple(nb, "/study1/preparation", "study-plan", "p.txt")
        ids.append(plan.item_id)
        for i in range(4):
            rec, _ = import_simple(
                nb,
                "/study1/execution",
                "raw-data",
                f"raw{i}.dat",
                influences=[plan.item_id],
            )
            ids.append(rec.item_id)
        graph = nb.provenance.graph
        for item_id in ids:
            artifacts = [
                n
                for n in graph.all_nodes()
                if n.kind is NodeKind.ARTIFACT and n.identifier == item_id
            ]
            assert len(artifacts) == 1
            wgb = graph.neighbors(
                artifacts[0].id, Direction.OUTGOING, EdgeLabel.WAS_GENERATED_BY
            )
            assert len(wgb) == 1

    def test_dag_by_construction(self, tmp_path):
        rng = random.Random(5)
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        imported = []
        for i in range(25):
            influences = (
                rng.sample(imported, k=min(len(imported), rng.randrange(3)))
                if imported
                else []
            )
            rec, _ = import_simple(
                nb,
                "/study1/execution",
                "raw-data",
                f"r{i}.dat",
                influences=influences,
            )
            imported.append(rec.item_id)
        graph = nb.provenance.graph
        # acyclic: no node is its own ancestor
        for node in graph.all_nodes():
            assert node.id not in closure_oracle(graph, node.id, forward=True)


class TestConcurrentImports:
    def test_same_fresh_agent_across_threads(self, tmp_path):
        import threading

        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        errors = []

        def worker(i):
            try:
                import_simple(nb, "/study1/execution", "raw-data", f"t{i}.dat")
            except Exception as exc:
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        graph = nb.provenance.graph
        agents = [n for n in graph.all_nodes() if n.kind is NodeKind.AGENT]
        assert len(agents) == 1
        assert len(nb.repo.items()) == 6 + 6  # 6 imports + 6 collections


class TestRollback:
    def test_provenance_failure_rolls_back(self, tmp_path):
        class FailingProvenance:
            def has_node(self, kind, identifier):
                return False

            def apply_batch(self, batch):
                raise ConnectionError("store is down")

        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        failing = build_notebook(tmp_path, provenance=FailingProvenance(), name="repo")
        with pytest.raises(ProvenanceUnavailable):
            import_simple(failing, "/study1/execution", "raw-data", "r.dat")
        # rolled back: path is free again, record tombstoned
        assert failing.repo.get_by_path("/study1/execution/r.dat") is None
        journal = failing.journal.entries()
        assert journal[-1]["phase"] == "rolled_back"


class TestCrashConsistency:
    @pytest.mark.parametrize("stage", ["pre_fabric", "post_fabric", "post_provenance"])
    def test_crash_windows(self, tmp_path, stage):
        def hook(point):
            if point == stage:
                raise SimulatedCrash(point)

        nb = build_notebook(tmp_path, crash_hook=hook)
        seed_hierarchy(nb)
        nb.crash_hook = lambda p: None  # seed without crashing
        plan, _ = import_simple(nb, "/study1/preparation", "study-plan", "p.txt")
        nb.crash_hook = hook
        with pytest.raises(SimulatedCrash):
            import_simple(
                nb,
                "/study1/execution",
                "raw-data",
                "raw.dat",
                influences=[plan.item_id],
            )
        del nb  # crash: all in-memory state is discarded
        nb = reopen_notebook(tmp_path)
        self.assert_consistent(nb)

    @staticmethod
    def assert_consistent(nb):
        graph = nb.provenance.graph
        for record in nb.repo.items():
            if record.kind is ItemKind.COLLECTION:
                continue
            artifacts = [
                n
                for n in graph.all_nodes()
                if n.kind is NodeKind.ARTIFACT and n.identifier == record.item_id
            ]
            assert len(artifacts) == 1, f"{record.path} lacks its artifact node"
            wgb = graph.neighbors(
                artifacts[0].id, Direction.OUTGOING, EdgeLabel.WAS_GENERATED_BY
            )
            assert len(wgb) == 1

    def test_journal_replay_is_idempotent(self, tmp_path):
        def hook(point):
            if point == "post_fabric":
                raise SimulatedCrash(point)

        nb = build_notebook(tmp_path, crash_hook=hook)
        seed_hierarchy(nb)
        nb.crash_hook = hook
        with pytest.raises(SimulatedCrash):
            import_simple(nb, "/study1/execution", "raw-data", "raw.dat")
        del nb
        first = reopen_notebook(tmp_path)
        stats = first.provenance.stats()
        again = reopen_notebook(tmp_path)
        assert again.provenance.stats() == stats


class TestSigning:
    def make_signer(self, nb, dn="CN=alice"):
        keyfile = Keyfile.generate(dn)
        nb.registry.add(dn, keyfile.public_b64)
        return keyfile

    def test_sign_then_verify(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        rec, _ = import_simple(nb, "/study1/execution", "raw-data", "r.dat")
        keyfile = self.make_signer(nb)
        sig = nb.sign_item(rec.item_id, keyfile)
        assert sig.algorithm == "ed25519-sha256"
        assert nb.verify_item(rec.item_id) == [("CN=alice", True)]

    def test_metadata_mutation_invalidates(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        rec, _ = import_simple(nb, "/study1/execution", "raw-data", "r.dat")
        keyfile = self.make_signer(nb)
        nb.sign_item(rec.item_id, keyfile)
        nb.repo.update_metadata(rec.item_id, {"note": "edited afterwards"})
        assert nb.verify_item(rec.item_id) == [("CN=alice", False)]

    def test_payload_byte_flip_invalidates(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        rec, _ = import_simple(
            nb, "/study1/execution", "raw-data", "r.dat", payload=b"precious bytes"
        )
        keyfile = self.make_signer(nb)
        nb.sign_item(rec.item_id, keyfile)
        manifest = nb.repo.chunks.manifest_for(rec.content_digest)
        chunk_path = nb.repo.chunks.chunk_path(manifest.chunks[0])
        data = bytearray(chunk_path.read_bytes())
        data[0] ^= 0x01
        chunk_path.write_bytes(bytes(data))
        assert nb.verify_item(rec.item_id) == [("CN=alice", False)]

    def test_second_signature_keeps_first_valid(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        rec, _ = import_simple(nb, "/study1/execution", "raw-data", "r.dat")
        alice = self.make_signer(nb, "CN=alice")
        bob = self.make_signer(nb, "CN=bob")
        nb.sign_item(rec.item_id, alice)
        nb.sign_item(rec.item_id, bob)
        assert nb.verify_item(rec.item_id) == [("CN=alice", True), ("CN=bob", True)]

    def test_unregistered_signer_rejected(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        rec, _ = import_simple(nb, "/study1/execution", "raw-data", "r.dat")
        with pytest.raises(UnknownSignerKey):
            nb.sign_item(rec.item_id, Keyfile.generate("CN=stranger"))

    def test_sign_unknown_item(self, tmp_path):
        nb = build_notebook(tmp_path)
        keyfile = self.make_signer(nb)
        with pytest.raises(UnknownItem):
            nb.sign_item("ghost", keyfile)

    def test_physical_item_signable(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        request = ImportRequest(
            path="/study1/execution",
            item_type="physical-sample",
            metadata=dict(GOOD_META, name="s1", type="physical-sample"),
            physical_location="freezer",
            actor_dn="CN=alice",
        )
        rec, _ = nb.import_item(request)
        keyfile = self.make_signer(nb)
        nb.sign_item(rec.item_id, keyfile)
        assert nb.verify_item(rec.item_id) == [("CN=alice", True)]
        nb.repo.update_metadata(rec.item_id, {"archival_location": "moved"})
        assert nb.verify_item(rec.item_id) == [("CN=alice", False)]

    def test_subject_signature_quality_rule(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        rec, _ = import_simple(nb, "/study1/execution", "raw-data", "r.dat")
        graph = nb.provenance.graph
        node = graph.find_node(NodeKind.ARTIFACT, rec.item_id)
        rule = nb.subject_signature_rule(rec.item_id)
        report = answer(graph, Question.QUALITY, node.id, {"ruleset": [rule]})
        assert not report.passed
        keyfile = self.make_signer(nb)
        nb.sign_item(rec.item_id, keyfile)
        report = answer(graph, Question.QUALITY, node.id, {"ruleset": [rule]})
        assert report.passed


class TestArchive:
    def build_chain(self, nb):
        seed_hierarchy(nb)
        plan, _ = import_simple(
            nb, "/study1/preparation", "study-plan", "plan.txt", payload=b"the plan"
        )
        raw, _ = import_simple(
            nb,
            "/study1/execution",
            "raw-data",
            "raw.dat",
            influences=[plan.item_id],
            payload=b"raw " * 100,
        )
        processed, _ = import_simple(
            nb,
            "/study1/evaluation",
            "processed-data",
            "proc.dat",
            influences=[raw.item_id],
            payload=b"processed",
        )
        report, _ = import_simple(
            nb,
            "/study1/interpretation",
            "report",
            "report.pdf",
            influences=[processed.item_id],
            payload=b"%PDF fake",
        )
        return plan, raw, processed, report

    def test_manifest_is_exactly_the_closure(self, tmp_path):
        nb = build_notebook(tmp_path)
        plan, raw, processed, report = self.build_chain(nb)
        summary = nb.export_archive(report.item_id, tmp_path / "archive")
        manifest = json.loads((tmp_path / "archive" / "manifest.json").read_text())
        got = {item["item_id"] for item in manifest["items"]}
        assert got == {plan.item_id, raw.item_id, processed.item_id, report.item_id}
        assert summary.item_count == 4

        graph = nb.provenance.graph
        node = graph.find_node(NodeKind.ARTIFACT, report.item_id)
        oracle = closure_oracle(graph, node.id, forward=True) | {node.id}
        oracle_items = {
            graph.get_node(n).identifier
            for n in oracle
            if graph.get_node(n).kind is NodeKind.ARTIFACT
        }
        assert got == oracle_items

    def test_payload_digests_verify(self, tmp_path):
        import hashlib

        nb = build_notebook(tmp_path)
        *_, report = self.build_chain(nb)
        nb.export_archive(report.item_id, tmp_path / "archive")
        payload_dir = tmp_path / "archive" / "payload"
        files = list(payload_dir.iterdir())
        assert files
        for path in files:
            assert hashlib.sha256(path.read_bytes()).hexdigest() == path.name

    def test_provenance_subgraph_induced(self, tmp_path):
        nb = build_notebook(tmp_path)
        *_, report = self.build_chain(nb)
        nb.export_archive(report.item_id, tmp_path / "archive")
        prov = json.loads((tmp_path / "archive" / "provenance.json").read_text())
        names = {n["identifier"] for n in prov["nodes"]}
        assert "CN=alice" in names  # agents included
        assert sum(1 for n in prov["nodes"] if n["kind"] == "process") == 4
        in_set = {(n["kind"], n["identifier"]) for n in prov["nodes"]}
        for edge in prov["edges"]:
            assert (edge["source"]["kind"], edge["source"]["identifier"]) in in_set
            assert (edge["target"]["kind"], edge["target"]["identifier"]) in in_set

    def test_report_without_influences(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        lone, _ = import_simple(
            nb, "/study1/interpretation", "report", "lone.pdf", payload=b"alone"
        )
        nb.export_archive(lone.item_id, tmp_path / "a2")
        manifest = json.loads((tmp_path / "a2" / "manifest.json").read_text())
        assert [i["item_id"] for i in manifest["items"]] == [lone.item_id]

    def test_missing_chunk_surfaces_digest(self, tmp_path):
        nb = build_notebook(tmp_path)
        plan, raw, processed, report = self.build_chain(nb)
        manifest = nb.repo.chunks.manifest_for(raw.content_digest)
        nb.repo.chunks.chunk_path(manifest.chunks[0]).unlink()
        with pytest.raises(MissingPayload) as err:
            nb.export_archive(report.item_id, tmp_path / "a3")
        assert err.value.digest == raw.content_digest

    def test_unknown_report(self, tmp_path):
        nb = build_notebook(tmp_path)
        with pytest.raises(UnknownItem):
            nb.export_archive("ghost", tmp_path / "a4")


class TestSearch:
    def test_matches_paths_types_and_metadata(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        request = ImportRequest(
            path="/study1/execution",
            item_type="physical-sample",
            metadata=dict(
                GOOD_META, name="field-sample", type="specimen", tags=["frozen", "alpine"]
            ),
            physical_location="freezer 1",
            actor_dn="CN=alice",
        )
        nb.import_item(request)
        import_simple(nb, "/study1/execution", "raw-data", "notes.txt")
        assert len(nb.search("specimen")) == 1
        assert len(nb.search("SPECIMEN")) == 1  # case-insensitive
        assert len(nb.search("alpine")) == 1  # inside a list value
        assert len(nb.search("notes")) == 1  # path match
        assert nb.search("µ-missing") == []

    def test_empty_needle_matches_all_live(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        rec, _ = import_simple(nb, "/study1/execution", "raw-data", "r.dat")
        assert len(nb.search("")) == len(nb.repo.items())
        nb.repo.delete_item(rec.item_id)
        assert all(r.item_id != rec.item_id for r in nb.search(""))

    def test_ordered_by_path(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        for name in ("zeta.dat", "alpha.dat"):
            import_simple(nb, "/study1/execution", "raw-data", name)
        paths = [r.path for r in nb.search(".dat")]
        assert paths == sorted(paths)


class TestCopy:
    def test_copy_forks_provenance(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        raw, _ = import_simple(nb, "/study1/execution", "raw-data", "raw.dat")
        copy = nb.copy_item(raw.item_id, "/study1/execution/raw-copy.dat")
        assert copy.content_digest == raw.content_digest
        assert copy.item_id != raw.item_id
        graph = nb.provenance.graph
        new_node = graph.find_node(NodeKind.ARTIFACT, copy.item_id)
        derived = graph.neighbors(
            new_node.id, Direction.OUTGOING, EdgeLabel.WAS_DERIVED_FROM
        )
        assert [graph.get_node(n).identifier for _, n in derived] == [raw.item_id]
        # ancestors of the copy include the original
        old_node = graph.find_node(NodeKind.ARTIFACT, raw.item_id)
        assert old_node.id in lineage(graph, new_node.id, LineageDirection.ANCESTORS)

    def test_copy_to_occupied_path(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        raw, _ = import_simple(nb, "/study1/execution", "raw-data", "raw.dat")
        with pytest.raises(PathTaken):
            nb.copy_item(raw.item_id, "/study1/execution/raw.dat")

    def test_copy_respects_placement(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        raw, _ = import_simple(nb, "/study1/execution", "raw-data", "raw.dat")
        with pytest.raises(PlacementViolation):
            nb.copy_item(raw.item_id, "/study1/preparation/raw.dat")

    def test_collections_not_copyable(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        study = nb.repo.get_by_path("/study1")
        with pytest.raises(NotCopyable):
            nb.copy_item(study.item_id, "/study2")

    def test_copy_drops_signatures(self, tmp_path):
        nb = build_notebook(tmp_path)
        seed_hierarchy(nb)
        raw, _ = import_simple(nb, "/study1/execution", "raw-data", "raw.dat")
        keyfile = Keyfile.generate("CN=alice")
        nb.registry.add("CN=alice", keyfile.public_b64)
        nb.sign_item(raw.item_id, keyfile)
        copy = nb.copy_item(raw.item_id, "/study1/execution/copy.dat")
        assert "signatures" not in copy.metadata
        assert nb.verify_item(copy.item_id) == []
