"""Annotation store, voting, report arithmetic, and the HTTP service."""

import json
import threading

import pytest
from fastapi.testclient import TestClient

from synthcat.annotation import (
    ANNOTATORS_PER_TASK,
    AnnotationError,
    DuplicateLabelError,
    InvalidLabelError,
    LabelStore,
    TaskFullError,
    UnknownTaskError,
    build_report,
    create_app,
    export_tasks,
    load_protocol,
    load_tasks,
    majority_vote,
    task_from_record,
)

QUESTION_IDS = (
    "attribute_value_quality",
    "negative_example_coherence",
    "cross_field_consistency",
    "brand_modification",
    "content_preservation",
    "professional_writing",
)


def answers(**overrides):
    base = {
        "attribute_value_quality": "valid",
        "negative_example_coherence": "not_applicable",
        "cross_field_consistency": "valid",
        "brand_modification": "valid",
        "content_preservation": "none",
        "professional_writing": "valid",
    }
    base.update(overrides)
    return base


def make_tasks(n, strategy="correct"):
    return [
        {
            "task_id": f"t{i}",
            "strategy": strategy,
            "original_fields": {"title": f"base {i}"},
            "synthetic_fields": {"title": f"synth {i}"},
            "diff": [],
        }
        for i in range(n)
    ]


def make_store(tmp_path, n=4, **kwargs):
    return LabelStore(make_tasks(n), tmp_path / "labels.log", **kwargs)


# ---------------------------------------------------------------- protocol


def test_packaged_protocol_loads():
    protocol = load_protocol()
    assert protocol["annotators_per_task"] == ANNOTATORS_PER_TASK == 3
    assert protocol["majority_threshold"] == 2
    ids = [q["id"] for q in protocol["questions"]]
    assert ids == list(QUESTION_IDS)
    for q in protocol["questions"]:
        assert q["options"] and q["text"]


def test_malformed_protocol_rejected(tmp_path):
    bad = tmp_path / "protocol.json"
    bad.write_text(json.dumps({"questions": [{"id": "q1", "text": "t"}]}), encoding="utf-8")
    with pytest.raises(AnnotationError, match="malformed"):
        load_protocol(bad)
    dup = {
        "questions": [
            {"id": "q1", "text": "t", "options": ["a"]},
            {"id": "q1", "text": "t", "options": ["a"]},
        ]
    }
    bad.write_text(json.dumps(dup), encoding="utf-8")
    with pytest.raises(AnnotationError, match="duplicate"):
        load_protocol(bad)


def test_task_from_record_maps_fields():
    record = {
        "id": "p1:correct:9",
        "base_id": "p1",
        "strategy": "correct",
        "category": "Shoes",
        "attribute_key": "Color",
        "original_value": "red",
        "new_value": "blue",
        "negative_value": None,
        "text_fields": {"title": "new"},
        "base_text_fields": {"title": "old"},
        "diff": [{"field": "title", "kind": "added", "begin": 0, "end": 3, "text": "new"}],
    }
    task = task_from_record(record)
    assert task["task_id"] == "p1:correct:9"
    assert task["original_fields"] == {"title": "old"}
    assert task["synthetic_fields"] == {"title": "new"}
    assert task["diff"][0]["kind"] == "added"
    with pytest.raises(AnnotationError, match="text_fields"):
        task_from_record({"id": "x", "strategy": "correct", "base_text_fields": {}})


def test_export_and_load_tasks_roundtrip(tmp_path):
    records = [
        {
            "id": f"p{i}:correct:1",
            "strategy": "correct",
            "text_fields": {"title": "a"},
            "base_text_fields": {"title": "b"},
        }
        for i in range(3)
    ]
    tasks = export_tasks(records, tmp_path)
    loaded = load_tasks(tmp_path / "tasks.jsonl")
    assert loaded == tasks
    exported_protocol = json.loads((tmp_path / "protocol.json").read_text(encoding="utf-8"))
    assert exported_protocol == load_protocol()


# ---------------------------------------------------------------- voting


@pytest.mark.parametrize(
    "votes,expected",
    [
        (["valid", "valid", "invalid"], "valid"),
        (["invalid", "valid", "invalid"], "invalid"),
        (["valid", "valid", "valid"], "valid"),
        (["none", "acceptable", "major"], None),
        (["valid", "invalid"], None),
        (["valid", "valid"], "valid"),
        ([], None),
    ],
)
def test_majority_vote(votes, expected):
    assert majority_vote(votes) == expected


def test_majority_vote_order_independent():
    import itertools

    for perm in itertools.permutations(["valid", "invalid", "valid"]):
        assert majority_vote(list(perm)) == "valid"
    for perm in itertools.permutations(["none", "acceptable", "major"]):
        assert majority_vote(list(perm)) is None


# ---------------------------------------------------------------- store


def test_store_requires_tasks_and_unique_ids(tmp_path):
    with pytest.raises(AnnotationError, match="no tasks"):
        LabelStore([], tmp_path / "labels.log")
    tasks = make_tasks(2)
    tasks[1]["task_id"] = tasks[0]["task_id"]
    with pytest.raises(AnnotationError, match="unique"):
        LabelStore(tasks, tmp_path / "labels.log")


def test_next_task_spreads_claims(tmp_path):
    store = make_store(tmp_path, n=2)
    assert store.next_task("a")["task_id"] == "t0"
    assert store.next_task("b")["task_id"] == "t1"  # least-claimed first
    assert store.next_task("c")["task_id"] == "t0"  # tie broken by input order
    # Unfinished claims are sticky until the label lands.
    assert store.next_task("a")["task_id"] == "t0"
    store.submit("a", "t0", answers())
    assert store.next_task("a")["task_id"] == "t1"


def test_next_task_exhaustion_and_validation(tmp_path):
    store = make_store(tmp_path, n=1)
    with pytest.raises(InvalidLabelError):
        store.next_task("   ")
    for name in ("a", "b", "c"):
        assert store.next_task(name)["task_id"] == "t0"
        store.submit(name, "t0", answers())
    assert store.next_task("d") is None  # task already has three labels
    assert store.next_task("a") is None  # annotator already contributed


def test_submit_validation_errors(tmp_path):
    store = make_store(tmp_path, n=2)
    with pytest.raises(UnknownTaskError):
        store.submit("a", "missing", answers())
    incomplete = answers()
    del incomplete["brand_modification"]
    with pytest.raises(InvalidLabelError, match="brand_modification"):
        store.submit("a", "t0", incomplete)
    with pytest.raises(InvalidLabelError, match="invalid option"):
        store.submit("a", "t0", answers(content_preservation="pristine"))
    with pytest.raises(InvalidLabelError, match="unknown question"):
        store.submit("a", "t0", {**answers(), "bonus": "valid"})
    with pytest.raises(InvalidLabelError, match="annotator"):
        store.submit("", "t0", answers())
    store.submit("a", "t0", answers())
    with pytest.raises(DuplicateLabelError):
        store.submit("a", "t0", answers())


def test_task_label_cap(tmp_path):
    store = make_store(tmp_path, n=1)
    for name in ("a", "b", "c"):
        store.submit(name, "t0", answers())
    with pytest.raises(TaskFullError):
        store.submit("d", "t0", answers())
    assert store.progress() == {"tasks": 1, "fully_labeled": 1, "labels": 3}


def test_log_replay_restores_labels_and_claims(tmp_path):
    log = tmp_path / "labels.log"
    store = LabelStore(make_tasks(3), log)
    store.submit("a", "t0", answers())
    store.submit("b", "t0", answers(content_preservation="acceptable"))
    store.submit("a", "t1", answers())
    store.close()

    revived = LabelStore(make_tasks(3), log)
    assert set(revived.labels_for("t0")) == {"a", "b"}
    assert revived.labels_for("t0")["b"]["content_preservation"] == "acceptable"
    # a's claims were rebuilt, so the next task for a is the unlabeled t2.
    assert revived.next_task("a")["task_id"] == "t2"
    # Fresh annotators fill the least-covered tasks first.
    assert revived.next_task("c")["task_id"] == "t1"
    assert revived.next_task("d")["task_id"] == "t2"
    assert revived.next_task("e")["task_id"] == "t0"


def test_log_replay_skips_duplicates_and_overfull(tmp_path):
    log = tmp_path / "labels.log"
    entry = {"task_id": "t0", "annotator": "a", "answers": answers()}
    lines = [json.dumps(entry)]
    lines.append(json.dumps(entry))  # duplicate annotator
    for name in ("b", "c", "d"):  # d is the overfull fourth
        lines.append(json.dumps({**entry, "annotator": name}))
    lines.append(json.dumps({**entry, "task_id": "ghost"}))  # unknown task
    log.write_text("\n".join(lines) + "\n", encoding="utf-8")

    store = LabelStore(make_tasks(2), log)
    assert set(store.labels_for("t0")) == {"a", "b", "c"}
    assert store.progress()["labels"] == 3


def test_snapshot_offset_replay(tmp_path):
    log = tmp_path / "labels.log"
    store = LabelStore(make_tasks(4), log, snapshot_every=2)
    store.submit("a", "t0", answers())
    assert not store.snapshot_path.exists()
    store.submit("b", "t0", answers())
    assert store.snapshot_path.exists()
    store.submit("c", "t0", answers())  # beyond the snapshot, log tail only
    store.close()

    snap = json.loads(store.snapshot_path.read_text(encoding="utf-8"))
    assert snap["log_lines"] == 2
    assert set(snap["labels"]["t0"]) == {"a", "b"}

    revived = LabelStore(make_tasks(4), log, snapshot_every=2)
    assert set(revived.labels_for("t0")) == {"a", "b", "c"}


def test_concurrent_submissions_never_exceed_cap(tmp_path):
    store = make_store(tmp_path, n=1)
    outcomes = []
    lock = threading.Lock()

    def attempt(name):
        try:
            store.submit(name, "t0", answers())
            with lock:
                outcomes.append("ok")
        except TaskFullError:
            with lock:
                outcomes.append("full")

    threads = [
        threading.Thread(target=attempt, args=(f"annotator-{i}",)) for i in range(8)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert outcomes.count("ok") == 3
    assert outcomes.count("full") == 5
    assert len(store.labels_for("t0")) == 3


def test_concurrent_claims_respect_cap(tmp_path):
    store = make_store(tmp_path, n=2)
    claimed = []
    lock = threading.Lock()

    def claim(name):
        task = store.next_task(name)
        with lock:
            claimed.append(task["task_id"] if task else None)

    threads = [threading.Thread(target=claim, args=(f"w{i}",)) for i in range(10)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    # 2 tasks x 3 slots = 6 claims; the other four pollers get nothing.
    from collections import Counter

    counts = Counter(claimed)
    assert counts["t0"] == 3 and counts["t1"] == 3
    assert counts[None] == 4


# ---------------------------------------------------------------- report


def test_report_arithmetic_small_fixture(tmp_path):
    tasks = (
        make_tasks(3, strategy="correct")
        + [
            {**make_tasks(1, strategy="incorrect")[0], "task_id": "t3"},
            {**make_tasks(1, strategy="unknown")[0], "task_id": "t4"},
        ]
    )
    store = LabelStore(tasks, tmp_path / "labels.log")

    # t0: unanimous valid; content_preservation splits three ways -> no majority.
    store.submit("a", "t0", answers(content_preservation="none"))
    store.submit("b", "t0", answers(content_preservation="acceptable"))
    store.submit("c", "t0", answers(content_preservation="major"))
    # t1: consistency majority invalid.
    store.submit("a", "t1", answers(cross_field_consistency="invalid"))
    store.submit("b", "t1", answers(cross_field_consistency="invalid"))
    store.submit("c", "t1", answers())
    # t2: only two labels -> not fully labeled, excluded everywhere.
    store.submit("a", "t2", answers())
    store.submit("b", "t2", answers())
    # t3 (incorrect): negative question applicable here.
    store.submit("a", "t3", answers(negative_example_coherence="valid"))
    store.submit("b", "t3", answers(negative_example_coherence="valid"))
    store.submit("c", "t3", answers(negative_example_coherence="invalid"))
    # t4 (unknown): all valid.
    store.submit("a", "t4", answers())
    store.submit("b", "t4", answers())
    store.submit("c", "t4", answers())

    report = build_report(store.tasks, store.all_labels(), store.protocol)

    assert report["total_tasks"] == 5
    assert report["fully_labeled"] == 4
    assert report["strategy_counts"] == {"correct": 3, "incorrect": 1, "unknown": 1}
    assert report["strategy_distribution"] == {
        "correct": 60.0,
        "incorrect": 20.0,
        "unknown": 20.0,
    }

    quality = report["questions"]["attribute_value_quality"]
    assert quality["rate_valid"] == 100.0
    assert quality["applicable"] == 4

    preservation = report["questions"]["content_preservation"]
    assert report["no_majority"]["content_preservation"] == 1
    assert preservation["denominator"] == 3
    assert preservation["rates"] == {"none": 100.0}

    coherence = report["questions"]["negative_example_coherence"]
    # Three tasks voted not_applicable; they drop from the applicable pool.
    assert coherence["applicable"] == 1
    assert coherence["rate_valid"] == 100.0

    consistency = report["questions"]["cross_field_consistency"]
    assert consistency["rate_valid"] == 75.0  # 3 of 4 majorities valid

    # Correct-strategy consistency: t0 valid, t1 invalid -> 50.0.
    assert report["consistency_by_strategy"] == {
        "correct": 50.0,
        "incorrect": 100.0,
        "unknown": 100.0,
    }


def test_report_pct_rounding(tmp_path):
    tasks = make_tasks(3)
    store = LabelStore(tasks, tmp_path / "labels.log")
    for tid, verdict in (("t0", "valid"), ("t1", "valid"), ("t2", "invalid")):
        for name in ("a", "b", "c"):
            store.submit(name, tid, answers(attribute_value_quality=verdict))
    report = build_report(store.tasks, store.all_labels(), store.protocol)
    # 2/3 valid -> 66.7 after round(x, 1).
    assert report["questions"]["attribute_value_quality"]["rate_valid"] == 66.7


# ---------------------------------------------------------------- HTTP API


@pytest.fixture()
def client(tmp_path):
    store = make_store(tmp_path, n=2)
    return TestClient(create_app(store)), store


def test_api_protocol_and_next(client):
    api, _ = client
    resp = api.get("/api/protocol")
    assert resp.status_code == 200
    assert [q["id"] for q in resp.json()["questions"]] == list(QUESTION_IDS)

    assert api.get("/api/tasks/next").status_code == 422

    resp = api.get("/api/tasks/next", params={"annotator": "a"})
    assert resp.status_code == 200
    body = resp.json()
    assert body["task"]["task_id"] == "t0"
    assert body["progress"] == {"tasks": 2, "fully_labeled": 0, "labels": 0}


def test_api_get_task_and_missing(client):
    api, _ = client
    assert api.get("/api/tasks/t1").status_code == 200
    assert api.get("/api/tasks/nope").status_code == 404


def test_api_label_flow_and_conflicts(client):
    api, _ = client
    payload = {"annotator": "a", "task_id": "t0", "answers": answers()}
    resp = api.post("/api/labels", json=payload)
    assert resp.status_code == 200
    assert resp.json()["status"] == "recorded"
    assert resp.json()["progress"]["labels"] == 1

    assert api.post("/api/labels", json=payload).status_code == 409  # duplicate

    for name in ("b", "c"):
        assert (
            api.post(
                "/api/labels",
                json={"annotator": name, "task_id": "t0", "answers": answers()},
            ).status_code
            == 200
        )
    fourth = {"annotator": "d", "task_id": "t0", "answers": answers()}
    assert api.post("/api/labels", json=fourth).status_code == 409

    bad_option = {
        "annotator": "d",
        "task_id": "t1",
        "answers": answers(professional_writing="superb"),
    }
    resp = api.post("/api/labels", json=bad_option)
    assert resp.status_code == 422
    assert "professional_writing" in resp.json()["error"]

    ghost = {"annotator": "d", "task_id": "ghost", "answers": answers()}
    assert api.post("/api/labels", json=ghost).status_code == 404


def test_api_exhaustion_returns_204(client):
    api, store = client
    for tid in ("t0", "t1"):
        for name in ("a", "b", "c"):
            store.submit(name, tid, answers())
    assert api.get("/api/tasks/next", params={"annotator": "z"}).status_code == 204


def test_api_report_endpoint(client):
    api, store = client
    for name in ("a", "b", "c"):
        store.submit(name, "t0", answers())
    resp = api.get("/api/report")
    assert resp.status_code == 200
    body = resp.json()
    assert body["fully_labeled"] == 1
    assert body["questions"]["attribute_value_quality"]["rate_valid"] == 100.0


def test_api_serves_static_ui(tmp_path):
    ui = tmp_path / "ui"
    ui.mkdir()
    (ui / "index.html").write_text("<h1>annotate</h1>", encoding="utf-8")
    store = make_store(tmp_path, n=1)
    api = TestClient(create_app(store, ui_dir=ui))
    resp = api.get("/")
    assert resp.status_code == 200
    assert "annotate" in resp.text
    # API routes still take precedence over the static mount.
    assert api.get("/api/protocol").status_code == 200
