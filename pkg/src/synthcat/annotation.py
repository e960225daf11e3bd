"""Annotation workflow: task export, label storage, voting, reporting, HTTP API.

Each synthetic listing becomes one annotation task answered by three
annotators against a fixed six-question protocol.  Labels land in an
append-only JSONL log (the source of truth) with periodic snapshots for
fast recovery; task assignment is an atomic check-and-claim so a task never
collects more than three labels, no matter how many clients poll.
"""

from __future__ import annotations

import json
import threading
from collections import Counter
from pathlib import Path
from typing import Iterable, Mapping, Sequence

PROTOCOL_PATH = Path(__file__).parent / "assets" / "annotation_protocol.json"

ANNOTATORS_PER_TASK = 3
MAJORITY_THRESHOLD = 2


class AnnotationError(Exception):
    pass


class UnknownTaskError(AnnotationError):
    pass


class DuplicateLabelError(AnnotationError):
    pass


class TaskFullError(AnnotationError):
    pass


class InvalidLabelError(AnnotationError):
    pass


def load_protocol(path: str | Path | None = None) -> dict:
    """Load and sanity-check the question protocol."""
    raw = json.loads(Path(path or PROTOCOL_PATH).read_text(encoding="utf-8"))
    questions = raw.get("questions")
    if not questions:
        raise AnnotationError("protocol has no questions")
    seen = set()
    for q in questions:
        if not q.get("id") or not q.get("text") or not q.get("options"):
            raise AnnotationError(f"malformed protocol question: {q!r}")
        if q["id"] in seen:
            raise AnnotationError(f"duplicate question id {q['id']!r}")
        seen.add(q["id"])
    return raw


def task_from_record(record: Mapping) -> dict:
    """Shape one synthetic-run record into a standalone annotation task."""
    for key in ("id", "strategy", "text_fields", "base_text_fields"):
        if key not in record:
            raise AnnotationError(f"record is missing {key!r}")
    return {
        "task_id": record["id"],
        "base_id": record.get("base_id", ""),
        "strategy": record["strategy"],
        "category": record.get("category", ""),
        "attribute_key": record.get("attribute_key", ""),
        "original_value": record.get("original_value", ""),
        "new_value": record.get("new_value", ""),
        "negative_value": record.get("negative_value"),
        "original_fields": dict(record["base_text_fields"]),
        "synthetic_fields": dict(record["text_fields"]),
        "diff": list(record.get("diff", ())),
    }


def export_tasks(records: Iterable[Mapping], out_dir: str | Path) -> list[dict]:
    """Write tasks.jsonl and protocol.json; returns the task list."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [task_from_record(r) for r in records]
    with (out / "tasks.jsonl").open("w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(json.dumps(task, ensure_ascii=False) + "\n")
    (out / "protocol.json").write_text(
        json.dumps(load_protocol(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    return tasks


def load_tasks(path: str | Path) -> list[dict]:
    tasks = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                tasks.append(json.loads(line))
    return tasks


def majority_vote(votes: Sequence[str], threshold: int = MAJORITY_THRESHOLD) -> str | None:
    """Winning option, or None when no option reaches the threshold."""
    if not votes:
        return None
    option, count = Counter(votes).most_common(1)[0]
    return option if count >= threshold else None


class LabelStore:
    """Task assignment and label persistence for one annotation round.

    The JSONL log is the durable record; every accepted label is appended
    and flushed before the call returns.  A snapshot file carries the replay
    offset so restarts only re-read the log tail.  Claims (assignments not
    yet labeled) live in memory only and are rebuilt from labels on restart.
    """

    def __init__(
        self,
        tasks: Sequence[Mapping],
        log_path: str | Path,
        protocol: dict | None = None,
        snapshot_every: int = 200,
    ):
        if not tasks:
            raise AnnotationError("no tasks to annotate")
        self.protocol = protocol or load_protocol()
        self._questions = {q["id"]: set(q["options"]) for q in self.protocol["questions"]}
        self.tasks = [dict(t) for t in tasks]
        self._order = {t["task_id"]: i for i, t in enumerate(self.tasks)}
        if len(self._order) != len(self.tasks):
            raise AnnotationError("task ids must be unique")
        self.log_path = Path(log_path)
        self.snapshot_path = self.log_path.with_suffix(".snapshot.json")
        self.snapshot_every = snapshot_every
        self._labels: dict[str, dict[str, dict]] = {t["task_id"]: {} for t in self.tasks}
        self._claims: dict[str, set[str]] = {t["task_id"]: set() for t in self.tasks}
        self._lock = threading.Lock()
        self._log_lines = 0
        self._log_fh = None
        self._recover()
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        self._log_fh = self.log_path.open("a", encoding="utf-8")

    # -- persistence ---------------------------------------------------------

    def _recover(self):
        offset = 0
        if self.snapshot_path.exists():
            snap = json.loads(self.snapshot_path.read_text(encoding="utf-8"))
            offset = int(snap.get("log_lines", 0))
            for task_id, by_annotator in snap.get("labels", {}).items():
                if task_id in self._labels:
                    self._labels[task_id] = dict(by_annotator)
                    self._claims[task_id] = set(by_annotator)
        if self.log_path.exists():
            with self.log_path.open("r", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    self._log_lines = line_no
                    if line_no <= offset:
                        continue
                    line = line.strip()
                    if not line:
                        continue
                    entry = json.loads(line)
                    task_id = entry["task_id"]
                    if task_id not in self._labels:
                        continue
                    bucket = self._labels[task_id]
                    if entry["annotator"] in bucket or len(bucket) >= ANNOTATORS_PER_TASK:
                        continue
                    bucket[entry["annotator"]] = entry["answers"]
                    self._claims[task_id].add(entry["annotator"])

    def _write_snapshot_locked(self):
        payload = {
            "log_lines": self._log_lines,
            "labels": {tid: labels for tid, labels in self._labels.items() if labels},
        }
        tmp = self.snapshot_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, ensure_ascii=False) + "\n", encoding="utf-8")
        tmp.replace(self.snapshot_path)

    def close(self):
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None

    # -- assignment and labeling ----------------------------------------------

    def get_task(self, task_id: str) -> dict:
        idx = self._order.get(task_id)
        if idx is None:
            raise UnknownTaskError(f"unknown task {task_id!r}")
        return self.tasks[idx]

    def next_task(self, annotator: str) -> dict | None:
        """Claim the least-covered open task for this annotator.

        An existing unfinished claim is returned again; otherwise the open
        task with the fewest claims (ties by input order) is claimed
        atomically.  None means nothing is left for this annotator.
        """
        if not annotator or not annotator.strip():
            raise InvalidLabelError("annotator must be non-empty")
        annotator = annotator.strip()
        with self._lock:
            for task in self.tasks:
                tid = task["task_id"]
                if annotator in self._claims[tid] and annotator not in self._labels[tid]:
                    return task
            best = None
            best_key = None
            for idx, task in enumerate(self.tasks):
                tid = task["task_id"]
                claims = self._claims[tid]
                if len(claims) >= ANNOTATORS_PER_TASK or annotator in claims:
                    continue
                key = (len(claims), idx)
                if best_key is None or key < best_key:
                    best, best_key = task, key
            if best is not None:
                self._claims[best["task_id"]].add(annotator)
            return best

    def _validate_answers(self, answers: Mapping) -> dict:
        if not isinstance(answers, Mapping):
            raise InvalidLabelError("answers must be an object")
        clean = {}
        for qid, options in self._questions.items():
            if qid not in answers:
                raise InvalidLabelError(f"missing answer for {qid!r}")
            choice = answers[qid]
            if choice not in options:
                raise InvalidLabelError(f"invalid option {choice!r} for {qid!r}")
            clean[qid] = choice
        for extra in answers:
            if extra not in self._questions:
                raise InvalidLabelError(f"unknown question {extra!r}")
        return clean

    def submit(self, annotator: str, task_id: str, answers: Mapping) -> dict:
        """Record one annotator's answers for one task, durably."""
        if not annotator or not annotator.strip():
            raise InvalidLabelError("annotator must be non-empty")
        annotator = annotator.strip()
        clean = self._validate_answers(answers)
        with self._lock:
            if task_id not in self._labels:
                raise UnknownTaskError(f"unknown task {task_id!r}")
            bucket = self._labels[task_id]
            if annotator in bucket:
                raise DuplicateLabelError(f"{annotator!r} already labeled {task_id!r}")
            if len(bucket) >= ANNOTATORS_PER_TASK:
                raise TaskFullError(f"task {task_id!r} already has {ANNOTATORS_PER_TASK} labels")
            entry = {"task_id": task_id, "annotator": annotator, "answers": clean}
            self._log_fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
            self._log_fh.flush()
            self._log_lines += 1
            bucket[annotator] = clean
            self._claims[task_id].add(annotator)
            if self.snapshot_every and self._log_lines % self.snapshot_every == 0:
                self._write_snapshot_locked()
            return self._progress_locked()

    def labels_for(self, task_id: str) -> dict[str, dict]:
        with self._lock:
            if task_id not in self._labels:
                raise UnknownTaskError(f"unknown task {task_id!r}")
            return dict(self._labels[task_id])

    def all_labels(self) -> dict[str, dict[str, dict]]:
        with self._lock:
            return {tid: dict(labels) for tid, labels in self._labels.items() if labels}

    def _progress_locked(self) -> dict:
        total_labels = sum(len(v) for v in self._labels.values())
        fully = sum(1 for v in self._labels.values() if len(v) >= ANNOTATORS_PER_TASK)
        return {
            "tasks": len(self.tasks),
            "fully_labeled": fully,
            "labels": total_labels,
        }

    def progress(self) -> dict:
        with self._lock:
            return self._progress_locked()


def _pct(count: int, total: int) -> float:
    return round(100.0 * count / total, 1) if total else 0.0


def build_report(
    tasks: Sequence[Mapping],
    labels_by_task: Mapping[str, Mapping[str, Mapping]],
    protocol: dict | None = None,
) -> dict:
    """Aggregate majority-vote rates per question from raw labels.

    Only tasks with a full set of labels count; per question, tasks whose
    three votes all disagree carry no majority and drop out of that
    question's denominator.
    """
    protocol = protocol or load_protocol()
    question_ids = [q["id"] for q in protocol["questions"]]
    question_options = {q["id"]: set(q["options"]) for q in protocol["questions"]}
    strategy_of = {t["task_id"]: t.get("strategy", "") for t in tasks}

    total = len(tasks)
    strategy_counts = Counter(strategy_of.values())

    fully = []
    for task in tasks:
        tid = task["task_id"]
        labels = labels_by_task.get(tid, {})
        if len(labels) >= ANNOTATORS_PER_TASK:
            fully.append(tid)

    majorities: dict[str, dict[str, str | None]] = {qid: {} for qid in question_ids}
    for tid in fully:
        votes_by_annotator = list(labels_by_task[tid].values())[:ANNOTATORS_PER_TASK]
        for qid in question_ids:
            votes = [answers[qid] for answers in votes_by_annotator]
            majorities[qid][tid] = majority_vote(votes)

    questions_out = {}
    no_majority = {}
    for qid in question_ids:
        decided = {tid: m for tid, m in majorities[qid].items() if m is not None}
        counts = Counter(decided.values())
        no_majority[qid] = len(majorities[qid]) - len(decided)
        entry: dict = {
            "counts": dict(sorted(counts.items())),
            "denominator": len(decided),
        }
        if question_options[qid] <= {"valid", "invalid", "not_applicable"}:
            applicable = {tid: m for tid, m in decided.items() if m != "not_applicable"}
            denom = len(applicable)
            entry["rate_valid"] = _pct(
                sum(1 for m in applicable.values() if m == "valid"), denom
            )
            entry["applicable"] = denom
        else:
            entry["rates"] = {
                option: _pct(count, len(decided)) for option, count in sorted(counts.items())
            }
        questions_out[qid] = entry

    consistency = {}
    decided_consistency = {
        tid: m for tid, m in majorities.get("cross_field_consistency", {}).items() if m is not None
    }
    for strategy in sorted({s for s in strategy_of.values() if s}):
        in_strategy = [tid for tid in decided_consistency if strategy_of.get(tid) == strategy]
        valid = sum(1 for tid in in_strategy if decided_consistency[tid] == "valid")
        consistency[strategy] = _pct(valid, len(in_strategy))

    return {
        "total_tasks": total,
        "fully_labeled": len(fully),
        "strategy_counts": dict(sorted(strategy_counts.items())),
        "strategy_distribution": {
            strategy: _pct(count, total) for strategy, count in sorted(strategy_counts.items())
        },
        "no_majority": no_majority,
        "questions": questions_out,
        "consistency_by_strategy": consistency,
    }


def create_app(store: LabelStore, ui_dir: str | Path | None = None):
    """FastAPI application exposing the annotation service."""
    from fastapi import FastAPI, Query
    from fastapi.responses import JSONResponse, Response

    app = FastAPI(title="annotation service", version="1.0")

    @app.get("/api/protocol")
    def get_protocol():
        return store.protocol

    @app.get("/api/tasks/next")
    def get_next_task(annotator: str = Query(default="")):
        if not annotator.strip():
            return JSONResponse({"error": "annotator query parameter is required"}, status_code=422)
        task = store.next_task(annotator)
        if task is None:
            return Response(status_code=204)
        return {"task": task, "progress": store.progress()}

    @app.get("/api/tasks/{task_id}")
    def get_task(task_id: str):
        try:
            return store.get_task(task_id)
        except UnknownTaskError as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)

    @app.post("/api/labels")
    def post_label(payload: dict):
        annotator = str(payload.get("annotator", ""))
        task_id = str(payload.get("task_id", ""))
        answers = payload.get("answers", {})
        try:
            progress = store.submit(annotator, task_id, answers)
        except UnknownTaskError as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        except (DuplicateLabelError, TaskFullError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=409)
        except InvalidLabelError as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)
        return {"status": "recorded", "progress": progress}

    @app.get("/api/report")
    def get_report():
        return build_report(store.tasks, store.all_labels(), store.protocol)

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
