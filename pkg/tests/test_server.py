import json
import threading
import urllib.error
import urllib.request

import pytest

from lmadapt.humeval import (
    AUTHENTIC,
    CATEGORIES,
    SYNTHETIC,
    AnnotationStore,
    EvalItem,
    Experiment,
)
from lmadapt.server import make_server


@pytest.fixture()
def live_server(tmp_path):
    items = [
        EvalItem("b1::auth", "b1", "ctx one", "real continuation", AUTHENTIC, "A"),
        EvalItem("b1::synth", "b1", "ctx one", "fake continuation", SYNTHETIC, "B",
                 model_id="m1"),
        EvalItem("b2::auth", "b2", "ctx two", "real again", AUTHENTIC, "B"),
        EvalItem("b2::synth", "b2", "ctx two", "fake again", SYNTHETIC, "A",
                 model_id="m1"),
    ]
    experiment = Experiment(
        items=items,
        lists={"A": ["b1::auth", "b2::synth"], "B": ["b1::synth", "b2::auth"]},
        metadata={"evaluators": {"A": ["e1"], "B": ["e2"]}},
    )
    store = AnnotationStore(tmp_path / "log.jsonl")
    httpd = make_server(experiment, store, host="127.0.0.1", port=0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{httpd.server_address[1]}"
    yield base, store
    httpd.shutdown()
    httpd.server_close()


def get(url):
    with urllib.request.urlopen(url, timeout=5) as resp:
        return resp.status, json.loads(resp.read().decode("utf-8"))


def post(url, payload):
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode("utf-8"),
        headers={"Content-Type": "application/json"}, method="POST",
    )
    try:
        with urllib.request.urlopen(req, timeout=5) as resp:
            return resp.status, json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read().decode("utf-8"))


def all_false_flags(**kw):
    flags = {c: False for c in CATEGORIES}
    flags.update(kw)
    return flags


def test_lists_are_blinded(live_server):
    base, _ = live_server
    status, payload = get(f"{base}/api/lists/A")
    assert status == 200
    assert [p["item_id"] for p in payload] == ["b1::auth", "b2::synth"]
    blob = json.dumps(payload)
    assert "origin" not in blob and "model_id" not in blob

def test_unknown_list_404(live_server):
    base, _ = live_server
    with pytest.raises(urllib.error.HTTPError) as err:
        get(f"{base}/api/lists/Z")
    assert err.value.code == 404

def test_submit_and_report_roundtrip(live_server):
    base, _ = live_server
    status, body = post(f"{base}/api/annotations", {
        "item_id": "b1::synth", "evaluator_id": "e2",
        "flags": all_false_flags(form=True),
    })
    assert status == 201 and body["status"] == "ok"
    status, report = get(f"{base}/api/report")
    assert status == 200
    assert report["judgment_level"]["m1"]["form"] == 100.0
    assert report["denominators"]["judgments"]["m1"] == 1

def test_duplicate_submission_409(live_server):
    base, store = live_server
    payload = {"item_id": "b2::auth", "evaluator_id": "e2",
               "flags": all_false_flags(content=True)}
    assert post(f"{base}/api/annotations", payload)[0] == 201
    status, body = post(f"{base}/api/annotations",
                        {**payload, "flags": all_false_flags()})
    assert status == 409
    # first write retained
    kept = [a for a in store.annotations() if a.item_id == "b2::auth"]
    assert kept[0].flags["content"] is True

def test_malformed_and_unknown_item_400(live_server):
    base, _ = live_server
    assert post(f"{base}/api/annotations", {"item_id": "b1::auth"})[0] == 400
    assert post(f"{base}/api/annotations", {
        "item_id": "ghost", "evaluator_id": "e1", "flags": all_false_flags(),
    })[0] == 400
    assert post(f"{base}/api/annotations", {
        "item_id": "b1::auth", "evaluator_id": "e1",
        "flags": {"form": True},  # incomplete flag set
    })[0] == 400

def test_progress_counts(live_server):
    base, _ = live_server
    post(f"{base}/api/annotations", {
        "item_id": "b1::auth", "evaluator_id": "e1", "flags": all_false_flags(),
    })
    status, body = get(f"{base}/api/progress/e1")
    assert status == 200
    assert body == {"evaluator": "e1", "annotated": 1, "list": "A", "total": 2}

def test_concurrent_posts_single_win(live_server):
    base, store = live_server
    results = []

    def fire():
        results.append(post(f"{base}/api/annotations", {
            "item_id": "b2::synth", "evaluator_id": "e1",
            "flags": all_false_flags(repetitive=True),
        })[0])

    threads = [threading.Thread(target=fire) for _ in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results.count(201) == 1
    assert results.count(409) == 5
    assert len([a for a in store.annotations() if a.item_id == "b2::synth"]) == 1
