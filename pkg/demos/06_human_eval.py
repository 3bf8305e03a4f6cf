"""Human-evaluation experiment end to end: select texts, build the two
Latin-square lists, simulate six annotators over the HTTP API, and print the
per-category error report.

Run: python demos/06_human_eval.py
"""

import json
import threading
import urllib.request

import numpy as np

from lmadapt.corpus import Document
from lmadapt.humeval import (
    CATEGORIES,
    AnnotationStore,
    SelectionConfig,
    assign_evaluators,
    build_experiment,
    select_texts,
)
from lmadapt.server import make_server

rng = np.random.default_rng(4)
WORDS = ["amanecer", "camino", "festa", "montana", "rio", "verde", "palabra",
         "tempo", "ceo", "mar", "lua", "vento"]


def make_doc(i):
    n_sent = int(rng.integers(5, 9))
    sentences = [" ".join(rng.choice(WORDS, size=9)).capitalize() + "."
                 for _ in range(n_sent)]
    return Document(id=f"text{i:03d}", subcorpus="public",
                    genre=["press", "web", "books"][i % 3], text=" ".join(sentences))


def stand_in_generator(context, max_chars, seed):
    """Stands in for model sampling; respects the length budget."""
    g = np.random.default_rng(seed)
    out = ""
    while len(out) < max_chars - 10:
        out += (" " if out else "") + str(g.choice(WORDS))
    return out[:max_chars]


pool = [make_doc(i) for i in range(120)]
texts = select_texts(pool, SelectionConfig(n_texts=60, min_chars=50, max_chars=2000),
                     seed=11)
experiment = build_experiment(texts, stand_in_generator, seed=11, model_id="toy-model")
evaluators = [f"linguist{i}" for i in range(1, 7)]
experiment.metadata["evaluators"] = assign_evaluators(evaluators, seed=11)
print(f"built {len(experiment.items)} items in two lists of "
      f"{len(experiment.lists['A'])} / {len(experiment.lists['B'])}")
print("evaluator assignment:", experiment.metadata["evaluators"])

store = AnnotationStore()
httpd = make_server(experiment, store, host="127.0.0.1", port=0)
threading.Thread(target=httpd.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{httpd.server_address[1]}"
print(f"serving on {base}")

for list_id, members in experiment.metadata["evaluators"].items():
    with urllib.request.urlopen(f"{base}/api/lists/{list_id}") as resp:
        payload = json.loads(resp.read())
    assert "origin" not in json.dumps(payload)  # blinding holds on the wire
    for evaluator in members:
        e_rng = np.random.default_rng(int.from_bytes(evaluator.encode(), "little") % 2**32)
        for item in payload:
            flags = {c: bool(e_rng.random() < 0.08) for c in CATEGORIES}
            body = json.dumps({"item_id": item["item_id"],
                               "evaluator_id": evaluator, "flags": flags}).encode()
            req = urllib.request.Request(
                f"{base}/api/annotations", data=body,
                headers={"Content-Type": "application/json"}, method="POST")
            urllib.request.urlopen(req).read()

with urllib.request.urlopen(f"{base}/api/report") as resp:
    report = json.loads(resp.read())
httpd.shutdown()

print(f"\ncollected {sum(report['denominators']['judgments'].values())} judgments")
print("judgment-level percentage with >=1 error, per condition and category:")
header = f"{'condition':<12}" + "".join(f"{c:>14}" for c in report["categories"])
print(header)
for cond in report["conditions"]:
    row = "".join(f"{report['judgment_level'][cond][c]:>13.1f}%" for c in report["categories"])
    print(f"{cond:<12}{row}")
