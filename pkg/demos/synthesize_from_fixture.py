"""Run the whole synthesis pipeline on the shipped 10-question mock corpus.

Equivalent to the `comforge generate` / `convert` / `stats` commands, but
driven through the library API.

Run: python3 demos/synthesize_from_fixture.py
"""

import json
import os

from comforge import (
    ConvertConfig,
    GenerateConfig,
    MockLinguisticClient,
    MockVisualClient,
    compute_stats,
    convert_corpus,
    generate_corpus,
    load_vqa_jsonl,
)
from comforge.annotators import load_fixture

FIXTURE = os.path.join(os.path.dirname(__file__), "..", "fixtures", "mock10")

# The corpus is plain {image, question, answer} rows.
triples = load_vqa_jsonl(os.path.join(FIXTURE, "vqa.jsonl"), source="mock10").items
print(f"loaded {len(triples)} questions, e.g. {triples[0].question!r}")

# Mock annotators replay canned responses keyed by request hash; swap in
# HttpLinguisticClient / HttpVisualClient to use live endpoints instead.
llm = MockLinguisticClient(load_fixture(os.path.join(FIXTURE, "annotators", "llm.jsonl")))
visual = MockVisualClient(
    ground_fixture=load_fixture(os.path.join(FIXTURE, "annotators", "ground.jsonl")),
    ocr_fixture=load_fixture(os.path.join(FIXTURE, "annotators", "ocr.jsonl")),
)

outcome = generate_corpus(triples, FIXTURE, llm, visual, GenerateConfig())
print("report:", json.dumps(outcome.report.to_json_dict()))

# Each positive path became one sample; look at a multi-image one.
samples = outcome.samples
zoomy = next(s for s in samples if len(s.images) > 1)
print(f"\nsample {zoomy.sample_id} uses {len(zoomy.images)} images:")
for i, (image, segment) in enumerate(zip(zoomy.images, zoomy.segments)):
    print(f"  turn {i}: image={image}")
    for line in segment.splitlines():
        print(f"          {line}")

# Dead branches are kept for audit rather than silently dropped.
dead = [record for result in outcome.results for record in result.dead]
print(f"\n{len(dead)} dead branches, e.g.:", dead[0]["reason"])

# Convert to multi-turn rows: turn 1 may get a launching-prompt prefix.
rows = convert_corpus(samples, ConvertConfig(launching_probability=1.0), seed=7)
print(f"\nturn structure: {[len(r.turns) for r in rows]}")
print("first prompt starts:", rows[0].turns[0][1][:60], "...")

# Corpus statistics, averaged over chains.
print("\nstats:", json.dumps(compute_stats(samples).to_json_dict()["per_source"]))
