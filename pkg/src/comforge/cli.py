"""Command-line driver: generate, convert, eval, stats, attn-demo.

Exit codes: 0 success (warnings allowed), 1 usage or configuration error,
2 I/O error, 3 schema violation.

Option values resolve as: command-line flag, then environment variable,
then config file, then built-in default. The config file is plain
``key = value`` lines (``#`` comments allowed); keys are the long flag
names with dashes replaced by underscores.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .annotators import (
    AnnotatorConfig,
    ENV_GROUND_URL,
    ENV_LLM_URL,
    ENV_OCR_URL,
    FlakyVisualClient,
    HttpLinguisticClient,
    HttpVisualClient,
    MockLinguisticClient,
    MockVisualClient,
    load_fixture,
)
from .dataset import (
    ConvertConfig,
    compute_stats,
    convert_corpus,
    load_com_jsonl,
    load_vqa_jsonl,
    write_com_jsonl,
    write_multiturn_jsonl,
)
from .errors import ComforgeError, DatasetIOError
from .metric import com_score
from .pipeline import GenerateConfig, generate_corpus
from .tree import MatcherConfig, TreeConfig
from .dsl import parse_chain
from .images import save_png

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_SCHEMA = 3


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message, EXIT_USAGE)


def parse_config_file(path) -> dict:
    """Plain key = value lines; values may be quoted; # starts a comment."""
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            for lineno, raw in enumerate(handle, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise CliError(f"{path}:{lineno}: expected key = value", EXIT_USAGE)
                key, _, value = line.partition("=")
                values[key.strip().replace("-", "_")] = _parse_config_value(value.strip())
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}", EXIT_USAGE)
    return values


def _parse_config_value(text: str):
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _resolve(args, key, env_var=None, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if env_var and os.environ.get(env_var):
        return os.environ[env_var]
    config = getattr(args, "_config_values", {})
    if key in config:
        return config[key]
    return default


def build_parser() -> _Parser:
    parser = _Parser(
        prog="comforge",
        description="Synthesize, convert, and score manipulation-chain "
        "reasoning data for visual question answering.",
    )
    parser.add_argument("--config", metavar="FILE", help="key = value config file")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    gen = sub.add_parser("generate", help="synthesize samples from a VQA corpus")
    gen.add_argument("--input", required=True, help="vqa.jsonl with {image, question, answer}")
    gen.add_argument("--images-dir", help="directory image refs resolve against")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--source", help="provenance tag for this corpus (default: input stem)")
    gen.add_argument("--llm-url", help="live completion endpoint")
    gen.add_argument("--ground-url", help="live grounding endpoint")
    gen.add_argument("--ocr-url", help="live OCR endpoint")
    gen.add_argument("--llm-fixture", help="completion fixture jsonl (mock mode)")
    gen.add_argument("--ground-fixture", help="grounding fixture jsonl (mock mode)")
    gen.add_argument("--ocr-fixture", help="OCR fixture jsonl (mock mode)")
    gen.add_argument("--matcher", choices=["text", "numeric"], help="answer matcher (default text)")
    gen.add_argument("--branch-cap", type=int, help="children per multi-result call (default 4)")
    gen.add_argument("--node-budget", type=int, help="nodes per question tree (default 256)")
    gen.add_argument("--score-threshold", type=float, help="grounding confidence cutoff (default 0.25)")
    gen.add_argument("--max-boxes", type=int, help="grounding boxes kept per call (default 4)")
    gen.add_argument("--retries", type=int, help="HTTP retries (default 3, env COMFORGE_HTTP_RETRIES)")
    gen.add_argument("--first-only", action="store_true", default=None,
                     help="emit only the first positive path")
    gen.add_argument("--jobs", type=int, help="questions processed in parallel (default 1)")
    gen.add_argument("--inject-ground-failures", type=float, metavar="RATE",
                     help="fault injection: fail this fraction of grounding calls")
    gen.add_argument("--failure-seed", type=int, help="seed for fault injection")
    gen.add_argument("--guideline-file", help="replace the built-in annotator guideline")
    gen.add_argument("--demos-file", help="JSON array of demonstration strings")

    conv = sub.add_parser("convert", help="rewrite samples as multi-turn training rows")
    conv.add_argument("--input", required=True, help="com.jsonl")
    conv.add_argument("--out", required=True, help="multiturn.jsonl")
    conv.add_argument("--probability", type=float,
                      help="chance of a launching prompt on turn 1 (default 0.5)")
    conv.add_argument("--seed", type=int, help="rng seed; required when probability > 0")
    conv.add_argument("--continuation-prompt", help="prompt for turns after the first")

    ev = sub.add_parser("eval", help="score predicted chains against gold chains")
    ev.add_argument("--pred", required=True, help="predicted com.jsonl")
    ev.add_argument("--gold", required=True, help="gold com.jsonl")
    ev.add_argument("--out", help="write the JSON report here instead of stdout")
    ev.add_argument("--divisor", type=int, choices=[1, 2],
                    help="combined-score divisor (default 2, the formula as written)")
    ev.add_argument("--smooth", action="store_true", default=None, help="add-one BLEU smoothing")

    st = sub.add_parser("stats", help="corpus statistics for a com.jsonl")
    st.add_argument("--input", required=True, help="com.jsonl")
    st.add_argument("--out", help="write JSON here instead of stdout")

    demo = sub.add_parser("attn-demo", help="print memory-attention weights as JSON")
    demo.add_argument("--turns", type=int, default=2)
    demo.add_argument("--rows", type=int, default=3, help="key/value rows per turn")
    demo.add_argument("--dim", type=int, default=4)
    demo.add_argument("--max-len", type=int, required=True,
                      help="memory truncation threshold in rows")
    demo.add_argument("--seed", type=int, default=0)
    return parser


# --- generate ---------------------------------------------------------------


def _make_clients(args):
    retries = _resolve(args, "retries", env_var="COMFORGE_HTTP_RETRIES")
    retries = int(retries) if retries is not None else None
    annotator_config = AnnotatorConfig(
        score_threshold=float(_resolve(args, "score_threshold", default=0.25)),
        max_boxes=int(_resolve(args, "max_boxes", default=4)),
        retries=retries,
    )
    llm_fixture = _resolve(args, "llm_fixture")
    llm_url = _resolve(args, "llm_url", env_var=ENV_LLM_URL)
    if llm_fixture and llm_url:
        raise CliError("--llm-fixture and --llm-url are mutually exclusive", EXIT_USAGE)
    if llm_fixture:
        llm_client = MockLinguisticClient(load_fixture(llm_fixture))
    elif llm_url:
        llm_client = HttpLinguisticClient(url=llm_url, config=annotator_config)
    else:
        raise CliError("need --llm-fixture or --llm-url (or COMFORGE_LLM_URL)", EXIT_USAGE)

    ground_fixture = _resolve(args, "ground_fixture")
    ocr_fixture = _resolve(args, "ocr_fixture")
    ground_url = _resolve(args, "ground_url", env_var=ENV_GROUND_URL)
    ocr_url = _resolve(args, "ocr_url", env_var=ENV_OCR_URL)
    if (ground_fixture and ground_url) or (ocr_fixture and ocr_url):
        raise CliError("fixture and live endpoint are mutually exclusive per annotator", EXIT_USAGE)
    if ground_fixture or ocr_fixture:
        if ground_url or ocr_url:
            raise CliError("cannot mix visual fixtures with live endpoints", EXIT_USAGE)
        visual_client = MockVisualClient(
            ground_fixture=load_fixture(ground_fixture) if ground_fixture else None,
            ocr_fixture=load_fixture(ocr_fixture) if ocr_fixture else None,
            config=annotator_config,
        )
    elif ground_url or ocr_url:
        visual_client = HttpVisualClient(ground_url=ground_url, ocr_url=ocr_url,
                                         config=annotator_config)
    else:
        raise CliError("need visual fixtures or endpoints", EXIT_USAGE)

    rate = _resolve(args, "inject_ground_failures")
    if rate:
        seed = _resolve(args, "failure_seed")
        if seed is None:
            raise CliError("--inject-ground-failures needs --failure-seed", EXIT_USAGE)
        visual_client = FlakyVisualClient(visual_client, float(rate), int(seed))
    return llm_client, visual_client, annotator_config


def cmd_generate(args) -> int:
    llm_client, visual_client, annotator_config = _make_clients(args)
    tree_config = TreeConfig(
        branch_cap=int(_resolve(args, "branch_cap", default=4)),
        node_budget=int(_resolve(args, "node_budget", default=256)),
        matcher=MatcherConfig(mode=_resolve(args, "matcher", default="text")),
        annotators=annotator_config,
    )
    guideline = None
    guideline_file = _resolve(args, "guideline_file")
    if guideline_file:
        guideline = _read_text(guideline_file)
    demos = None
    demos_file = _resolve(args, "demos_file")
    if demos_file:
        demos = tuple(json.loads(_read_text(demos_file)))
    config = GenerateConfig(
        tree=tree_config,
        first_only=bool(_resolve(args, "first_only", default=False)),
        jobs=int(_resolve(args, "jobs", default=1)),
        guideline=guideline,
        demonstrations=demos,
        demo_count=len(demos) if demos else 5,
    )

    source = _resolve(args, "source")
    if not source:
        source = os.path.splitext(os.path.basename(args.input))[0]
    loaded = load_vqa_jsonl(args.input, source=source)
    for err in loaded.errors:
        print(f"warning: {args.input}:{err.line_number}: {err.message}", file=sys.stderr)

    images_dir = _resolve(args, "images_dir") or os.path.dirname(os.path.abspath(args.input))
    outcome = generate_corpus(loaded.items, images_dir, llm_client, visual_client, config)

    out_dir = args.out
    audit_dir = os.path.join(out_dir, "audit")
    os.makedirs(audit_dir, exist_ok=True)
    os.makedirs(os.path.join(out_dir, "derived"), exist_ok=True)

    samples = outcome.samples
    write_com_jsonl(samples, os.path.join(out_dir, "com.jsonl"))
    for ref, buffer in sorted(outcome.derived_images.items()):
        save_png(buffer, os.path.join(out_dir, ref))
    _write_json(os.path.join(out_dir, "report.json"), outcome.report.to_json_dict())

    with open(os.path.join(audit_dir, "completions.jsonl"), "w", encoding="utf-8") as handle:
        for result in outcome.results:
            handle.write(json.dumps({
                "qa_id": result.triple.qa_id,
                "completion": result.completion,
                "failure": result.failure,
            }, sort_keys=True, ensure_ascii=False) + "\n")
    with open(os.path.join(audit_dir, "dead_branches.jsonl"), "w", encoding="utf-8") as handle:
        for result in outcome.results:
            for record in result.dead:
                handle.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    for result in outcome.results:
        if result.failure:
            print(f"warning: {result.triple.qa_id}: {result.failure}", file=sys.stderr)
    print(json.dumps(outcome.report.to_json_dict(), sort_keys=True))
    return EXIT_OK


# --- convert ------------------------------------------------------------------


def cmd_convert(args) -> int:
    probability = _resolve(args, "probability", default=0.5)
    probability = float(probability)
    seed = _resolve(args, "seed")
    if probability > 0 and seed is None:
        raise CliError("--seed is required when probability > 0", EXIT_USAGE)
    loaded = load_com_jsonl(args.input)
    if loaded.errors:
        for err in loaded.errors:
            print(f"error: {args.input}:{err.line_number}: {err.message}", file=sys.stderr)
        return EXIT_SCHEMA
    config = ConvertConfig(
        launching_probability=probability,
        continuation_prompt=_resolve(
            args, "continuation_prompt", default=ConvertConfig().continuation_prompt
        ),
    )
    converted = convert_corpus(loaded.items, config, int(seed) if seed is not None else 0)
    write_multiturn_jsonl(converted, args.out)
    print(f"wrote {len(converted)} samples to {args.out}")
    return EXIT_OK


# --- eval ----------------------------------------------------------------------


def _chain_of(sample):
    return parse_chain("\n".join(sample.segments))


def cmd_eval(args) -> int:
    divisor = int(_resolve(args, "divisor", default=2))
    pred = load_com_jsonl(args.pred)
    gold = load_com_jsonl(args.gold)
    for name, loaded in (("pred", pred), ("gold", gold)):
        for err in loaded.errors:
            print(f"warning: {name}:{err.line_number}: {err.message}", file=sys.stderr)
    pred_by_id = {s.sample_id: s for s in pred.items}
    gold_by_id = {s.sample_id: s for s in gold.items}
    unmatched = sorted(set(pred_by_id) ^ set(gold_by_id))
    for sample_id in unmatched:
        print(f"warning: unmatched id {sample_id}", file=sys.stderr)
    rows = []
    for sample_id in sorted(set(pred_by_id) & set(gold_by_id)):
        report = com_score(
            _chain_of(pred_by_id[sample_id]),
            _chain_of(gold_by_id[sample_id]),
            divisor=divisor,
            smooth=bool(_resolve(args, "smooth", default=False)),
        )
        row = {"id": sample_id}
        row.update(report.to_json_dict())
        rows.append(row)
    n = len(rows)
    summary = {
        "samples": rows,
        "count": n,
        "unmatched_ids": unmatched,
        "mean_s_k": sum(r["s_k"] for r in rows) / n if n else None,
        "mean_s_c": sum(r["s_c"] for r in rows) / n if n else None,
        "mean_acc": sum(r["acc"] for r in rows) / n if n else None,
        "divisor": divisor,
    }
    if args.out:
        _write_json(args.out, summary)
    else:
        print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


# --- stats ----------------------------------------------------------------------


def cmd_stats(args) -> int:
    loaded = load_com_jsonl(args.input)
    if loaded.errors:
        for err in loaded.errors:
            print(f"error: {args.input}:{err.line_number}: {err.message}", file=sys.stderr)
        return EXIT_SCHEMA
    stats = compute_stats(loaded.items).to_json_dict()
    if args.out:
        _write_json(args.out, stats)
    else:
        print(json.dumps(stats, indent=2, sort_keys=True))
    return EXIT_OK


# --- attn-demo --------------------------------------------------------------------


def cmd_attn_demo(args) -> int:
    import numpy as np

    from .memory_attn import MemoryState, TurnKV, append_turn, attend

    rng = np.random.default_rng(args.seed)
    state = MemoryState.empty(args.dim, args.max_len)
    for t in range(args.turns):
        turn = TurnKV(
            rng.standard_normal((args.rows, args.dim)),
            rng.standard_normal((args.rows, args.dim)),
            turn_index=t,
        )
        state = append_turn(state, turn)
    query = rng.standard_normal((args.rows, args.dim))
    out = attend(query, state)
    print(json.dumps({
        "turns": args.turns,
        "memory_length": len(state),
        "max_len": args.max_len,
        "weights": [[round(v, 6) for v in row] for row in out.weights.tolist()],
        "output": [[round(v, 6) for v in row] for row in out.output.tolist()],
    }, indent=2))
    return EXIT_OK


# --- wiring -----------------------------------------------------------------------


def _read_text(path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return handle.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO)


def _write_json(path, data):
    try:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(data, handle, indent=2, sort_keys=True)
            handle.write("\n")
    except OSError as exc:
        raise DatasetIOError(path, f"cannot write: {exc}") from exc


COMMANDS = {
    "generate": cmd_generate,
    "convert": cmd_convert,
    "eval": cmd_eval,
    "stats": cmd_stats,
    "attn-demo": cmd_attn_demo,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return EXIT_USAGE
        args._config_values = parse_config_file(args.config) if args.config else {}
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DatasetIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ComforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
