import random
import re

import pytest

from comforge.dsl import (
    Chain,
    Literal,
    ManipulationCall,
    ManipulationName,
    Step,
    VarRef,
    parse_chain,
    parse_step,
    render_step,
    validate_chain,
)
from comforge.errors import ChainParseError, EmptyArgument, MalformedCall

# Independent oracle: a single regex over the same grammar, used only to
# cross-check spans and call counts found by the real parser.
ORACLE_CALL_RE = re.compile(
    r"[A-Za-z_][A-Za-z0-9_]*\([^()]*\)[ \t]*(?:->|→)[ \t]*[A-Za-z_][A-Za-z0-9_]*"
)


def test_single_grounding_call():
    step = parse_step("Using GROUNDING(the pillar near the desk)->bbx_1 to locate it.")
    assert len(step.calls) == 1
    call = step.calls[0]
    assert call.name.name == "GROUNDING"
    assert call.args == (Literal("the pillar near the desk"),)
    assert call.result_var == "bbx_1"


def test_prose_only_step():
    step = parse_step("The sign clearly reads stop.")
    assert step.calls == ()
    assert step.raw_text == "The sign clearly reads stop."


def test_two_calls_spans_match_regex_oracle():
    text = "CALCULATE(3+4*2)->num_1 then OCR(bbx_1)->txt_2"
    step = parse_step(text)
    assert [c.name.name for c in step.calls] == ["CALCULATE", "OCR"]
    assert step.calls[1].args == (VarRef("bbx_1"),)
    oracle_spans = [m.span() for m in ORACLE_CALL_RE.finditer(text)]
    assert list(step.spans) == oracle_spans


def test_unicode_arrow_equals_ascii_arrow():
    a = parse_step("GROUNDING(cat)->bbx_0")
    b = parse_step("GROUNDING(cat)→bbx_0")
    assert a.calls[0].name == b.calls[0].name
    assert a.calls[0].args == b.calls[0].args
    assert a.calls[0].result_var == b.calls[0].result_var


def test_unknown_name_becomes_custom():
    step = parse_step("Use READ_TIME(bbx_1)->txt_1 here.")
    assert step.calls[0].name == ManipulationName("READ_TIME")
    assert not step.calls[0].name.is_builtin


def test_lowercase_builtin_is_normalized():
    step = parse_step("Grounding(tgt)->bbx_1")
    assert step.calls[0].name.name == "GROUNDING"
    assert step.calls[0].name.is_builtin


def test_literal_whitespace_trimmed_only_at_edges():
    step = parse_step("OCR(  a  b  )->txt_1")
    assert step.calls[0].args == (Literal("a  b"),)


def test_nested_parens_in_argument():
    step = parse_step("CALCULATE((7-7)/3)->num_1")
    assert step.calls[0].args == (Literal("(7-7)/3"),)


def test_parenthesized_prose_is_not_a_call():
    step = parse_step("The value(about 3) stands.")
    assert step.calls == ()


def test_call_inside_non_call_parens_is_found():
    step = parse_step("note(GROUNDING(cat)->bbx_0)")
    assert len(step.calls) == 1
    assert step.calls[0].name.name == "GROUNDING"


def test_unbalanced_parens_raise():
    with pytest.raises(MalformedCall):
        parse_step("GROUNDING(→")


def test_missing_result_var_raises():
    with pytest.raises(MalformedCall):
        parse_step("OCR(x)-> ")


def test_empty_argument_raises():
    with pytest.raises(EmptyArgument):
        parse_step("OCR()->txt_1")
    with pytest.raises(EmptyArgument):
        parse_step("LINE(a,,b)->img_1")


def test_round_trip_simple():
    for s in ["GROUNDING(cat)->bbx_0.", ""]:
        assert render_step(parse_step(s)) == s


# ---------------------------------------------------------------------------
# generator for well-formed steps; round-trip is checked against plain
# string equality, which is the oracle here
# ---------------------------------------------------------------------------

PROSE_WORDS = "the a sign pillar left right reads shows near desk now then so".split()
NAMES = ["OCR", "GROUNDING", "COUNTING", "CALCULATE", "CROP_AND_ZOOMIN", "LINE", "READ_TIME"]
PREFIXES = ["bbx", "txt", "num", "img", "pts"]


def random_prose(rng, min_words=0, max_words=5):
    n = rng.randint(min_words, max_words)
    return " ".join(rng.choice(PROSE_WORDS) for _ in range(n))


def random_call_text(rng, counter):
    name = rng.choice(NAMES)
    args = []
    for _ in range(rng.randint(1, 3)):
        if rng.random() < 0.3:
            args.append(f"{rng.choice(PREFIXES)}_{rng.randint(0, 9)}")
        else:
            args.append(random_prose(rng, 1, 3))
    var = f"{rng.choice(PREFIXES)}_{counter}"
    arrow = rng.choice(["->", "→"])
    return f"{name}({', '.join(args)}){arrow}{var}"


def random_step_text(rng):
    parts = [random_prose(rng)]
    for i in range(rng.randint(0, 3)):
        parts.append(random_call_text(rng, i))
        parts.append(random_prose(rng))
    text = " ".join(p for p in parts if p)
    return text


def test_round_trip_1000_generated_steps():
    rng = random.Random(20240817)
    for _ in range(1000):
        text = random_step_text(rng)
        step = parse_step(text)
        assert render_step(step) == text
        oracle = [m.span() for m in ORACLE_CALL_RE.finditer(text)]
        assert len(step.calls) == len(oracle)


def test_parsing_is_total_on_arbitrary_text():
    # any input yields a Step or a structured error, never a crash
    rng = random.Random(555)
    pool = "ab X(),->→_019 \té中"
    for _ in range(2000):
        text = "".join(rng.choice(pool) for _ in range(rng.randint(0, 30)))
        try:
            step = parse_step(text)
        except (MalformedCall, EmptyArgument):
            continue
        assert render_step(step) == text


def test_chain_parsing_and_answer_marker():
    chain = parse_chain(
        "Using GROUNDING(the pillar)->bbx_1 to locate it.\n"
        "Using OCR(bbx_1)->txt_1 to read it.\n"
        "Answer: txt_1\n"
    )
    assert len(chain.steps) == 3
    assert chain.final_answer == "txt_1"
    assert validate_chain(chain) == []


def test_chain_parse_error_keeps_raw_text():
    raw = "GROUNDING(→"
    with pytest.raises(ChainParseError) as err:
        parse_chain(raw)
    assert err.value.raw_text == raw


def test_answer_candidate_from_trailing_text():
    chain = parse_chain("OCR(bbx_1)->txt_1 so it reads STOP")
    assert chain.final_answer is None
    assert chain.answer_candidate() == "so it reads STOP"


def test_validate_undefined_variable():
    chain = parse_chain("step one here\nUsing OCR(bbx_9)->txt_1 to read.")
    violations = validate_chain(chain)
    assert [v.code for v in violations] == ["undefined-variable"]
    assert violations[0].var == "bbx_9"


def test_validate_counting_then_calculate_ok():
    chain = parse_chain("COUNTING(the cats)->num_1\nCALCULATE(num_1+1)->num_2")
    assert validate_chain(chain) == []


def test_validate_duplicate_definition():
    chain = parse_chain("OCR(a)->txt_1\nOCR(b)->txt_1")
    violations = validate_chain(chain)
    assert [v.code for v in violations] == ["duplicate-definition"]
    assert violations[0].var == "txt_1"


def test_validate_kind_mismatch():
    chain = parse_chain("GROUNDING(the cat)->txt_1")
    violations = validate_chain(chain)
    assert [v.code for v in violations] == ["kind-mismatch"]


def test_definition_order_matches_step_order():
    chain = parse_chain("GROUNDING(a)->bbx_1\nOCR(bbx_1)->txt_1\nCALCULATE(2+2)->num_1")
    assert validate_chain(chain) == []
    order = [call.result_var for _, _, call in chain.calls()]
    assert order == ["bbx_1", "txt_1", "num_1"]
