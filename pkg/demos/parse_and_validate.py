"""Tour of the manipulation DSL: parsing, round-tripping, validation.

Run: python3 demos/parse_and_validate.py
"""

from comforge import parse_chain, parse_step, render_step, validate_chain

# A step is ordinary prose with embedded calls of the form NAME(args)->var.
step = parse_step("Using GROUNDING(the pillar near the desk)->bbx_1 to locate it.")
call = step.calls[0]
print("call name:   ", call.name)
print("argument:    ", call.args[0])
print("result var:  ", call.result_var)
print("span:        ", step.spans[0])

# Parsing keeps the surrounding text byte for byte, so rendering is exact.
original = "CALCULATE(3+4*2)->num_1 then OCR(bbx_1)->txt_2, done."
assert render_step(parse_step(original)) == original
print("round-trip ok")

# Both arrow spellings work, and unknown names become custom manipulations.
print(parse_step("READ_TIME(bbx_1)→txt_9").calls[0].name, "(custom)")

# A chain is one step per line; validation returns violations as data.
chain = parse_chain(
    "Using GROUNDING(the wheels)->bbx_1 to find the wheels.\n"
    "Count them with COUNTING(bbx_1)->num_1\n"
    "Answer: num_1"
)
print("steps:        ", len(chain.steps))
print("final answer: ", chain.final_answer)
print("violations:   ", validate_chain(chain))

# A broken chain reports what is wrong instead of raising.
broken = parse_chain("Using OCR(bbx_7)->txt_1 to read a box nobody defined.")
for violation in validate_chain(broken):
    print("violation:    ", violation.code, violation.var, "at step", violation.step_index)
