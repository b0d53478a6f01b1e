import random

import pytest

from comforge.annotators import (
    AnnotatorConfig,
    FlakyVisualClient,
    MockVisualClient,
    VisualRequest,
    canonical_request,
    request_key,
)
from comforge.dataset import VqaTriple
from comforge.dsl import parse_chain, validate_chain
from comforge.images import constant_image
from comforge.tree import (
    MatcherConfig,
    TreeConfig,
    TreeNode,
    answer_match,
    build_tree,
    dead_branches,
    dfs_positive_paths,
    iter_leaf_paths,
    path_to_com_sample,
)
from comforge.values import Text

IMAGE = constant_image(100, 80, ident="scene.png")


def ground_entry(table, phrase, boxes, image=IMAGE):
    req = VisualRequest("ground", image, phrase=phrase)
    table[request_key(canonical_request(req))] = {
        "boxes": [
            {"x0": b[0], "y0": b[1], "x1": b[2], "y1": b[3], "score": b[4] if len(b) > 4 else 0.9}
            for b in boxes
        ]
    }


def ocr_entry(table, region, texts, image=IMAGE, image_ident=None):
    if image_ident is not None:
        image = constant_image(4, 4, ident=image_ident)
    req = VisualRequest("ocr", image, region=region)
    table[request_key(canonical_request(req))] = {
        "items": [{"text": t, "box": list(region.as_tuple()) if region else [0, 0, 999, 999]} for t in texts]
    }


# ---------------------------------------------------------------------------
# tree construction against mocks
# ---------------------------------------------------------------------------

def two_branch_client():
    from comforge.values import Box

    ground = {}
    ocr = {}
    ground_entry(ground, "the pillar", [(100, 100, 300, 800), (600, 100, 800, 800)])
    ocr_entry(ocr, Box(100, 100, 300, 800), ["KINGSGATE"])
    ocr_entry(ocr, Box(600, 100, 800, 800), ["EXIT"])
    return MockVisualClient(ground_fixture=ground, ocr_fixture=ocr)


def test_two_step_chain_branches_into_two_leaves():
    chain = parse_chain("GROUNDING(the pillar)->bbx_1\nOCR(bbx_1)->txt_1")
    root = build_tree(chain, IMAGE, two_branch_client())
    assert len(root.children) == 2
    assert all(len(child.children) == 1 for child in root.children)
    leaves = [trail[-1] for trail in iter_leaf_paths(root)]
    assert sorted(leaf.binding["txt_1"].text for leaf in leaves) == ["EXIT", "KINGSGATE"]
    assert all(leaf.is_terminal for leaf in leaves)


def test_prose_chain_is_unary_path():
    chain = parse_chain("first thought\nsecond thought\nthird thought")
    root = build_tree(chain, IMAGE, MockVisualClient())
    depth = 0
    node = root
    while node.children:
        assert len(node.children) == 1
        node = node.children[0]
        depth += 1
    assert depth == 3
    assert node.is_terminal


def test_zero_boxes_prunes_branch():
    chain = parse_chain("GROUNDING(the plaque)->bbx_1\nOCR(bbx_1)->txt_1")
    root = build_tree(chain, IMAGE, MockVisualClient())
    assert root.children == []
    assert dfs_positive_paths(root, "WELCOME", chain=chain) == []


def test_counting_consumer_keeps_box_list():
    ground = {}
    ground_entry(ground, "the wheels", [(0, 0, 100, 100), (200, 0, 300, 100), (400, 0, 500, 100)])
    chain = parse_chain("GROUNDING(the wheels)->bbx_1\nCOUNTING(bbx_1)->num_1")
    root = build_tree(chain, IMAGE, MockVisualClient(ground_fixture=ground))
    assert len(root.children) == 1  # no branching when only counting consumes
    leaf = root.children[0].children[0]
    assert leaf.binding["num_1"].value == 3
    paths = dfs_positive_paths(root, "3", chain=chain)
    assert len(paths) == 1
    assert paths[0].answer == "3"


def test_custom_manipulation_becomes_error_leaf():
    ground = {}
    ground_entry(ground, "the clock", [(10, 10, 500, 500)])
    chain = parse_chain("GROUNDING(the clock)->bbx_1\nREAD_TIME(bbx_1)->txt_1")
    root = build_tree(chain, IMAGE, MockVisualClient(ground_fixture=ground))
    leaf = root.children[0].children[0]
    assert leaf.error is not None and "READ_TIME" in leaf.error
    assert leaf.children == []
    assert dfs_positive_paths(root, "3:15", chain=chain) == []
    audit = dead_branches(root, "3:15", chain=chain)
    assert len(audit) == 1 and audit[0]["reason"].startswith("error:")


def test_branch_cap_limits_children():
    ground = {}
    ground_entry(ground, "dots", [(i * 50, 0, i * 50 + 20, 20) for i in range(8)])
    chain = parse_chain("GROUNDING(dots)->bbx_1\nOCR(bbx_1)->txt_1")
    config = TreeConfig(branch_cap=3, annotators=AnnotatorConfig(max_boxes=10))
    root = build_tree(chain, IMAGE, MockVisualClient(ground_fixture=ground), config)
    assert len(root.children) == 3


def test_node_budget_bounds_tree_size():
    ground = {}
    ground_entry(ground, "things", [(i * 50, 0, i * 50 + 20, 20) for i in range(4)])
    # each grounding branches 4-ways; 3 of them would be 1 + 4 + 16 + 64
    chain = parse_chain(
        "GROUNDING(things)->bbx_1\nGROUNDING(things)->bbx_2\nGROUNDING(things)->bbx_3"
    )
    config = TreeConfig(node_budget=10)
    root = build_tree(chain, IMAGE, MockVisualClient(ground_fixture=ground), config)
    assert sum(1 for _ in root.iter_nodes()) <= 10


def test_transport_failure_is_recorded_not_raised():
    ground = {}
    ground_entry(ground, "the sign", [(10, 10, 200, 200)])
    client = FlakyVisualClient(MockVisualClient(ground_fixture=ground), fail_rate=1.0, seed=1)
    chain = parse_chain("GROUNDING(the sign)->bbx_1")
    root = build_tree(chain, IMAGE, client)
    assert len(root.children) == 1
    assert root.children[0].error.startswith("transport:")


def test_calculate_with_variable_substitution():
    ground = {}
    ground_entry(ground, "the numbers", [(0, 0, 400, 200)])
    ocr = {}
    from comforge.values import Box

    ocr_entry(ocr, Box(0, 0, 400, 200), ["12 + 30"])
    chain = parse_chain(
        "GROUNDING(the numbers)->bbx_1\nOCR(bbx_1)->txt_1\nCALCULATE(txt_1)->num_1"
    )
    client = MockVisualClient(ground_fixture=ground, ocr_fixture=ocr)
    root = build_tree(chain, IMAGE, client)
    paths = dfs_positive_paths(root, "42", chain=chain)
    assert len(paths) == 1
    assert validate_chain(paths[0].resolved_chain.chain) == []


def test_crop_zoom_creates_new_image_handle_and_derived_ocr():
    ground = {}
    ground_entry(ground, "the sign", [(100, 200, 500, 700)])
    ocr = {}
    derived_ident = "scene.png|crop(100,200,500,700)x2"
    ocr_entry(ocr, None, ["ACME"], image_ident=derived_ident)
    chain = parse_chain(
        "GROUNDING(the sign)->bbx_1\nCROP_AND_ZOOMIN(bbx_1, 2)->img_1\nOCR(img_1)->txt_1"
    )
    client = MockVisualClient(ground_fixture=ground, ocr_fixture=ocr)
    root = build_tree(chain, IMAGE, client)
    crop_node = root.children[0].children[0]
    assert crop_node.image.ident == derived_ident
    paths = dfs_positive_paths(root, "ACME", chain=chain)
    assert len(paths) == 1


def test_ocr_literal_argument_reads_whole_image():
    ocr = {}
    ocr_entry(ocr, None, ["BANNER TEXT"])
    chain = parse_chain("OCR(the banner)->txt_1\nAnswer: txt_1")
    root = build_tree(chain, IMAGE, MockVisualClient(ocr_fixture=ocr))
    paths = dfs_positive_paths(root, "BANNER TEXT", chain=chain)
    assert len(paths) == 1


def test_ocr_multiple_texts_branch():
    from comforge.values import Box

    ground = {}
    ground_entry(ground, "the poster", [(0, 0, 500, 500)])
    ocr = {}
    ocr_entry(ocr, Box(0, 0, 500, 500), ["LINE ONE", "LINE TWO"])
    chain = parse_chain("GROUNDING(the poster)->bbx_1\nOCR(bbx_1)->txt_1\nAnswer: txt_1")
    client = MockVisualClient(ground_fixture=ground, ocr_fixture=ocr)
    root = build_tree(chain, IMAGE, client)
    ocr_level = root.children[0].children
    assert len(ocr_level) == 2
    assert len(dfs_positive_paths(root, "LINE TWO", chain=chain)) == 1


def test_line_executes_and_changes_image():
    chain = parse_chain("LINE((100,100),(900,900))->img_1\nthe shapes are equal\nAnswer: equal")
    root = build_tree(chain, IMAGE, MockVisualClient())
    line_node = root.children[0]
    assert line_node.error is None
    assert line_node.image.ident.startswith("scene.png|line(")
    paths = dfs_positive_paths(root, "equal", chain=chain)
    assert len(paths) == 1


# ---------------------------------------------------------------------------
# answer matching
# ---------------------------------------------------------------------------

def test_answer_match_case_fold():
    assert answer_match("No Smoking", "no smoking")


def test_answer_match_numeric_mode():
    numeric = MatcherConfig(mode="numeric")
    assert answer_match("4", "4.0", numeric)
    assert not answer_match("4", "4.0")


def test_answer_match_no_fuzz():
    assert not answer_match("KINGSGATE", "KINGS GATE")


def test_answer_match_articles_and_punctuation():
    assert answer_match("The stop sign.", "stop sign")


# ---------------------------------------------------------------------------
# DFS against a brute-force enumeration oracle on random trees
# ---------------------------------------------------------------------------

LABELS = ["red", "blue", "green", "gold"]


def make_random_tree(rng, max_depth=4, max_branch=3):
    counter = [0]

    def node(depth):
        counter[0] += 1
        idx = counter[0]
        n = TreeNode(
            step_index=depth,
            call_index=0,
            call=None,
            binding={f"txt_{idx}": Text(rng.choice(LABELS))},
            image=IMAGE,
        )
        if rng.random() < 0.05:
            n.error = "synthetic failure"
        if depth < max_depth and rng.random() > 0.2:
            for _ in range(rng.randint(1, max_branch)):
                n.children.append(node(depth + 1))
        else:
            n.is_terminal = rng.random() > 0.15
        return n

    root = TreeNode(step_index=-1, call_index=-1, call=None, binding={}, image=IMAGE)
    for _ in range(rng.randint(1, max_branch)):
        root.children.append(node(0))
    return root


def oracle_enumerate_positive(root, golden):
    """Exhaustive path enumeration, then filtering; recursion written
    independently of the production traversal."""
    found = []

    def walk(node, trail):
        trail = trail + [node]
        if node.children:
            for child in node.children:
                walk(child, trail)
            return
        if not node.is_terminal:
            return
        if any(n.error is not None for n in trail):
            return
        label = None
        for n in trail:
            for value in n.binding.values():
                label = value.text
        if label is not None and answer_match(label, golden):
            found.append(tuple(id(n) for n in trail))

    walk(root, [])
    return found


def test_dfs_equals_bruteforce_on_random_trees():
    rng = random.Random(20240901)
    for _ in range(200):
        root = make_random_tree(rng)
        golden = rng.choice(LABELS)
        got = [tuple(id(n) for n in p.nodes) for p in dfs_positive_paths(root, golden)]
        expected = oracle_enumerate_positive(root, golden)
        assert set(got) == set(expected)
        assert len(got) == len(expected)
        # preorder: oracle's recursion order is also preorder
        assert got == expected


def test_positive_paths_resolved_chains_validate():
    chain = parse_chain("GROUNDING(the pillar)->bbx_1\nOCR(bbx_1)->txt_1\nAnswer: txt_1")
    root = build_tree(chain, IMAGE, two_branch_client())
    for path in dfs_positive_paths(root, "KINGSGATE", chain=chain):
        assert validate_chain(path.resolved_chain.chain) == []
        assert path.answer == "KINGSGATE"


# ---------------------------------------------------------------------------
# sample conversion
# ---------------------------------------------------------------------------

TRIPLE = VqaTriple(
    image_ref="scene.png", question="what is written on the pillar?",
    answer="KINGSGATE", qa_id="q01", source="unit",
)


def test_path_to_sample_single_image():
    chain = parse_chain("GROUNDING(the pillar)->bbx_1\nOCR(bbx_1)->txt_1\nAnswer: txt_1")
    root = build_tree(chain, IMAGE, two_branch_client())
    path = dfs_positive_paths(root, "KINGSGATE", chain=chain)[0]
    sample = path_to_com_sample(path, TRIPLE, "q01#0")
    assert sample.images == ("scene.png",)
    assert len(sample.segments) == 1
    assert "= (100,100,300,800)" in sample.segments[0]
    assert sample.segments[0].endswith("KINGSGATE")


def test_path_to_sample_with_zoom_makes_two_segments():
    ground = {}
    ground_entry(ground, "the sign", [(100, 200, 500, 700)])
    ocr = {}
    ocr_entry(ocr, None, ["ACME"], image_ident="scene.png|crop(100,200,500,700)x2")
    chain = parse_chain(
        "GROUNDING(the sign)->bbx_1\n"
        "CROP_AND_ZOOMIN(bbx_1, 2)->img_1\n"
        "OCR(img_1)->txt_1\n"
        "Answer: txt_1"
    )
    client = MockVisualClient(ground_fixture=ground, ocr_fixture=ocr)
    root = build_tree(chain, IMAGE, client)
    triple = VqaTriple("scene.png", "what brand?", "ACME", "q03", "unit")
    path = dfs_positive_paths(root, "ACME", chain=chain)[0]
    sample = path_to_com_sample(path, triple, "q03#0")
    assert len(sample.images) == 2
    assert len(sample.segments) == 2
    assert sample.images[1] == "scene.png|crop(100,200,500,700)x2"
    assert sample.segments[0].endswith("CROP_AND_ZOOMIN(bbx_1, 2)->img_1")
    assert sample.segments[1].endswith("ACME")


def test_path_to_sample_three_zooms_four_images():
    ground = {}
    ocr = {}
    idents = ["scene.png"]
    for i in range(3):
        ident = idents[-1] + f"|crop(0,0,499,499)x2"
        idents.append(ident)
    for i, ident in enumerate(idents[:-1]):
        image = constant_image(4, 4, ident=ident) if i else IMAGE
        ground_entry(ground, "the target", [(0, 0, 499, 499)], image=image)
    ocr_entry(ocr, None, ["DEEP"], image_ident=idents[-1])
    chain = parse_chain(
        "GROUNDING(the target)->bbx_1\nCROP_AND_ZOOMIN(bbx_1, 2)->img_1\n"
        "GROUNDING(the target)->bbx_2\nCROP_AND_ZOOMIN(bbx_2, 2)->img_2\n"
        "GROUNDING(the target)->bbx_3\nCROP_AND_ZOOMIN(bbx_3, 2)->img_3\n"
        "OCR(img_3)->txt_1\nAnswer: txt_1"
    )
    client = MockVisualClient(ground_fixture=ground, ocr_fixture=ocr)
    root = build_tree(chain, IMAGE, client)
    triple = VqaTriple("scene.png", "what?", "DEEP", "q", "unit")
    paths = dfs_positive_paths(root, "DEEP", chain=chain)
    assert len(paths) == 1
    sample = path_to_com_sample(paths[0], triple, "q#0")
    assert len(sample.images) == 4
    assert len(sample.segments) == 4
