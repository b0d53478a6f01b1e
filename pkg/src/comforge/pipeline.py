"""End-to-end corpus generation: prompt, parse, execute, search, emit.

For each question the linguistic annotator proposes solving steps, the
visual annotators and local executors fill in manipulation results while
branching over alternatives, and the answer-bearing paths become samples.
Per-question failures are recorded, never fatal; raw completions and dead
branches are kept for audit.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .annotators import LinguisticPrompt, default_prompt, build_linguistic_prompt, request_solving_steps
from .dataset import VqaTriple
from .dsl import validate_chain
from .errors import ChainParseError, ComforgeError, TransportError
from .images import ImageBuffer, load_png
from .tree import (
    SearchReport,
    TreeConfig,
    build_tree,
    dead_branches,
    dfs_positive_paths,
    path_to_com_sample,
)


@dataclass
class GenerateConfig:
    tree: TreeConfig = field(default_factory=TreeConfig)
    first_only: bool = False
    jobs: int = 1
    guideline: Optional[str] = None
    demonstrations: Optional[tuple] = None
    demo_count: int = 5


@dataclass
class QuestionResult:
    triple: VqaTriple
    prompt_text: str = ""
    completion: Optional[str] = None
    failure: Optional[str] = None
    tree_built: bool = False
    samples: list = field(default_factory=list)
    paths: list = field(default_factory=list)
    dead: list = field(default_factory=list)
    derived_images: dict = field(default_factory=dict)  # ref -> ImageBuffer


@dataclass
class GenerateOutcome:
    results: list
    report: SearchReport

    @property
    def samples(self) -> list:
        out = []
        for result in self.results:
            out.extend(result.samples)
        return out

    @property
    def derived_images(self) -> dict:
        merged = {}
        for result in self.results:
            merged.update(result.derived_images)
        return merged


def _prompt_for(question: str, config: GenerateConfig) -> LinguisticPrompt:
    if config.guideline is None and config.demonstrations is None:
        return default_prompt(question)
    from .annotators import DEFAULT_DEMONSTRATIONS, DEFAULT_GUIDELINE

    return build_linguistic_prompt(
        config.guideline if config.guideline is not None else DEFAULT_GUIDELINE,
        config.demonstrations if config.demonstrations is not None else DEFAULT_DEMONSTRATIONS,
        question,
        demo_count=config.demo_count,
    )


def process_question(
    triple: VqaTriple,
    image: ImageBuffer,
    llm_client,
    visual_client,
    config: GenerateConfig,
) -> QuestionResult:
    result = QuestionResult(triple=triple)
    prompt = _prompt_for(triple.question, config)
    result.prompt_text = prompt.serialize()
    try:
        chain = request_solving_steps(prompt, llm_client)
        result.completion = "\n".join(step.raw_text for step in chain.steps)
    except ChainParseError as exc:
        result.completion = exc.raw_text
        result.failure = f"parse: {exc}"
        return result
    except TransportError as exc:
        result.failure = f"transport: {exc}"
        return result
    violations = validate_chain(chain)
    if violations:
        result.failure = "invalid chain: " + "; ".join(
            f"{v.code}({v.var})" for v in violations
        )
        return result

    root = build_tree(chain, image, visual_client, config.tree)
    result.tree_built = True
    paths = dfs_positive_paths(root, triple.answer, config.tree.matcher, chain=chain)
    if config.first_only:
        paths = paths[:1]
    result.paths = paths
    for idx, path in enumerate(paths):
        sample_id = f"{triple.qa_id}#{idx}"

        def namer(buffer, image_index, _sid=sample_id, _res=result):
            ref = f"derived/{_sid.replace('#', '_')}_{image_index}.png"
            _res.derived_images[ref] = buffer
            return ref

        result.samples.append(path_to_com_sample(path, triple, sample_id, image_namer=namer))
    result.dead = [
        dict(record, qa_id=triple.qa_id)
        for record in dead_branches(root, triple.answer, config.tree.matcher, chain=chain)
    ]
    return result


def load_question_image(triple: VqaTriple, images_dir) -> ImageBuffer:
    ref = triple.image_ref.split("#", 1)[0]
    path = os.path.join(images_dir, ref) if images_dir else ref
    return load_png(path, ident=ref)


def generate_corpus(
    triples,
    images_dir,
    llm_client,
    visual_client,
    config: GenerateConfig | None = None,
) -> GenerateOutcome:
    """Run the whole synthesis over a list of questions.

    Questions are independent; with jobs > 1 they run on a thread pool, and
    outputs are still collected in input order.
    """
    config = config or GenerateConfig()

    def run_one(triple: VqaTriple) -> QuestionResult:
        try:
            image = load_question_image(triple, images_dir)
        except ComforgeError as exc:
            failed = QuestionResult(triple=triple)
            failed.failure = f"image: {exc}"
            return failed
        return process_question(triple, image, llm_client, visual_client, config)

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(run_one, triples))
    else:
        results = [run_one(t) for t in triples]

    report = SearchReport()
    for result in results:
        if result.tree_built:
            report.trees_built += 1
            report.positive_paths += len(result.samples)
            if result.samples:
                report.questions_with_path += 1
    return GenerateOutcome(results=results, report=report)
