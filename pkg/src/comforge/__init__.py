"""comforge: synthesize, convert, and score manipulation-chain reasoning
data for visual question answering.

Subpackages
-----------

 dsl          -- grammar, parser, validator for manipulation-annotated steps
 annotators   -- linguistic/visual annotator clients and fixture mocks
 execution    -- crop-zoom, line drawing, counting, exact arithmetic
 tree         -- branching execution and the search for positive paths
 dataset      -- JSONL corpora, multi-turn conversion, statistics
 metric       -- keypoints-aware chain scoring (edit distance + BLEU)
 memory_attn  -- multi-turn KV memory attention with truncation
 pipeline     -- end-to-end corpus generation
 cli          -- the ``comforge`` command
"""

from .dsl import Chain, ManipulationCall, ManipulationName, Step, parse_chain, parse_step, render_step, validate_chain
from .values import Box, BoxList, ImageRef, Num, Points, Text, render_value
from .images import ImageBuffer, denormalize_box, load_png, save_png
from .execution import bicubic_resample, exec_calculate, exec_counting, exec_crop_zoomin, exec_line
from .annotators import (
    AnnotatorConfig,
    HttpLinguisticClient,
    HttpVisualClient,
    LinguisticPrompt,
    MockLinguisticClient,
    MockVisualClient,
    VisualRequest,
    VisualResult,
    build_linguistic_prompt,
    request_solving_steps,
    resolve_visual,
)
from .tree import (
    MatcherConfig,
    PositivePath,
    SearchReport,
    TreeConfig,
    TreeNode,
    answer_match,
    build_tree,
    dfs_positive_paths,
    path_to_com_sample,
)
from .dataset import (
    CoMSample,
    ConvertConfig,
    DatasetStats,
    MultiTurnSample,
    VqaTriple,
    compute_stats,
    convert_corpus,
    convert_to_multiturn,
    load_com_jsonl,
    load_vqa_jsonl,
    write_com_jsonl,
    write_multiturn_jsonl,
)
from .metric import MetricReport, bleu, com_score, discretize, extract_keypoints, levenshtein, manipulation_score
from .memory_attn import AttentionOutput, MemoryState, TurnKV, append_turn, attend
from .pipeline import GenerateConfig, generate_corpus

__version__ = "0.1.0"
