"""Regenerate the 10-question mock corpus.

Run from the repository root:

    python3 fixtures/mock10/build_fixture.py

Writes images/, vqa.jsonl, and the annotator fixture tables. The fixture is
hand-designed: questions q01-q04, q07, q08 reach their golden answers
(success rate 6/10); q05 grounds nothing, q06 reads the wrong text, q09
uses a manipulation nothing can execute, q10 miscounts.
expected_stats.json next to this script is hand-counted from the chain
designs below, not generated.
"""

import json
import os

import numpy as np

from comforge.annotators import (
    MockVisualClient,
    VisualRequest,
    canonical_request,
    completion_request_key,
    default_prompt,
    dump_fixture,
    request_key,
)
from comforge.images import ImageBuffer, save_png

HERE = os.path.dirname(os.path.abspath(__file__))

QUESTIONS = [
    ("q01", "img01.png", "what is written on the pillar?", "KINGSGATE"),
    ("q02", "img02.png", "how many wheels are visible on the truck?", "3"),
    ("q03", "img03.png", "what brand is written on the sign?", "ACME"),
    ("q04", "img04.png", "what is the total of the two numbers on the board?", "42"),
    ("q05", "img05.png", "what does the plaque say?", "WELCOME"),
    ("q06", "img06.png", "what does the road sign say?", "STOP"),
    ("q07", "img07.png", "what is the code on the sticker?", "A-12"),
    ("q08", "img08.png", "what is on the license plate?", "7-HJK-22"),
    ("q09", "img09.png", "what time does the wall clock show?", "3:15"),
    ("q10", "img10.png", "how many windows are on the two identical walls in total?", "50"),
]

COMPLETIONS = {
    "q01": (
        "Using GROUNDING(the pillar near the desk)->bbx_1 to locate the pillar.\n"
        "Using OCR(bbx_1)->txt_1 to read the text on it.\n"
        "Answer: txt_1"
    ),
    "q02": (
        "Using GROUNDING(the visible wheels)->bbx_1 to find all wheels.\n"
        "Count them with COUNTING(bbx_1)->num_1"
    ),
    "q03": (
        "Using GROUNDING(the sign)->bbx_1 to locate the sign.\n"
        "Zoom in with CROP_AND_ZOOMIN(bbx_1, 2)->img_1\n"
        "Using OCR(img_1)->txt_1 to read the brand.\n"
        "Answer: txt_1"
    ),
    "q04": (
        "Using GROUNDING(the board)->bbx_1 to find the board.\n"
        "Using OCR(bbx_1)->txt_1 to read the numbers.\n"
        "The total is CALCULATE(txt_1)->num_1"
    ),
    "q05": (
        "Using GROUNDING(the plaque)->bbx_1 to find the plaque.\n"
        "Using OCR(bbx_1)->txt_1 to read it.\n"
        "Answer: txt_1"
    ),
    "q06": (
        "Using GROUNDING(the road sign)->bbx_1 to find the sign.\n"
        "Using OCR(bbx_1)->txt_1 to read it.\n"
        "Answer: txt_1"
    ),
    "q07": (
        "Using GROUNDING(the sticker on the box)->bbx_1 to find stickers.\n"
        "Using OCR(bbx_1)->txt_1 to read each sticker.\n"
        "Answer: txt_1"
    ),
    "q08": (
        "Using GROUNDING(the car)->bbx_1 to locate the car.\n"
        "Zoom with CROP_AND_ZOOMIN(bbx_1, 2)->img_1\n"
        "Using GROUNDING(the license plate)->bbx_2 to find the plate.\n"
        "Zoom again with CROP_AND_ZOOMIN(bbx_2, 2)->img_2\n"
        "Using OCR(img_2)->txt_1 to read the plate.\n"
        "The plate reads txt_1"
    ),
    "q09": (
        "Using GROUNDING(the wall clock)->bbx_1 to find the clock.\n"
        "Using READ_TIME(bbx_1)->txt_1 to read the time.\n"
        "Answer: txt_1"
    ),
    "q10": (
        "Using GROUNDING(the windows on the left wall)->bbx_1 to find them.\n"
        "Count them with COUNTING(bbx_1)->num_1\n"
        "The total is CALCULATE(num_1 * 2)->num_2"
    ),
}


def make_image(index: int) -> ImageBuffer:
    """A flat background with two rectangles; content is arbitrary, only
    sizes and identifiers matter to the pipeline."""
    px = np.full((90, 120, 3), 30 + 12 * index, dtype=np.uint8)
    px[10 + index : 40 + index, 15 : 60, 0] = 220
    px[50:80, 70 : 110 - index, 2] = 200
    return ImageBuffer(px, f"images/img{index:02d}.png")


def ident(name: str) -> str:
    return f"images/{name}"


def handle(name: str) -> ImageBuffer:
    # only the identifier feeds the request hash
    return ImageBuffer(np.zeros((1, 1, 3), dtype=np.uint8), name)


def ground_row(table, image_ident, phrase, boxes):
    req = VisualRequest("ground", handle(image_ident), phrase=phrase)
    table[request_key(canonical_request(req))] = {
        "boxes": [dict(zip(("x0", "y0", "x1", "y1", "score"), b)) for b in boxes]
    }


def ocr_row(table, image_ident, region, texts):
    req_region = None
    if region is not None:
        from comforge.values import Box

        req_region = Box(*region)
    req = VisualRequest("ocr", handle(image_ident), region=req_region)
    table[request_key(canonical_request(req))] = {
        "items": [{"text": t, "box": list(region) if region else [0, 0, 999, 999]} for t in texts]
    }


def main():
    os.makedirs(os.path.join(HERE, "images"), exist_ok=True)
    os.makedirs(os.path.join(HERE, "annotators"), exist_ok=True)

    for i in range(1, 11):
        save_png(make_image(i), os.path.join(HERE, "images", f"img{i:02d}.png"))

    with open(os.path.join(HERE, "vqa.jsonl"), "w", encoding="utf-8") as out:
        for qa_id, image, question, answer in QUESTIONS:
            out.write(json.dumps({
                "id": qa_id,
                "image": f"images/{image}",
                "question": question,
                "answer": answer,
            }, sort_keys=True) + "\n")

    llm = {}
    for qa_id, _, question, _ in QUESTIONS:
        key = completion_request_key(default_prompt(question).serialize())
        llm[key] = {"text": COMPLETIONS[qa_id]}
    dump_fixture(llm, os.path.join(HERE, "annotators", "llm.jsonl"))

    ground = {}
    # q01: two pillars; only the first reads the golden text
    ground_row(ground, ident("img01.png"), "the pillar near the desk",
               [(120, 80, 310, 900, 0.92), (620, 110, 780, 860, 0.88)])
    # q02: four wheel boxes, the first two overlap at IoU 21750/23250 ~ 0.935
    ground_row(ground, ident("img02.png"), "the visible wheels",
               [(100, 600, 250, 750, 0.90), (105, 600, 255, 750, 0.85),
                (400, 600, 550, 750, 0.90), (700, 600, 850, 750, 0.90)])
    ground_row(ground, ident("img03.png"), "the sign", [(100, 200, 500, 700, 0.90)])
    ground_row(ground, ident("img04.png"), "the board", [(150, 100, 850, 500, 0.95)])
    ground_row(ground, ident("img05.png"), "the plaque", [])  # target absent
    ground_row(ground, ident("img06.png"), "the road sign", [(300, 150, 700, 550, 0.90)])
    ground_row(ground, ident("img07.png"), "the sticker on the box",
               [(100, 100, 300, 300, 0.90), (600, 600, 800, 800, 0.87)])
    ground_row(ground, ident("img08.png"), "the car", [(200, 100, 700, 800, 0.90)])
    ground_row(ground, ident("img08.png") + "|crop(200,100,700,800)x2",
               "the license plate", [(300, 500, 600, 650, 0.90)])
    ground_row(ground, ident("img09.png"), "the wall clock", [(350, 200, 650, 500, 0.90)])
    ground_row(ground, ident("img10.png"), "the windows on the left wall",
               [(0, 0, 100, 100, 0.9), (150, 0, 250, 100, 0.9),
                (300, 0, 400, 100, 0.9), (450, 0, 550, 100, 0.9)])
    dump_fixture(ground, os.path.join(HERE, "annotators", "ground.jsonl"))

    ocr = {}
    ocr_row(ocr, ident("img01.png"), (120, 80, 310, 900), ["KINGSGATE"])
    ocr_row(ocr, ident("img01.png"), (620, 110, 780, 860), ["EXIT"])
    ocr_row(ocr, ident("img03.png") + "|crop(100,200,500,700)x2", None, ["ACME"])
    ocr_row(ocr, ident("img04.png"), (150, 100, 850, 500), ["12 + 30"])
    ocr_row(ocr, ident("img06.png"), (300, 150, 700, 550), ["SLOW"])
    ocr_row(ocr, ident("img07.png"), (100, 100, 300, 300), ["B-77"])
    ocr_row(ocr, ident("img07.png"), (600, 600, 800, 800), ["A-12"])
    ocr_row(ocr, ident("img08.png") + "|crop(200,100,700,800)x2|crop(300,500,600,650)x2",
            None, ["7-HJK-22"])
    dump_fixture(ocr, os.path.join(HERE, "annotators", "ocr.jsonl"))
    print(f"fixture written under {HERE}")


if __name__ == "__main__":
    main()
