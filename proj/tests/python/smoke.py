"""End-to-end smoke of the python module against a throwaway workspace."""

import json
import math
import os
import shutil
import sys
import tempfile

import numpy as np

import textpainter as tp

CORPUS_CFG = {
    "corpus.poster_w": 200,
    "corpus.poster_h": 160,
    "corpus.max_texts": 3,
    "corpus.min_h": 30,
    "corpus.max_h": 48,
    "corpus.min_w": 50,
    "corpus.max_w": 120,
}

TRAIN_CFG = {
    "train.epochs": 1,
    "train.batch_size": 4,
    "train.seed": 3,
    "train.checkpoint_interval": 0,
    "model.base_channels": 16,
    "model.style_dim": 32,
    "model.text_dim": 16,
    "model.d_k": 8,
    "model.enc_width": 8,
    "model.enc_depths": "1,1,1,1",
    "model.disc_width": 8,
}


def check_corpus(work):
    a = tp.synth_corpus(seed=5, n=3, config=CORPUS_CFG)
    b = tp.synth_corpus(seed=5, n=3, config=CORPUS_CFG)
    assert len(a) == 3
    for sa, sb in zip(a, b):
        assert sa["source_id"] == sb["source_id"]
        assert np.array_equal(sa["composed"], sb["composed"])
        assert sa["composed"].dtype == np.uint8
        assert sa["composed"].shape == (160, 200, 3)
    assert any(s["elements"] for s in a)
    el = next(e for s in a for e in s["elements"])
    assert isinstance(el["text"], str) and el["text"]
    assert len(el["bbox"]) == 4 and len(el["color"]) == 3

    out = os.path.join(work, "corp")
    info = tp.make_corpus(out, seed=5, n=4, config=CORPUS_CFG)
    assert info["posters"] == 4
    back = tp.read_corpus(out)
    assert len(back) == 4
    assert np.array_equal(back[0]["composed"], tp.synth_corpus(5, 4, CORPUS_CFG)[0]["composed"])
    return out, back


def check_train_generate(work, corpus_dir, samples):
    cfg = dict(TRAIN_CFG)
    cfg["train.corpus"] = corpus_dir
    cfg["train.out"] = os.path.join(work, "run")
    result = tp.train(cfg)
    assert os.path.exists(result["checkpoint"])
    assert result["epochs"] == 1
    assert math.isfinite(result["rec"]) and result["rec"] > 0
    with open(os.path.join(work, "run", "train_log.jsonl")) as f:
        first = json.loads(f.readline())
    assert first["step"] == 0 and first["lambda1"] == 1.0

    bg = samples[0]["background"]
    elements = [
        {"text": "SALE", "bbox": (20, 30, 90, 36)},
        {"text": "GO", "bbox": (40, 90, 60, 40)},
    ]
    g1 = tp.generate(result["checkpoint"], bg, elements)
    g2 = tp.generate(result["checkpoint"], bg, elements)
    assert g1["ids"] == ["sample:0", "sample:1"]
    assert g1["crops"][0].shape == (36, 90, 3)
    for c1, c2 in zip(g1["crops"], g2["crops"]):
        assert np.array_equal(c1, c2)
    assert np.array_equal(g1["composite"], g2["composite"])

    empty = tp.generate(result["checkpoint"], bg, [])
    assert np.array_equal(empty["composite"], bg)

    comp = g1["composite"]
    outside = np.ones(bg.shape[:2], dtype=bool)
    for _, (x, y, w, h) in [(e["text"], e["bbox"]) for e in elements]:
        outside[y : y + h, x : x + w] = False
    assert np.array_equal(comp[outside], bg[outside])
    assert not np.array_equal(comp, bg)

    try:
        tp.generate(result["checkpoint"], bg, [{"text": "X", "bbox": (190, 150, 40, 30)}])
    except tp.TextPainterError as e:
        assert "annotation_bad" in str(e)
    else:
        raise AssertionError("out-of-bounds bbox accepted")
    return result["checkpoint"]


def check_metrics(samples):
    imgs = [s["composed"] for s in samples[:3]]
    rep = tp.evaluate(imgs, imgs)
    assert rep["n_pairs"] == 3
    assert math.isinf(rep["psnr"])
    assert abs(rep["ssim"] - 1.0) < 1e-9
    assert rep["fid"] <= 1e-6

    other = [samples[3]["composed"]] + imgs[1:]
    rep2 = tp.evaluate(other, imgs)
    assert math.isfinite(rep2["psnr"]) and rep2["ssim"] < 1.0

    a, b = imgs[0], imgs[1]
    assert math.isinf(tp.psnr(a, a))
    assert tp.psnr(a, b) == tp.psnr(b, a)
    assert abs(tp.ssim(a, a) - 1.0) < 1e-12


def check_baselines(samples):
    s = samples[0]
    el = s["elements"][0]
    rgb = tp.contrast_color(s["background"], el["bbox"])
    themes = tp.theme_colors(s["background"], 5)
    assert rgb in themes  # the pick is one of the global theme colors
    assert tp.contrast_color(s["background"], el["bbox"]) == rgb
    assert 1 <= len(themes) <= 5
    assert len(tp.palette()) == 26
    solid = np.full((20, 20, 3), (10, 200, 30), dtype=np.uint8)
    assert tp.theme_colors(solid, 3) == [(10, 200, 30)]


def check_text_and_glyph():
    g = tp.render_glyph("AB", 32, 64)
    assert g.shape == (32, 64)
    assert g.min() >= 0.0 and g.max() <= 1.0
    assert g.sum() > 0
    assert np.array_equal(g, tp.render_glyph("AB", 32, 64))

    enc = tp.encode_text("SALE 50%", dim=16, seed=2)
    assert enc["tokens"].shape == (enc["n_tokens"], 16)
    assert enc["sentence"].shape == (16,)
    assert 0 < enc["n_tokens"] <= 16
    again = tp.encode_text("SALE 50%", dim=16, seed=2)
    assert np.array_equal(enc["tokens"], again["tokens"])
    assert not np.array_equal(
        enc["sentence"], tp.encode_text("OTHER", dim=16, seed=2)["sentence"]
    )


def main():
    work = tempfile.mkdtemp(prefix="tp_py_smoke_")
    try:
        corpus_dir, samples = check_corpus(work)
        check_train_generate(work, corpus_dir, samples)
        check_metrics(samples)
        check_baselines(samples)
        check_text_and_glyph()
    finally:
        shutil.rmtree(work, ignore_errors=True)
    print("python smoke: all checks passed")


if __name__ == "__main__":
    sys.exit(main())
