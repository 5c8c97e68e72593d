import json
import re

import numpy as np
import pytest

from pixeltext import smap
from pixeltext.cli import loss_gradient_check, main, maps_to_labels
from pixeltext.decoder import PredictionMaps


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--seed", "11", "--count", "4", "--out-dir", str(out)]) == 0
    return out


def test_synth_writes_files(corpus):
    assert len(list(corpus.glob("img_*.centerlines.json"))) == 4
    assert len([p for p in corpus.glob("*.txt")]) == 4


def test_unknown_flag_exits_1(capsys):
    assert main(["decode", "x.smap", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err


def test_no_subcommand_exits_1():
    assert main([]) == 1


def test_missing_file_exits_2(tmp_path):
    assert main(["decode", str(tmp_path / "nope.smap")]) == 2
    assert main(["roundtrip", str(tmp_path / "empty")]) == 2


def test_malformed_inputs_exit_1(tmp_path):
    bad = tmp_path / "bad.smap"
    bad.write_bytes(b"XXXX" + bytes(20))
    assert main(["decode", str(bad)]) == 1
    ann = tmp_path / "bad.txt"
    ann.write_text("0,0,10,0,10\n")
    assert main(["gen-labels", str(ann), str(tmp_path / "o.smap")]) == 1


def test_decode_zero_maps(tmp_path, capsys):
    path = tmp_path / "zero.smap"
    smap.save_maps(path, PredictionMaps.from_stack(np.zeros((7, 40, 50), np.float32)))
    assert main(["decode", str(path)]) == 0
    out = capsys.readouterr()
    assert out.out == ""
    assert "0 detections" in out.err


def test_gen_labels_decode_eval_pipeline(corpus, tmp_path, capsys):
    ann = corpus / "img_0000.txt"
    maps = tmp_path / "img_0000.smap"
    dets = tmp_path / "img_0000.dets.txt"
    assert main(["gen-labels", str(ann), str(maps), "--pgm-dir", str(tmp_path / "pgm")]) == 0
    assert len(list((tmp_path / "pgm").glob("*.pgm"))) == 6
    loaded = smap.load_maps(maps)
    np.testing.assert_array_equal(loaded.tf, loaded.ts)
    assert main(["decode", str(maps), "-o", str(dets)]) == 0
    capsys.readouterr()
    report = tmp_path / "r.json"
    assert main(["eval", str(dets), str(ann), "--json", str(report)]) == 0
    assert "fmeasure=1.0000" in capsys.readouterr().out
    assert json.loads(report.read_text())["fp"] == 0


def test_eval_dets_equal_gts(corpus, tmp_path, capsys):
    from pixeltext.annotations import format_detections, read_annotation

    for ann_path in corpus.glob("*.txt"):
        ann = read_annotation(ann_path)
        (tmp_path / f"{ann_path.stem}.dets.txt").write_text(format_detections([(1.0, p) for p in ann.instances]))
    assert main(["eval", str(tmp_path), str(corpus)]) == 0
    assert "precision=1.0000 recall=1.0000 fmeasure=1.0000" in capsys.readouterr().out


def test_roundtrip_on_synth(corpus, capsys):
    assert main(["roundtrip", str(corpus)]) == 0
    out = capsys.readouterr().out
    mean = float(re.search(r"mean_iou=([0-9.]+)", out).group(1))
    assert mean >= 0.90
    assert out.count("img_") == 4


def test_roundtrip_workers_match_serial(corpus, capsys, monkeypatch):
    main(["roundtrip", str(corpus)])
    serial = capsys.readouterr().out
    monkeypatch.setenv("PIXELTEXT_WORKERS", "2")
    main(["roundtrip", str(corpus)])
    assert capsys.readouterr().out == serial


def _noisy_pair(tmp_path, corpus):
    gt = tmp_path / "gt.smap"
    main(["gen-labels", str(corpus / "img_0001.txt"), str(gt)])
    maps = smap.load_maps(gt)
    rng = np.random.default_rng(0)
    noisy = np.clip(maps.stack() + rng.normal(0, 0.2, maps.stack().shape), 0.01, 0.99).astype(np.float32)
    pred = tmp_path / "pred.smap"
    smap.save_maps(pred, PredictionMaps.from_stack(noisy))
    return pred, gt


def test_loss_check(corpus, tmp_path, capsys):
    pred, gt = _noisy_pair(tmp_path, corpus)
    capsys.readouterr()
    assert main(["loss-check", str(pred), str(gt), "--probes", "60"]) == 0
    out = capsys.readouterr().out
    assert "identity=ok" in out
    assert re.search(r"gradient max_rel_err=\S+ over \d+ probes ok", out)
    parts = dict(re.findall(r"(l_ts|l_dpr|l_tf|l_tr|total)=([0-9.eE+-]+)", out))
    parts = {k: float(v) for k, v in parts.items()}
    assert parts["total"] == pytest.approx(3.0 * parts["l_ts"] + parts["l_dpr"] + parts["l_tf"] + parts["l_tr"], rel=1e-8)


def test_loss_check_shape_mismatch(tmp_path):
    a, b = tmp_path / "a.smap", tmp_path / "b.smap"
    smap.save_maps(a, PredictionMaps.from_stack(np.zeros((7, 4, 4), np.float32)))
    smap.save_maps(b, PredictionMaps.from_stack(np.zeros((7, 5, 4), np.float32)))
    assert main(["loss-check", str(a), str(b)]) == 1


def test_maps_to_labels_ids():
    stack = np.zeros((7, 10, 10), np.float32)
    stack[2, 1:3, 1:9] = 1
    stack[2, 6:9, 1:9] = 1
    labels = maps_to_labels(PredictionMaps.from_stack(stack))
    assert set(np.unique(labels.instance_ids)) == {0, 1, 2}


def test_gradient_check_helper_small(corpus, tmp_path):
    pred, gt = _noisy_pair(tmp_path, corpus)
    err, checked = loss_gradient_check(smap.load_maps(pred), maps_to_labels(smap.load_maps(gt)), n_probe=30)
    assert err < 1e-4 and checked > 0
