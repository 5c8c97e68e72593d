"""End-to-end acceptance checks, one test per criterion.

Every test records a PASS/FAIL line, and the lines are printed together in
the pytest terminal summary.
"""

from types import SimpleNamespace

import numpy as np
import pytest
from scipy import ndimage

import oracles as O
from conftest import rotated_rect
from pixeltext import smap
from pixeltext.annotations import format_detections
from pixeltext.cli import main, maps_to_labels
from pixeltext.decoder import CHANNELS, DecodeConfig, PredictionMaps, decode
from pixeltext.evaluation import f_measure, match, report
from pixeltext.labelgen import generate_labels
from pixeltext.losses import (
    GRAD_CHANNELS,
    gradients,
    loss_dpr,
    loss_tf,
    loss_tr,
    loss_ts,
    total_loss,
    ts_instance_contributions,
)
from pixeltext.synth import SynthConfig, synth_corpus

DEFAULTS = DecodeConfig(gamma=0.54, t_tr=0.2, t_dpr=0.1)
NO_CONF = DecodeConfig(gamma=0.54, t_tr=0.2, t_dpr=0.1, use_confidence=False)
DPR = ("dpr_up", "dpr_down", "dpr_left", "dpr_right")


@pytest.fixture(scope="session")
def corpus():
    """100 seed-fixed 512x512 images with 1-4 instances, their labels and oracle maps."""
    images = synth_corpus(SynthConfig(seed=2024, count=100, size=(512, 512), instances_per_image=(1, 4)))
    rows = []
    for img in images:
        a = img.annotation
        labels = generate_labels(a.instances, a.width, a.height)
        rows.append(SimpleNamespace(ann=a, labels=labels, maps=PredictionMaps.from_labels(labels)))
    return rows


@pytest.fixture(scope="session")
def oracle_decodes(corpus):
    return [decode(r.maps, DEFAULTS) for r in corpus]


def _evaluate(corpus, all_dets):
    return report([match(d, r.ann.instances) for r, d in zip(corpus, all_dets)])


# 1 -----------------------------------------------------------------------------

def test_criterion_1_round_trip(corpus, oracle_decodes, acceptance):
    count_ok = sum(len(d) == len(r.ann.instances) for r, d in zip(corpus, oracle_decodes))
    ious = [v for r, d in zip(corpus, oracle_decodes) for v in match(d, r.ann.instances).ious]
    frac = float(np.mean(np.array(ious) >= 0.90))
    ok = count_ok >= 98 and frac >= 0.97
    acceptance(1, ok, f"count match on {count_ok}/100 images (need 98), IoU>=0.90 on {frac:.4f} of {len(ious)} instances (need 0.97)")
    assert ok


# 2 -----------------------------------------------------------------------------

def _inject_blobs(maps, rng, n=3, side=6, gap=4):
    """Add ``n`` square TS blobs (score 0.3, TR 1) well away from text and each other."""
    h, w = maps.ts.shape
    busy = ndimage.binary_dilation(maps.tr > 0, iterations=gap)
    ts, tr = maps.ts.copy(), maps.tr.copy()
    placed = 0
    while placed < n:
        r, c = rng.integers(0, h - side), rng.integers(0, w - side)
        if busy[max(r - gap, 0) : r + side + gap, max(c - gap, 0) : c + side + gap].any():
            continue
        ts[r : r + side, c : c + side] = 0.3
        tr[r : r + side, c : c + side] = 1.0
        busy[r : r + side, c : c + side] = True
        placed += 1
    return maps.replace(ts=ts, tr=tr)


def test_criterion_2_confidence_scoring(corpus, acceptance):
    rng = np.random.default_rng(2)
    spiked = [_inject_blobs(r.maps, rng) for r in corpus]
    off = _evaluate(corpus, [decode(m, NO_CONF) for m in spiked])
    on = _evaluate(corpus, [decode(m, DEFAULTS) for m in spiked])
    ok = off.precision < 0.8 and on.precision >= 0.99 and abs(on.recall - off.recall) < 0.01
    acceptance(
        2,
        ok,
        f"no-confidence P={off.precision:.4f} (need <0.8), scored P={on.precision:.4f} (need >=0.99), "
        f"recall {off.recall:.4f} -> {on.recall:.4f}",
    )
    assert ok


# 3 -----------------------------------------------------------------------------

def test_criterion_3_noise(corpus, acceptance):
    rng = np.random.default_rng(3)
    dets = []
    for r in corpus:
        stack = r.maps.stack().astype(np.float64)
        noisy = np.clip(stack + rng.normal(0.0, 0.1, stack.shape), 0.0, 1.0)
        dets.append(decode(PredictionMaps.from_stack(noisy.astype(np.float32)), DEFAULTS))
    rep = _evaluate(corpus, dets)
    ok = rep.fmeasure >= 0.95
    acceptance(3, ok, f"sigma=0.1 F={rep.fmeasure:.4f} (need >=0.95), P={rep.precision:.4f} R={rep.recall:.4f}")
    assert ok


# 4 -----------------------------------------------------------------------------

def test_criterion_4_redundancy(acceptance):
    poly = rotated_rect(128, 128, 200, 40, 45)
    labels = generate_labels([poly], 256, 256)
    text = (labels.tr > 0) & ~(labels.ts > 0)
    mult = sum((m > 0).astype(int) for m in labels.dprs)
    exactly_two = bool(np.all(mult[text] == 2))
    maps = PredictionMaps.from_labels(labels)
    used = [n for n in DPR if getattr(labels, n).any()]
    ious = {}
    for name in used:
        dets = decode(maps.replace(**{name: np.zeros_like(maps.ts)}), DEFAULTS)
        m = match(dets, [poly])
        ious[name] = m.ious[0] if m.ious else 0.0
    ok = exactly_two and len(used) == 4 and min(ious.values()) >= 0.90
    detail = " ".join(f"-{k[4:]}:{v:.3f}" for k, v in ious.items())
    acceptance(4, ok, f"every non-TS pixel in two maps: {exactly_two}; IoU with one map dropped {detail} (need >=0.90)")
    assert ok


# 5 -----------------------------------------------------------------------------

def _random_case(seed, h=16, w=16, margin=0.01):
    rng = np.random.default_rng(seed)
    ids = np.zeros((h, w), np.int32)
    ids[1 : h // 2 - 1, 1 : w - 1] = 1
    ids[h // 2 + 1 : h - 1, 2 : w - 2] = 2
    tr = (ids > 0).astype(np.float64)
    ts = ((rng.random((h, w)) < 0.3) & (ids > 0)).astype(np.float64)
    for k in (1, 2):
        r, c = np.argwhere(ids == k)[rng.integers((ids == k).sum())]
        ts[r, c] = 1.0
    rest = (tr > 0) & (ts == 0)
    dprs = {n: (rest & (rng.random((h, w)) < 0.5)).astype(np.float64) for n in DPR}
    labels = SimpleNamespace(ts=ts, tr=tr, instance_ids=ids, **dprs)
    preds = SimpleNamespace(**{n: rng.uniform(margin, 1 - margin, (h, w)) for n in GRAD_CHANNELS})
    return preds, labels


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def test_criterion_5_losses(acceptance):
    worst_oracle = 0.0
    for seed in range(20):
        p, g = _random_case(100 + seed)
        L = lambda a: a.tolist()  # noqa: E731
        pairs = [
            (loss_ts(p.ts, g.ts, g.instance_ids), O.s_loss_ts(L(p.ts), L(g.ts), L(g.instance_ids))),
            (loss_dpr([getattr(p, n) for n in DPR], [getattr(g, n) for n in DPR]),
             O.s_loss_dpr([L(getattr(p, n)) for n in DPR], [L(getattr(g, n)) for n in DPR])),
            (loss_tf(p.tf, g.ts), O.s_loss_mined(L(p.tf), L(g.ts))),
            (loss_tr(p.tr, g.tr), O.s_loss_mined(L(p.tr), L(g.tr))),
        ]
        worst_oracle = max(worst_oracle, *(_rel(a, b) for a, b in pairs))

    worst_grad = 0.0
    h = 1e-5
    for seed in range(3):
        p, g = _random_case(200 + seed, 8, 8, margin=1e-3 + 1e-4)
        grads = gradients(p, g)
        for name in GRAD_CHANNELS:
            arr = getattr(p, name)
            for r in range(arr.shape[0]):
                for c in range(arr.shape[1]):
                    up = {n: np.array(getattr(p, n)) for n in GRAD_CHANNELS}
                    dn = {n: v.copy() for n, v in up.items()}
                    up[name][r, c] += h
                    dn[name][r, c] -= h
                    num = (total_loss(SimpleNamespace(**up), g).total - total_loss(SimpleNamespace(**dn), g).total) / (2 * h)
                    ana = grads.channel(name)[r, c]
                    worst_grad = max(worst_grad, abs(num - ana) / max(abs(num), abs(ana), 1e-8))

    ids = np.zeros((30, 50), np.int32)
    ids[0:10, 0:10] = 1
    ids[10:30, 10:30] = 2
    gt = (ids > 0).astype(float)
    contrib = ts_instance_contributions(np.where(gt > 0, 0.8, 0.0), gt, ids)
    equal_gap = abs(contrib[1] - contrib[2])

    ok = worst_oracle <= 1e-10 and worst_grad < 1e-4 and equal_gap <= 1e-12
    acceptance(
        5,
        ok,
        f"oracle max rel err {worst_oracle:.2e} (need <=1e-10), gradient max rel err {worst_grad:.2e} (need <1e-4), "
        f"equal-treatment gap {equal_gap:.1e} (need <=1e-12)",
    )
    assert ok


# 6 -----------------------------------------------------------------------------

def test_criterion_6_total_identity(tmp_path, capsys, acceptance):
    worst = 0.0
    for seed in range(20):
        p, g = _random_case(300 + seed)
        b = total_loss(p, g)
        worst = max(worst, _rel(b.total, 3.0 * b.l_ts + b.l_dpr + b.l_tf + b.l_tr))
        assert b.lam == 3.0

    # the CLI performs the same check on every invocation
    images = synth_corpus(SynthConfig(seed=6, count=3, size=(96, 96), height_px=(10, 16)))
    cli_ok = True
    rng = np.random.default_rng(6)
    for img in images:
        a = img.annotation
        maps = PredictionMaps.from_labels(generate_labels(a.instances, a.width, a.height))
        gt, pred = tmp_path / f"{a.image_id}_gt.smap", tmp_path / f"{a.image_id}_pred.smap"
        smap.save_maps(gt, maps)
        noisy = np.clip(maps.stack() + rng.normal(0, 0.2, maps.stack().shape), 0.01, 0.99).astype(np.float32)
        smap.save_maps(pred, PredictionMaps.from_stack(noisy))
        code = main(["loss-check", str(pred), str(gt), "--probes", "40"])
        out = capsys.readouterr().out
        cli_ok &= code == 0 and "identity=ok" in out and "lambda=3.0" in out
        b = total_loss(smap.load_maps(pred), maps_to_labels(smap.load_maps(gt)))
        worst = max(worst, _rel(b.total, 3.0 * b.l_ts + b.l_dpr + b.l_tf + b.l_tr))
    ok = worst <= 1e-12 and cli_ok
    acceptance(6, ok, f"max rel identity error {worst:.1e} (need <=1e-12), loss-check identity ok on all runs: {cli_ok}")
    assert ok


# 7 -----------------------------------------------------------------------------

def test_criterion_7_f_measure(acceptance):
    f1 = report([SimpleNamespace(tp=881, fp=119, fn=201)]).fmeasure  # P=0.881, R=0.814
    f2 = report([SimpleNamespace(tp=880, fp=120, fn=159)]).fmeasure  # P=0.880, R~0.847
    g1, g2 = f_measure(0.881, 0.814), f_measure(0.880, 0.847)
    ok = abs(g1 - 0.846) <= 5e-4 and abs(g2 - 0.863) <= 5e-4 and abs(f1 - 0.846) <= 5e-4 and abs(f2 - 0.863) <= 5e-4
    acceptance(7, ok, f"F(0.881,0.814)={g1:.4f} F(0.880,0.847)={g2:.4f} (need 0.846, 0.863 +-0.0005)")
    assert ok


# 8 -----------------------------------------------------------------------------

def _graded(maps, ids, rng):
    """Scale each instance's skeleton scores by its own factor so gamma has something to cut."""
    factors = rng.uniform(0.2, 1.0, int(ids.max()) + 1)
    return maps.replace(ts=(maps.ts * factors[ids]).astype(np.float32))


def test_criterion_8_determinism_and_gamma(corpus, oracle_decodes, acceptance):
    rng = np.random.default_rng(8)
    graded = [_graded(r.maps, r.labels.instance_ids, rng) for r in corpus]
    runs = [[format_detections(d) for d in oracle_decodes]]
    for _ in range(2):
        runs.append([format_detections(decode(r.maps, DEFAULTS)) for r in corpus])
    identical = runs[0] == runs[1] == runs[2]

    counts = {g: [len(decode(m, DecodeConfig(gamma=g))) for m in graded] for g in (0.29, 0.54, 0.8)}
    monotone = all(a >= b >= c for a, b, c in zip(counts[0.29], counts[0.54], counts[0.8]))
    totals = {g: sum(v) for g, v in counts.items()}
    ok = identical and monotone and totals[0.29] > totals[0.8]
    acceptance(
        8,
        ok,
        f"3 runs byte-identical: {identical}; counts non-increasing per image: {monotone}; "
        f"totals gamma 0.29/0.54/0.8 = {totals[0.29]}/{totals[0.54]}/{totals[0.8]}",
    )
    assert ok


# 9 -----------------------------------------------------------------------------

def test_criterion_9_serialization(acceptance):
    rng = np.random.default_rng(9)
    exact = 0
    for _ in range(1000):
        c = int(rng.integers(1, len(CHANNELS) + 1))
        h, w = (int(v) for v in rng.integers(1, 33, 2))
        stack = rng.random((c, h, w)).astype(np.float32)
        if rng.random() < 0.2:
            stack[rng.random(stack.shape) < 0.3] = rng.choice([0.0, 1.0])
        buf = smap.encode(stack)
        back = smap.decode_stack(buf)
        exact += back.tobytes() == stack.astype("<f4").tobytes() and smap.encode(back) == buf

    good = smap.encode(np.full((2, 4, 4), 0.5, np.float32))

    def patched(offset, data):
        b = bytearray(good)
        b[offset : offset + len(data)] = data
        return bytes(b)

    cases = {
        "bad magic": (b"SMAQ" + good[4:], smap.BadMagicError),
        "version": (patched(4, b"\x07"), smap.UnsupportedVersionError),
        "truncated payload": (good[:-1], smap.TruncatedPayloadError),
        "truncated header": (good[:10], smap.TruncatedPayloadError),
        "trailing bytes": (good + b"\x00\x00", smap.TrailingDataError),
        "zero channels": (patched(13, b"\x00"), smap.BadHeaderError),
        "nan": (patched(14, np.float32(np.nan).tobytes()), smap.NonFiniteValueError),
        "inf": (patched(18, np.float32(np.inf).tobytes()), smap.NonFiniteValueError),
        "out of range": (patched(22, np.float32(1.25).tobytes()), smap.ValueRangeError),
    }
    wrong = []
    for name, (buf, exc) in cases.items():
        try:
            smap.decode_stack(buf)
            wrong.append(f"{name}: accepted")
        except smap.MapFormatError as err:
            if type(err) is not exc:
                wrong.append(f"{name}: {type(err).__name__}")
    ok = exact == 1000 and not wrong
    acceptance(9, ok, f"{exact}/1000 bit-exact round trips; malformed cases with wrong class: {wrong or 'none'}")
    assert ok

