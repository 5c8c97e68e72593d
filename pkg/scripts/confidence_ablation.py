"""Effect of the skeleton confidence filter on injected false skeletons.

Adds ``--blobs`` square skeleton blobs of score ``--blob-score`` per image and
decodes with and without the filter, then sweeps gamma.

    python3 scripts/confidence_ablation.py --count 50
"""

import argparse

import numpy as np
from scipy import ndimage

from pixeltext.decoder import DecodeConfig, PredictionMaps, decode
from pixeltext.evaluation import match, report
from pixeltext.labelgen import generate_labels
from pixeltext.synth import SynthConfig, synth_corpus


def inject(maps, rng, n, score, side=6, gap=4):
    h, w = maps.ts.shape
    busy = ndimage.binary_dilation(maps.tr > 0, iterations=gap)
    ts, tr = maps.ts.copy(), maps.tr.copy()
    placed = 0
    while placed < n:
        r, c = rng.integers(0, h - side), rng.integers(0, w - side)
        if busy[max(r - gap, 0) : r + side + gap, max(c - gap, 0) : c + side + gap].any():
            continue
        ts[r : r + side, c : c + side] = score
        tr[r : r + side, c : c + side] = 1.0
        busy[r : r + side, c : c + side] = True
        placed += 1
    return maps.replace(ts=ts, tr=tr)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--count", type=int, default=50)
    ap.add_argument("--blobs", type=int, default=3)
    ap.add_argument("--blob-score", type=float, default=0.3)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    rows = []
    for img in synth_corpus(SynthConfig(seed=args.seed, count=args.count)):
        a = img.annotation
        maps = PredictionMaps.from_labels(generate_labels(a.instances, a.width, a.height))
        rows.append((a, inject(maps, rng, args.blobs, args.blob_score)))

    def run(cfg):
        return report([match(decode(m, cfg), a.instances) for a, m in rows])

    print(f"{'setting':<22} precision  recall  fmeasure")
    for label, cfg in [("no confidence", DecodeConfig(use_confidence=False))] + [
        (f"gamma={g}", DecodeConfig(gamma=g)) for g in (0.1, 0.29, 0.54, 0.8)
    ]:
        r = run(cfg)
        print(f"{label:<22} {r.precision:9.4f} {r.recall:7.4f} {r.fmeasure:9.4f}")


if __name__ == "__main__":
    main()
