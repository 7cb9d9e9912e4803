"""Open-set classification with per-anchor Weibull tail models.

Five known classes sit on a wide pentagon in the plane; a sixth,
never-trained class sits at the center. The model fits a Weibull over each
training point's margin distances, reduces anchors by set cover, and emits
K+1 probabilities whose last entry is the novel mass. An equal-error-rate
sweep on held-out data picks the rejection threshold, and the saved model
round-trips through its binary container.
"""

import dataclasses
import tempfile
from pathlib import Path

import numpy as np

from scriptdrift import evm
from scriptdrift.seeding import derive_rng

SEED = 31
SIGMA = 1.1
RADIUS = 5.0


def pentagon_centers():
    angles = 2.0 * np.pi * np.arange(5) / 5.0
    return RADIUS * np.column_stack([np.cos(angles), np.sin(angles)])


def draw(rng, center, n):
    return rng.normal(0.0, SIGMA, size=(n, 2)) + center


def main():
    rng = derive_rng(SEED, "open-set-demo")
    centers = pentagon_centers()
    train = {f"class{k}": draw(rng, centers[k], 120) for k in range(5)}
    val_known = np.vstack([draw(rng, centers[k], 40) for k in range(5)])
    val_truth = np.repeat(np.arange(5), 40)
    val_novel = draw(rng, np.zeros(2), 200)

    hyper = evm.EvmHyperparams(
        tail_size=100, cover_threshold=0.5, distance="euclidean", distance_multiplier=0.5
    )
    model = evm.fit(train, hyper, extractor_id="xy")
    kept = sum(c.anchors.shape[0] for c in model.classes)
    total = sum(len(v) for v in train.values())
    print(f"trained on {total} points across {len(model.labels)} classes")
    print(f"set-cover reduction kept {kept}/{total} anchors")

    probs = evm.predict(model, val_known)
    top1 = (np.argmax(probs[:, :-1], axis=1) == val_truth).mean()
    print(f"closed-set top-1 accuracy on held-out knowns: {top1:.3f}")

    k_known = evm.class_scores(model, val_known).max(axis=1)
    k_novel = evm.class_scores(model, val_novel).max(axis=1)
    result = evm.calibrate_threshold(k_known, k_novel)
    print()
    print(f"EER threshold {result.threshold:.4f} "
          f"(fpr {result.fpr:.3f}, fnr {result.fnr:.3f}, eer {result.eer:.3f})")
    flagged = (k_novel < result.threshold).mean()
    accepted = (k_known >= result.threshold).mean()
    print(f"novel points rejected: {flagged:.3f}; known points accepted: {accepted:.3f}")

    calibrated = dataclasses.replace(model, novelty_threshold=result.threshold)
    center_probs = evm.predict(calibrated, np.zeros((1, 2)))
    print()
    print("K+1 vector at the exact center (last entry is the novel mass):")
    print("  " + " ".join(f"{v:.3f}" for v in center_probs[0]))
    ranked = evm.ranked_labels(calibrated, center_probs)[0]
    print("  ranked:", ranked[:3])

    path = Path(tempfile.mkdtemp(prefix="open-set-")) / "model.evm"
    evm.save_model(calibrated, path)
    loaded = evm.load_model(path)
    same = np.array_equal(
        evm.predict(loaded, val_novel), evm.predict(calibrated, val_novel)
    )
    print()
    print(f"saved {path.stat().st_size} bytes -> {path.name}; "
          f"reloaded predictions identical: {same}")


if __name__ == "__main__":
    main()
