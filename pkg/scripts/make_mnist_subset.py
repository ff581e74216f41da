"""Write a small MNIST subset as IDX files for offline runs.

Uses the 5000-digit sample bundled with ``mlxtend`` (500 per class) and
splits it per class into train/test IDX files that ``otapcm.data.load_mnist``
reads like the original release. Skip this if the full MNIST IDX files are
available; point ``--dataset-root`` at them instead.

    python scripts/make_mnist_subset.py data/mnist
"""
import argparse
from pathlib import Path

import numpy as np

from otapcm.data import MNIST_FILES, write_idx


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    ap.add_argument("--test-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    from mlxtend.data import mnist_data

    x, y = mnist_data()
    x = x.reshape(-1, 28, 28).astype(np.uint8)
    rng = np.random.default_rng(args.seed)
    train_idx, test_idx = [], []
    for k in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == k))
        test_idx.append(idx[:args.test_per_class])
        train_idx.append(idx[args.test_per_class:])
    train_idx = rng.permutation(np.concatenate(train_idx))
    test_idx = rng.permutation(np.concatenate(test_idx))

    args.out.mkdir(parents=True, exist_ok=True)
    for split, idx in (("train", train_idx), ("test", test_idx)):
        img_name, lbl_name = MNIST_FILES[split]
        write_idx(args.out / (img_name + ".gz"), x[idx])
        write_idx(args.out / (lbl_name + ".gz"), y[idx].astype(np.uint8))
        print(f"{split}: {len(idx)} samples -> {args.out}")


if __name__ == "__main__":
    main()
