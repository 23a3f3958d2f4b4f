#!/usr/bin/env python3
"""Create the offline 28x28 digit dataset in MNIST IDX format.

Writes train-images-idx3-ubyte / train-labels-idx1-ubyte and the t10k pair
into the target directory (default: $TIGHTBOX_DATA_DIR or ./data).  If you
have the real MNIST IDX files, drop them into that directory instead; every
consumer only cares about the IDX layout.
"""

import argparse

from tightbox.datasets import data_dir
from tightbox.synthdata import synthesize_digit_idx


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=None, help="target directory (default: $TIGHTBOX_DATA_DIR or ./data)")
    parser.add_argument("--train-n", type=int, default=5000)
    parser.add_argument("--test-n", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=20240)
    args = parser.parse_args()
    root = synthesize_digit_idx(data_dir(args.out), args.train_n, args.test_n, args.seed)
    print(f"wrote IDX files to {root}/")


if __name__ == "__main__":
    main()
