#!/usr/bin/env python3
# Copyright 2026 The lipdp Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes MNIST IDX files from the digit subset shipped in the `mnist` npm
package (src/digits/<d>.json, each {"data": [784 * n pixels in [0, 1]]}).

Usage: make_mnist_idx.py PACKAGE_DIR OUT_DIR [--test-fraction 0.2] [--seed 0]

Obtain the package with `npm pack mnist` and unpack the tarball. Real MNIST
IDX files can be used instead; place them in OUT_DIR unchanged.
"""

import argparse
import json
import pathlib
import random
import struct

PIXELS = 28 * 28


def load_digits(package_dir):
    samples = []
    for digit in range(10):
        path = pathlib.Path(package_dir) / "src" / "digits" / f"{digit}.json"
        data = json.loads(path.read_text())["data"]
        if len(data) % PIXELS:
            raise SystemExit(f"{path}: length {len(data)} is not a multiple of {PIXELS}")
        for start in range(0, len(data), PIXELS):
            pixels = bytes(round(v * 255) for v in data[start:start + PIXELS])
            samples.append((pixels, digit))
    return samples


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(images), 28, 28))
        for img in images:
            f.write(img)


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(bytes(labels))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("package_dir")
    parser.add_argument("out_dir")
    parser.add_argument("--test-fraction", type=float, default=0.2)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    samples = load_digits(args.package_dir)
    random.Random(args.seed).shuffle(samples)
    n_test = int(round(len(samples) * args.test_fraction))
    test, train = samples[:n_test], samples[n_test:]

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for prefix, split in (("train", train), ("t10k", test)):
        write_images(out / f"{prefix}-images-idx3-ubyte", [s[0] for s in split])
        write_labels(out / f"{prefix}-labels-idx1-ubyte", [s[1] for s in split])
    print(f"wrote {len(train)} training and {len(test)} test samples to {out}")


if __name__ == "__main__":
    main()
