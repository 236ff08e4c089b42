#!/usr/bin/env python3
"""Build the bundled 5,000-digit MNIST subset as IDX files.

Source: the `mnist_5k.csv.gz` table shipped inside the mlxtend wheel
(500 digits per class taken from the MNIST training set). Rows are split
per class into 400 training and 100 test digits, in file order.

    pip download --no-deps mlxtend
    python3 scripts/make_mnist_subset.py mlxtend-*.whl data/mnist-5k
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

TRAIN_PER_CLASS = 400


def read_rows(wheel):
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))
    for line in io.StringIO(raw.decode()):
        line = line.strip()
        if line:
            values = [int(float(v)) for v in line.split(",")]
            yield values[:784], values[784]


def write_idx(out, name, images, labels):
    with open(out / f"{name}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(out / f"{name}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    wheel, out = sys.argv[1], Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    seen = [0] * 10
    train, test = ([], []), ([], [])
    for pixels, label in read_rows(wheel):
        bucket = train if seen[label] < TRAIN_PER_CLASS else test
        seen[label] += 1
        bucket[0].append(pixels)
        bucket[1].append(label)
    write_idx(out, "train", *train)
    write_idx(out, "t10k", *test)
    print(f"train={len(train[1])} test={len(test[1])} per_class={seen}")


if __name__ == "__main__":
    main()
