#!/usr/bin/env python3
"""Fetch a 10,000-digit MNIST subset and write it as IDX files.

The digits come from the `mnist` npm package (v1.1.0), which ships real
MNIST samples as JSON arrays of 784 floats in [0, 1]. Samples are
interleaved by class (0, 1, ..., 9, 0, 1, ...) until a class runs out, so
any prefix is close to class-balanced.

    tools/fetch_mnist.py --out data/mnist
    tools/fetch_mnist.py --package-dir /path/to/unpacked/package --out data/mnist
"""

import argparse
import json
import pathlib
import struct
import subprocess
import sys
import tarfile
import tempfile

PIXELS = 28 * 28


def unpack_package(workdir: pathlib.Path) -> pathlib.Path:
    out = subprocess.run(
        ["npm", "pack", "mnist@1.1.0", "--silent"],
        cwd=workdir, check=True, capture_output=True, text=True,
    ).stdout.strip().splitlines()[-1]
    with tarfile.open(workdir / out) as tar:
        tar.extractall(workdir)
    return workdir / "package"


def load_digits(package: pathlib.Path):
    per_class = []
    for digit in range(10):
        data = json.loads((package / "src" / "digits" / f"{digit}.json").read_text())["data"]
        if len(data) % PIXELS:
            sys.exit(f"digit {digit}: payload is not a multiple of {PIXELS}")
        per_class.append([data[i:i + PIXELS] for i in range(0, len(data), PIXELS)])
    images, labels = [], []
    for i in range(max(len(c) for c in per_class)):
        for digit, samples in enumerate(per_class):
            if i < len(samples):
                images.append(samples[i])
                labels.append(digit)
    return images, labels


def write_idx(path: pathlib.Path, dims, payload: bytes):
    with open(path, "wb") as f:
        f.write(bytes([0, 0, 8, len(dims)]))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="data/mnist", type=pathlib.Path)
    ap.add_argument("--package-dir", type=pathlib.Path)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        package = args.package_dir or unpack_package(pathlib.Path(tmp))
        images, labels = load_digits(package)

    args.out.mkdir(parents=True, exist_ok=True)
    pixels = bytes(min(255, max(0, round(v * 255))) for img in images for v in img)
    write_idx(args.out / "images-idx3-ubyte", [len(images), 28, 28], pixels)
    write_idx(args.out / "labels-idx1-ubyte", [len(labels)], bytes(labels))
    print(f"wrote {len(images)} images to {args.out}")


if __name__ == "__main__":
    main()
