#!/usr/bin/env python3
"""Build a 10,000-digit MNIST subset in IDX format.

The digits come from the `mnist` npm package (MIT), which ships 10,000
MNIST digits as JSON arrays of 784 floats in [0,1] rounded to three
decimals. Rounding `v * 255` recovers the original bytes exactly.

Usage: scripts/fetch_mnist.py [OUT_DIR]   (default: data/)
"""
import json
import os
import random
import struct
import subprocess
import sys
import tarfile
import tempfile


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "data"
    os.makedirs(out_dir, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL)
        with tarfile.open(os.path.join(tmp, "mnist-1.1.0.tgz")) as tar:
            tar.extractall(tmp)
        items = []
        for digit in range(10):
            path = os.path.join(tmp, "package", "src", "digits", f"{digit}.json")
            with open(path) as f:
                flat = json.load(f)["data"]
            assert len(flat) % 784 == 0
            for i in range(0, len(flat), 784):
                pixels = bytes(int(round(v * 255)) for v in flat[i:i + 784])
                items.append((pixels, digit))

    # Interleave classes so that any prefix is a class-mixed sample.
    random.Random(20161017).shuffle(items)

    with open(os.path.join(out_dir, "mnist10k-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(items), 28, 28))
        for pixels, _ in items:
            f.write(pixels)
    with open(os.path.join(out_dir, "mnist10k-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(items)))
        f.write(bytes(label for _, label in items))
    print(f"wrote {len(items)} digits to {out_dir}")


if __name__ == "__main__":
    main()
