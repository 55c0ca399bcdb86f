"""Convert the 5000-digit MNIST subset shipped in the mlxtend wheel to gzipped IDX files.

usage: pip download --no-deps mlxtend -d /tmp/mlx
       python3 scripts/mnist5k_to_idx.py /tmp/mlx/mlxtend-*.whl data/mnist5k
"""
import gzip
import struct
import sys
import zipfile

wheel, out = sys.argv[1], sys.argv[2]
raw = gzip.decompress(zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz"))
rows = [[int(float(v)) for v in line.split(",")] for line in raw.decode().strip().split("\n")]
images = bytes(p for r in rows for p in r[:-1])
labels = bytes(r[-1] for r in rows)
n = len(rows)
with gzip.GzipFile(f"{out}/images-idx3-ubyte.gz", "wb", mtime=0) as f:
    f.write(struct.pack(">IIII", 0x803, n, 28, 28) + images)
with gzip.GzipFile(f"{out}/labels-idx1-ubyte.gz", "wb", mtime=0) as f:
    f.write(struct.pack(">II", 0x801, n) + labels)
