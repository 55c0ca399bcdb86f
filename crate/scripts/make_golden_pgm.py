"""Writes the golden PGM grids used by the acceptance suite.

Pixel values are dyadic so the expected bytes are exact: sample k, pixel p
holds v = -1 + 2 * x / 16 with x = (9 * k + p) % 17, which maps to
floor(x * 255 / 16 + 0.5).
"""
import math
import pathlib
import sys

SIDE = 3


def pixel(k, p):
    x = (9 * k + p) % 17
    return int(math.floor(x * 255 / 16 + 0.5))


def grid(count, cols):
    rows = -(-count // cols)
    w, h = cols * SIDE, rows * SIDE
    out = bytearray(w * h)
    for k in range(count):
        gr, gc = divmod(k, cols)
        for r in range(SIDE):
            for c in range(SIDE):
                out[(gr * SIDE + r) * w + gc * SIDE + c] = pixel(k, r * SIDE + c)
    return b"P5\n%d %d\n255\n" % (w, h) + bytes(out)


def main(dest):
    dest = pathlib.Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "grid4_cols2.pgm").write_bytes(grid(4, 2))
    (dest / "grid3_cols2.pgm").write_bytes(grid(3, 2))
    (dest / "grid5_cols5.pgm").write_bytes(grid(5, 5))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/cli/tests/golden")
