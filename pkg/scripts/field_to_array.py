"""Convert a field dump to a (ny, nx) complex .npy array for plotting elsewhere.

    python scripts/field_to_array.py out/solution.txt out/solution.npy
"""

import sys

import numpy as np

from kerrlod.solver import read_field

if __name__ == "__main__":
    src, dst = sys.argv[1:3]
    with open(src) as fh:
        nx, ny = (int(t) for t in fh.readline().split())
    np.save(dst, read_field(src).reshape(ny, nx))
