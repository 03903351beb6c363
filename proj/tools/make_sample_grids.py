#!/usr/bin/env python3
# Copyright 2026 The danosim Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes the synthetic density grids used by the sample scenes.

soap.grid  flat block 0.1 x 0.06 x 0.03 m, density 1 inside, one-cell ramp
bunny.grid union of soft ellipsoids (body, head, ears)
"""

import argparse
import math
import os


def write_grid(path, origin, spacing, dims, fn, comment):
    with open(path, "w") as f:
        f.write(f"# {comment}\n")
        f.write("dims: %d %d %d\n" % dims)
        f.write("origin: %r %r %r\n" % origin)
        f.write("spacing: %r %r %r\n" % (spacing, spacing, spacing))
        for k in range(dims[2]):
            for j in range(dims[1]):
                for i in range(dims[0]):
                    x = (origin[0] + i * spacing, origin[1] + j * spacing, origin[2] + k * spacing)
                    f.write("%.17g\n" % fn(x))


def soap(out):
    half, h = (0.05, 0.03, 0.015), 0.005
    dims = tuple(math.ceil(2 * half[a] / h) + 3 for a in range(3))
    origin = tuple(-0.5 * (dims[a] - 1) * h for a in range(3))

    def fn(x):
        v = 1.0
        for a in range(3):
            v *= min(max((half[a] - abs(x[a])) / h + 0.5, 0.0), 1.0)
        return v

    write_grid(os.path.join(out, "soap.grid"), origin, h, dims, fn, "soap-like block")


def bunny(out):
    parts = [((0.0, 0.0, 0.045), (0.075, 0.06, 0.05)),
             ((0.06, 0.0, 0.09), (0.035, 0.032, 0.032)),
             ((0.055, 0.015, 0.135), (0.012, 0.008, 0.03)),
             ((0.055, -0.015, 0.135), (0.012, 0.008, 0.03))]
    lo, hi, h = (-0.1, -0.08, -0.02), (0.12, 0.08, 0.18), 0.008
    dims = tuple(math.ceil((hi[a] - lo[a]) / h) + 1 for a in range(3))

    def fn(x):
        best = 0.0
        for c, r in parts:
            q = math.sqrt(sum(((x[a] - c[a]) / r[a]) ** 2 for a in range(3)))
            s = min(max((1.1 - q) / 0.3, 0.0), 1.0)
            best = max(best, s * s * (3 - 2 * s))
        return best

    write_grid(os.path.join(out, "bunny.grid"), lo, h, dims, fn, "bunny-like blob")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "samples"))
    args = ap.parse_args()
    soap(args.out)
    bunny(args.out)
