"""Brute-force reference implementations of the descriptors.

These walk every pair, segment and window with plain loops and share no
code with :mod:`porogen.morph`. They exist to check the fast versions.
"""
from collections import deque

import numpy as np

_STEPS = {"x": (0, 1), "y": (1, 0), "se": (1, 1)}


def _in_phase(data, phase):
    want = 1 if phase == "pore" else 0
    return [[int(v) == want for v in row] for row in data]


def _per_direction(fn, direction, r_max):
    if direction == "xy":
        x = fn(_STEPS["x"], r_max)
        y = fn(_STEPS["y"], r_max)
        return [(a + b) / 2 for a, b in zip(x, y)]
    return fn(_STEPS[direction], r_max)


def _pair_ratio(grid, test, step, r_max):
    h, w = len(grid), len(grid[0])
    out = []
    for r in range(r_max + 1):
        hits = total = 0
        for i in range(h):
            for j in range(w):
                i2, j2 = i + step[0] * r, j + step[1] * r
                if i2 >= h or j2 >= w:
                    continue
                total += 1
                hits += bool(test(i, j, i2, j2))
        out.append(hits / total)
    return out


def s2(img, phase="pore", direction="xy", r_max=4):
    g = _in_phase(img.data, phase)
    return _per_direction(
        lambda step, rm: _pair_ratio(g, lambda a, b, c, d: g[a][b] and g[c][d], step, rm),
        direction, r_max)


def lineal(img, phase="pore", direction="xy", r_max=4):
    g = _in_phase(img.data, phase)
    h, w = len(g), len(g[0])

    def one(step, rm):
        out = []
        for r in range(rm + 1):
            hits = total = 0
            for i in range(h):
                for j in range(w):
                    if i + step[0] * r >= h or j + step[1] * r >= w:
                        continue
                    total += 1
                    hits += all(g[i + step[0] * t][j + step[1] * t] for t in range(r + 1))
            out.append(hits / total)
        return out

    return _per_direction(one, direction, r_max)


def flood_fill_labels(img, phase="pore", connectivity=4):
    """Label clusters by breadth-first flood fill in raster-scan order."""
    g = _in_phase(img.data, phase)
    h, w = len(g), len(g[0])
    if connectivity == 4:
        nbrs = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        nbrs = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)]
    labels = [[0] * w for _ in range(h)]
    current = 0
    for i in range(h):
        for j in range(w):
            if not g[i][j] or labels[i][j]:
                continue
            current += 1
            labels[i][j] = current
            queue = deque([(i, j)])
            while queue:
                a, b = queue.popleft()
                for da, db in nbrs:
                    c, d = a + da, b + db
                    if 0 <= c < h and 0 <= d < w and g[c][d] and not labels[c][d]:
                        labels[c][d] = current
                        queue.append((c, d))
    return np.array(labels)


def c2(img, phase="pore", direction="xy", r_max=4, connectivity=4):
    lab = flood_fill_labels(img, phase, connectivity).tolist()
    return _per_direction(
        lambda step, rm: _pair_ratio(
            lab, lambda a, b, c, d: lab[a][b] > 0 and lab[a][b] == lab[c][d], step, rm),
        direction, r_max)


def pattern_histogram(img, n):
    """{code: frequency} by reading each window as a string of bits."""
    data = img.data.tolist()
    h, w = len(data), len(data[0])
    counts = {}
    windows = 0
    for i in range(h - n + 1):
        for j in range(w - n + 1):
            bits = "".join(str(data[i + a][j + b]) for a in range(n) for b in range(n))
            code = int(bits, 2)
            counts[code] = counts.get(code, 0) + 1
            windows += 1
    return {c: k / windows for c, k in counts.items()}
