"""Regenerate the bundled ASCII maps under src/forage/maps/."""

from collections import deque
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "forage" / "maps"


def write(name, nav):
    rows = ["".join("." if v else "#" for v in row) for row in nav]
    (OUT / f"{name}.txt").write_text("\n".join(rows) + "\n")


def connected(nav):
    cells = list(zip(*np.nonzero(nav)))
    seen = {cells[0]}
    q = deque([cells[0]])
    while q:
        i, j = q.popleft()
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                a, b = i + di, j + dj
                if 0 <= a < nav.shape[0] and 0 <= b < nav.shape[1] and nav[a, b] and (a, b) not in seen:
                    seen.add((a, b))
                    q.append((a, b))
    return len(seen) == len(cells)


def wharf(target=1297):
    h, w = 62, 46
    nav = np.zeros((h, w), dtype=bool)
    # harbour basin
    nav[3:58, 4:40] = True
    # entrance channel to the south-east
    nav[50:61, 30:44] = True
    # piers from the west quay
    for r in range(8, 50, 8):
        nav[r:r + 2, 4:24] = False
    # piers from the east quay
    for r in range(12, 48, 8):
        nav[r:r + 2, 20:40] = False
    # breakwater with a narrow gap
    nav[52:54, 4:28] = False
    nav[52:54, 14:16] = True
    rng = np.random.default_rng(1297)
    n = int(nav.sum())
    while n > target:
        cand = [tuple(c) for c in np.argwhere(nav)]
        i, j = cand[rng.integers(len(cand))]
        # only nibble at quay edges so corridors stay open
        block = nav[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2]
        if block.all():
            continue
        nav[i, j] = False
        if connected(nav):
            n -= 1
        else:
            nav[i, j] = True
    assert n == target, n
    return nav


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for size in (10, 20, 40):
        write(f"open{size}", np.ones((size, size), dtype=bool))
    nav = wharf()
    print("wharf navigable:", int(nav.sum()))
    write("wharf62x46", nav)
