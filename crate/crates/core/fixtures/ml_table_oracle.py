"""Writes lhz3_ml_table.txt: minimum-weight corrections for every syndrome
reached by a weight-1 or weight-2 X error on lhz3.layout.

Independent of the Rust decoder: brute force over all 2^n masks, lowest
weight first, ties broken by the lexicographically smallest sorted support.
"""
import itertools
import re
from pathlib import Path

here = Path(__file__).parent
n = 0
stabs = []
for line in (here / "lhz3.layout").read_text().splitlines():
    line = line.split("#")[0].strip()
    if not line:
        continue
    m = re.match(r"stab=\[([\d,]*)\]", line)
    if m:
        stabs.append([int(v) for v in m.group(1).split(",")])
    else:
        n += 1


def syndrome(support):
    return "".join(str(len(set(s) & set(support)) % 2) for s in stabs)


best = {}
for w in range(n + 1):
    for support in itertools.combinations(range(n), w):
        best.setdefault(syndrome(support), list(support))

rows = set()
for w in (1, 2):
    for support in itertools.combinations(range(n), w):
        rows.add(syndrome(support))

with open(here / "lhz3_ml_table.txt", "w") as f:
    f.write("# syndrome (one bit per stabilizer) -> minimum-weight correction\n")
    for s in sorted(rows):
        f.write(f"{s} [{','.join(map(str, best[s]))}]\n")
