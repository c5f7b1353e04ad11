"""Writes index_sets.json: reduced tuples and their non-partner tuples for small N."""
import itertools
import json
import pathlib


def mult(t, n):
    return [sum(1 for v in t if v == l) for l in range(1, n + 1)]


def reduced(t, n):
    a = mult(t, n)
    used = [v for v in a if v > 0]
    k = len(used)
    return a[:k] == sorted(a[:k]) and all(v > 0 for v in a[:k]) and all(v == 0 for v in a[k:])


def partner(j, n, m, r):
    b = mult(j, n)
    cond_i = all(b[l - 1] >= 1 for l in range(1, m + 1))
    cond_ii = all(b[l - 1] != 1 for l in range(m + r + 1, n + 1))
    return cond_i and cond_ii


out = []
for n, k in [(2, 1), (3, 1)]:
    tuples = list(itertools.product(range(1, n + 1), repeat=2 * k))
    cases = []
    for i in tuples:
        if not reduced(i, n):
            continue
        a = mult(i, n)
        m = sum(1 for v in a if v == 1)
        r = sum(1 for v in a if v > 1)
        cases.append({"i": list(i), "singles": m, "repeated": r,
                      "non_partners": [list(j) for j in tuples if not partner(j, n, m, r)]})
    out.append({"n": n, "k": k, "tuples": len(tuples), "reduced": cases})

path = pathlib.Path(__file__).with_name("index_sets.json")
path.write_text(json.dumps(out, indent=1) + "\n")
