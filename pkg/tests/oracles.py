"""Host-side reference computations shared by the tests.

Nothing here imports the compiler pipeline.
"""

import random
from itertools import product


def levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def pattern_scan(code, first_bytes, second=0xC3):
    return [i for i in range(len(code) - 1) if code[i] in first_bytes and code[i + 1] == second]


def fixed_point(native, recipes):
    """Least set closed under 'some recipe has every used op in the set'.

    ``recipes`` is a list of (head, frozenset(uses)). Grows one op per round,
    which is slow and obviously correct.
    """
    s = set(native)
    while True:
        new = {h for h, uses in recipes if h not in s and uses <= s}
        if not new:
            return s
        s.add(min(new))


def min_plan_weight(op, native, recipes, weight):
    """Exhaustive minimum over plan trees of the static native-gadget sum.

    ``recipes``: list of (head, body) where body is a list of used ops with
    repetition. Plans are enumerated by trying every recipe choice per op
    along every path without revisiting an op on the same path.
    """
    best = {}

    def cost(o, path):
        if o in path:
            return float("inf")
        options = []
        if o in native:
            options.append(weight(o))
        for head, body in recipes:
            if head != o:
                continue
            total = 0
            for u in body:
                total += cost(u, path | {o})
            options.append(total)
        return min(options, default=float("inf"))

    return cost(op, frozenset())


def random_protocol(rnd, depth=0):
    items = []
    for _ in range(rnd.randint(1, 4)):
        if depth < 3 and rnd.random() < 0.3:
            items.append((rnd.randint(0, 5), random_protocol(rnd, depth + 1)))
        else:
            items.append(rnd.randint(1, 40))
    return items


def expand(items):
    out = []
    for it in items:
        if isinstance(it, tuple):
            for _ in range(it[0]):
                out.extend(expand(it[1]))
        else:
            out.append(it)
    return out


def placements(sizes, buf, align):
    """Every non-overlapping aligned placement of the given sizes, lazily."""
    slots = [[o for o in range(0, buf - s + 1) if o % a == 0] for s, a in zip(sizes, align)]
    for combo in product(*slots):
        spans = sorted(zip(combo, sizes))
        if all(spans[i][0] + spans[i][1] <= spans[i + 1][0] for i in range(len(spans) - 1)):
            yield combo


def rng(seed):
    return random.Random(seed)
