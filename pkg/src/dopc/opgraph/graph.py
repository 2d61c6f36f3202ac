"""Op-graph over DOP-op signatures: which ops can be built from which."""

from dataclasses import dataclass, field
from itertools import product

from ..asm.ir import GOTO_CLASS, opcode_key
from ..errors import SynthesisError

INF = float("inf")


def default_weight(sig):
    return 10 if sig[0] in GOTO_CLASS else 1


@dataclass
class OpGraph:
    native: frozenset
    recipes: dict                      # sig -> [Recipe] in declaration order
    weights: dict = field(default_factory=dict)
    disabled: list = field(default_factory=list)

    @property
    def nodes(self):
        out = set(self.native) | set(self.recipes)
        for rs in self.recipes.values():
            for r in rs:
                out |= r.uses()
        return out

    def edges(self):
        """sig -> list of frozensets, one per recipe."""
        return {s: [r.uses() for r in rs] for s, rs in self.recipes.items()}

    def dangling(self):
        return {n for n in self.nodes if n not in self.native and n not in self.recipes}

    def native_weight(self, sig):
        return self.weights.get(sig, default_weight(sig))

    def synthesizable_set(self):
        return _fixed_point(self)

    def synthesizable(self, sig):
        return sig in _fixed_point(self)

    def costs(self):
        return _costs(self)[0]

    def merged(self, other):
        recipes = {s: list(rs) for s, rs in self.recipes.items()}
        for s, rs in other.recipes.items():
            recipes.setdefault(s, []).extend(rs)
        weights = dict(self.weights)
        weights.update(other.weights)
        return OpGraph(frozenset(self.native | other.native), recipes, weights,
                       self.disabled + other.disabled)

    def structure(self):
        """Comparable summary: native set and ordered edge sets."""
        return (self.native, {s: tuple(e) for s, e in self.edges().items()})


def build_op_graph(recipes, native, weights=None, anchors=None, resident=True):
    """Index recipes by the op they implement.

    Recipes that need an anchor the target lacks (``anchors`` given) or a
    resident record (``rec()`` operands on a non-resident target) are kept
    aside in ``disabled``.
    """
    table, disabled = {}, []
    for r in recipes:
        need = r.anchors()
        if anchors is not None:
            missing = {a for a in need if a != "rec()" and a not in anchors}
            if missing or ("rec()" in need and not resident):
                disabled.append(r)
                continue
        table.setdefault(r.signature, []).append(r)
    return OpGraph(frozenset(native), table, dict(weights or {}), disabled)


def _fixed_point(g):
    s = set(g.native)
    changed = True
    while changed:
        changed = False
        for sig, rs in g.recipes.items():
            if sig in s:
                continue
            if any(r.uses() <= s for r in rs):
                s.add(sig)
                changed = True
    return s


def _recipe_cost(g, r, cost):
    if r.weight is not None:
        return r.weight if all(cost.get(u, INF) < INF for u in r.uses()) else INF
    total = 0
    for ins in r.body.instructions:
        total += cost.get(ins.signature, INF)
    return total


def _costs(g):
    """Least fixed point of per-op plan cost; the chosen recipe per op.

    Native ops are tried first, then recipes in declaration order; only a
    strictly cheaper alternative replaces the current choice.
    """
    cost, choice = {}, {}
    for sig in g.native:
        cost[sig] = g.native_weight(sig)
        choice[sig] = None
    changed = True
    while changed:
        changed = False
        for sig, rs in g.recipes.items():
            for r in rs:
                c = _recipe_cost(g, r, cost)
                if c < cost.get(sig, INF):
                    cost[sig], choice[sig] = c, r
                    changed = True
    return cost, choice


@dataclass
class Plan:
    """Chosen implementation for every reachable op."""
    choice: dict
    cost: dict

    def recipe_for(self, sig):
        return self.choice[sig]

    def total(self, sig):
        return self.cost[sig]


def select_plan(g, required):
    cost, choice = _costs(g)
    missing = [s for s in required if cost.get(s, INF) == INF]
    if missing:
        report = and_or_report(g, missing)
        raise SynthesisError(
            "cannot synthesize " + ", ".join(opcode_key(*s) for s in missing), report)
    return Plan(choice, cost)


class AndOrReport:
    """Alternative sets of ops that would each make the targets synthesizable."""

    def __init__(self, alternatives):
        self.alternatives = alternatives   # sig -> list of frozensets

    def format(self):
        lines = []
        for sig, alts in self.alternatives.items():
            lines.append(f"{opcode_key(*sig)} needs one of:")
            for a in alts:
                lines.append("  AND(" + ", ".join(sorted(opcode_key(*x) for x in a)) + ")")
        return "\n".join(lines)

    __str__ = format


def and_or_report(g, sigs, limit=64):
    ok = g.synthesizable_set()
    memo = {}

    def alts(sig, path):
        if sig in ok:
            return [frozenset()]
        if sig in path:
            return []
        key = sig
        if key in memo and not (memo[key][1] & path):
            return memo[key][0]
        out = [frozenset([sig])]
        touched = set()
        for r in g.recipes.get(sig, []):
            parts = []
            for u in sorted(r.uses()):
                a = alts(u, path | {sig})
                touched.add(u)
                if not a:
                    parts = None
                    break
                parts.append(a)
            if parts is None:
                continue
            for combo in product(*parts):
                out.append(frozenset().union(*combo))
                if len(out) > limit:
                    break
        out = _minimal(out)
        memo[key] = (out, frozenset(touched))
        return out

    return AndOrReport({s: alts(s, frozenset()) for s in sigs})


def _minimal(sets):
    uniq = sorted(set(sets), key=lambda s: (len(s), sorted(s)))
    keep = []
    for s in uniq:
        if not any(k <= s for k in keep):
            keep.append(s)
    return keep
