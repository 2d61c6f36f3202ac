"""Basic blocks, dominators and loop nesting of an HL-DOP-asm program."""

from dataclasses import dataclass, field

import networkx as nx

from ..asm.ir import Directive, Instruction, LabelDef
from ..errors import TransformError

EXIT = 0


@dataclass
class Block:
    bid: int
    labels: list = field(default_factory=list)
    body: list = field(default_factory=list)       # Instructions and directives
    jump: Instruction = None                        # goto / if_zero_goto ending the block
    fallthrough: int = None                         # next block id, None at the end
    succs: list = field(default_factory=list)


@dataclass
class BasicBlockGraph:
    blocks: dict                  # bid -> Block; ids dense from 1, entry is 1
    decls: list
    graph: nx.DiGraph
    label_block: dict

    @property
    def entry(self):
        return 1

    def ids(self):
        return sorted(self.blocks)

    def dominators(self):
        return nx.immediate_dominators(self.graph, self.entry)


def _is_jump(it):
    return isinstance(it, Instruction) and it.opcode in ("goto", "if_zero_goto")


def build_cfg(prog):
    """Split ``prog`` into basic blocks; unreachable blocks are dropped."""
    decls = list(prog.decls)
    raw = [[]]
    for it in prog.items:
        if isinstance(it, LabelDef):
            if any(not isinstance(x, LabelDef) for x in raw[-1]):
                raw.append([])
            raw[-1].append(it)
        elif isinstance(it, (Instruction, Directive)):
            raw[-1].append(it)
            if _is_jump(it):
                raw.append([])
    raw = [r for r in raw if r]
    if not raw:
        raw = [[]]
    tmp = []
    label_idx = {}
    for i, items in enumerate(raw):
        b = Block(i)
        for it in items:
            if isinstance(it, LabelDef):
                b.labels.append(it.name)
                label_idx[it.name] = i
            elif _is_jump(it):
                b.jump = it
            else:
                b.body.append(it)
        tmp.append(b)

    def succs(i):
        b = tmp[i]
        out = []
        if b.jump is not None:
            target = b.jump.operands[-1].name
            if target not in label_idx:
                raise TransformError(f"undefined label :{target}")
            if b.jump.opcode == "if_zero_goto" and i + 1 < len(tmp):
                out.append(i + 1)
            out.append(label_idx[target])
        elif i + 1 < len(tmp):
            out.append(i + 1)
        return out

    # renumber reachable blocks densely in layout order
    seen, stack = {0}, [0]
    while stack:
        i = stack.pop()
        for j in succs(i):
            if j not in seen:
                seen.add(j)
                stack.append(j)
    order = sorted(seen)
    new_id = {old: k + 1 for k, old in enumerate(order)}
    blocks = {}
    g = nx.DiGraph()
    for old in order:
        b = tmp[old]
        b.bid = new_id[old]
        s = succs(old)
        b.succs = [new_id[j] for j in s]
        nxt = old + 1
        if b.jump is None or b.jump.opcode == "if_zero_goto":
            b.fallthrough = new_id[nxt] if nxt < len(tmp) else EXIT
        blocks[b.bid] = b
        g.add_node(b.bid)
        for j in b.succs:
            g.add_edge(b.bid, j)
    label_block = {lab: new_id[i] for lab, i in label_idx.items() if i in new_id}
    return BasicBlockGraph(blocks, decls, g, label_block)


@dataclass
class Loop:
    header: int
    nodes: set
    children: list = field(default_factory=list)
    parent: "Loop" = None


def find_loops(cfg):
    """Natural loops keyed by header; raises on irreducible control flow."""
    g = cfg.graph
    idom = cfg.dominators()

    def dominates(a, b):
        while True:
            if a == b:
                return True
            p = idom.get(b)
            if p is None or p == b:
                return False
            b = p

    # a DFS retreating edge whose target does not dominate the source means irreducible
    back = []
    on_stack, state = set(), {}

    def dfs(n):
        stack = [(n, iter(sorted(g.successors(n))))]
        on_stack.add(n)
        state[n] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                on_stack.discard(node)
                continue
            if nxt in on_stack:
                if not dominates(nxt, node):
                    raise TransformError(
                        f"irreducible control flow: edge {node}->{nxt} enters a loop sideways")
                back.append((node, nxt))
            elif nxt not in state:
                state[nxt] = 1
                on_stack.add(nxt)
                stack.append((nxt, iter(sorted(g.successors(nxt)))))

    dfs(cfg.entry)
    for u, v in g.edges():
        if dominates(v, u) and (u, v) not in back:
            back.append((u, v))
    loops = {}
    for u, h in back:
        body = loops.setdefault(h, Loop(h, {h})).nodes
        work = [u]
        while work:
            n = work.pop()
            if n in body:
                continue
            body.add(n)
            work.extend(g.predecessors(n))
    # nesting: the smallest enclosing loop is the parent
    ordered = sorted(loops.values(), key=lambda lp: len(lp.nodes))
    for i, lp in enumerate(ordered):
        for outer in ordered[i + 1:]:
            if lp.header in outer.nodes and outer is not lp:
                lp.parent = outer
                outer.children.append(lp)
                break
    return loops, back


def is_reducible(cfg):
    try:
        find_loops(cfg)
    except TransformError:
        return False
    return True


def rpo(cfg):
    """Topological order of the forward edges, lowest block id first on ties.

    Like a reverse postorder it puts every block after its forward
    predecessors, but it also keeps the arms of a selection in layout order.
    """
    _, back = find_loops(cfg)
    g = cfg.graph.copy()
    g.remove_edges_from(back)
    return list(nx.lexicographical_topological_sort(g))
