"""Recursive-descent parser and name/type checker for payload scripts.

Grammar (C-like)::

    program  := (decl | proc)*
    decl     := type NAME ['[' [const] ']'] ['at' const] ['=' init] ';'
    init     := expr | '{' const (',' const)* '}' | "string" | hex"..."
    proc     := 'proc' NAME '(' [type NAME (',' type NAME)*] ')' block
    stmt     := decl | lvalue '=' expr ';' | NAME '(' args ')' ';'
              | 'if' '(' expr ')' body ['else' body]
              | ['@maxiter' '(' N ')'] loop-stmt
              | 'break' ';' | 'continue' ';' | 'asm' '{' text '}'
    loop-stmt:= 'while' '(' expr ')' body
              | 'for' '(' [assign] ';' [expr] ';' [assign] ')' body
              | 'repeat' body 'until' '(' expr ')' ';'
              | 'loop' body
    lvalue   := NAME | NAME '[' expr ']' | type '[' expr ']' | '*' unary

``type[e]`` reads or writes a ``type``-sized cell at address ``e`` and
``*e`` is ``addr[e]``. Every constant-initialized array ``a`` also defines
the constant ``a_len``.
"""

from ..errors import SlangError
from . import ast as A
from .lexer import TYPES, tokenize

_PREC = [("|",), ("&",), ("==", "!="), (">=", "<", ">", "<="), ("+", "-"), ("*",)]


class Parser:
    def __init__(self, src):
        self.toks = tokenize(src)
        self.pos = 0
        self.globals = {}
        self.global_list = []
        self.procs = {}
        self.constants = {}
        self.scope = None          # proc-local symbols while parsing a body
        self.proc = None
        self.loop_depth = 0
        self.calls = []            # (caller, callee, token)

    # -- token helpers -------------------------------------------------------

    @property
    def tok(self):
        return self.toks[self.pos]

    def peek(self, k=1):
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def error(self, msg, tok=None):
        t = tok or self.tok
        return SlangError(msg, t.line, t.col, [(t.line, t.col, msg)])

    def at(self, kind, value=None):
        t = self.tok
        return t.kind == kind and (value is None or t.value == value)

    def at_op(self, value):
        return self.at("op", value)

    def accept(self, kind, value=None):
        if self.at(kind, value):
            t = self.tok
            self.pos += 1
            return t
        return None

    def expect(self, kind, value=None):
        t = self.accept(kind, value)
        if t is None:
            want = value if value is not None else kind
            raise self.error(f"syntax error: expected {want!r}, found {str(self.tok)!r}")
        return t

    def expect_op(self, value):
        return self.expect("op", value)

    # -- symbols -------------------------------------------------------------

    def lookup(self, name, tok):
        if self.scope is not None and name in self.scope:
            return self.scope[name]
        if name in self.globals:
            return self.globals[name]
        raise self.error(f"undeclared identifier {name!r}", tok)

    def declare(self, sym, tok):
        table = self.scope if self.scope is not None else self.globals
        if sym.name in table or sym.name in self.constants or (
                self.scope is None and sym.name in self.procs):
            raise self.error(f"duplicate declaration of {sym.name!r}", tok)
        table[sym.name] = sym
        if self.scope is None:
            self.global_list.append(sym)
        else:
            self.proc.symbols[sym.name] = sym

    # -- top level -----------------------------------------------------------

    def parse(self):
        while not self.at("eof"):
            if self.at("keyword", "proc"):
                self.parse_proc()
            elif self.tok.kind == "keyword" and self.tok.value in TYPES:
                self.parse_decl()
            else:
                raise self.error(f"syntax error: unexpected {str(self.tok)!r}")
        self.check_calls()
        if "main" not in self.procs:
            raise SlangError("no entry procedure 'main'", 1, 1, [(1, 1, "no entry procedure 'main'")])
        return A.PayloadAst(self.global_list, self.procs, "main", dict(self.constants))

    def check_calls(self):
        graph = {}
        for caller, callee, tok in self.calls:
            if callee not in self.procs:
                raise self.error(f"undeclared procedure {callee!r}", tok)
            graph.setdefault(caller, []).append((callee, tok))
        state = {}

        def visit(n):
            state[n] = 1
            for m, tok in graph.get(n, []):
                if state.get(m) == 1:
                    raise self.error(f"recursive call of {m!r}", tok)
                if m not in state:
                    visit(m)
            state[n] = 2

        for n in self.procs:
            if n not in state:
                visit(n)

    def parse_proc(self):
        start = self.expect("keyword", "proc")
        name_tok = self.expect("ident")
        name = name_tok.value
        if name in self.procs or name in self.globals:
            raise self.error(f"duplicate declaration of {name!r}", name_tok)
        proc = A.Proc(name, [], [], start.line)
        self.procs[name] = proc
        self.proc = proc
        self.scope = {}
        self.expect_op("(")
        if not self.at_op(")"):
            while True:
                kind = self.expect_type()
                pname = self.expect("ident")
                sym = A.Symbol(pname.value, f"{name}.{pname.value}", kind, is_global=False)
                self.declare(sym, pname)
                proc.params.append(sym)
                if not self.accept("op", ","):
                    break
        self.expect_op(")")
        proc.body = self.parse_block()
        self.scope = None
        self.proc = None

    def expect_type(self):
        t = self.tok
        if t.kind == "keyword" and t.value in TYPES:
            self.pos += 1
            return t.value
        raise self.error(f"syntax error: expected a type, found {str(t)!r}")

    # -- declarations --------------------------------------------------------

    def parse_decl(self):
        kind_tok = self.tok
        kind = self.expect_type()
        name_tok = self.expect("ident")
        name = name_tok.value
        count = None
        is_array = False
        if self.accept("op", "["):
            is_array = True
            if not self.at_op("]"):
                count = self.const_value(self.parse_expr(), name_tok)
                if count <= 0:
                    raise self.error("array length must be positive", name_tok)
            self.expect_op("]")
        address = None
        if self.accept("keyword", "at"):
            address = self.const_value(self.parse_expr(), name_tok)
        init = None
        dynamic = None
        if self.accept("op", "="):
            if is_array:
                init = self.parse_array_init(kind, name_tok)
                if count is None:
                    count = len(init)
                if len(init) > count:
                    raise self.error(f"too many initializers for {name!r}", name_tok)
            else:
                if self.at("bytes") or self.at_op("{"):
                    raise self.error(f"type mismatch: scalar {name!r} with an array initializer", name_tok)
                e = self.parse_expr()
                if self.scope is None:
                    init = (self.static_value(e, name_tok),)
                else:
                    dynamic = e
        if is_array and count is None:
            raise self.error(f"array {name!r} needs a length or an initializer", name_tok)
        if address is not None and init is not None:
            raise self.error(f"{name!r} is placed with 'at' and cannot be initialized", name_tok)
        self.expect_op(";")
        mangled = name if self.scope is None else f"{self.proc.name}.{name}"
        sym = A.Symbol(name, mangled, kind, count if is_array else None, address, init,
                       self.scope is None)
        self.declare(sym, name_tok)
        if is_array and init is not None:
            cname = f"{name}_len"
            if cname in self.constants or cname in self.globals:
                raise self.error(f"duplicate declaration of {cname!r}", name_tok)
            self.constants[cname] = len(init)
        del kind_tok
        return A.Local(sym, dynamic, line=name_tok.line, col=name_tok.col)

    def parse_array_init(self, kind, tok):
        if self.at("bytes"):
            data = self.tok.value
            self.pos += 1
            if kind != "byte":
                raise self.error("type mismatch: string initializer needs a byte array", tok)
            return tuple(data)
        self.expect_op("{")
        vals = []
        if not self.at_op("}"):
            while True:
                vals.append(self.static_value(self.parse_expr(), tok))
                if not self.accept("op", ","):
                    break
        self.expect_op("}")
        return tuple(vals)

    def static_value(self, e, tok):
        """Initializer: an int, or an AddrOf/Leak expression resolved later."""
        if isinstance(e, (A.AddrOf, A.Leak)):
            if isinstance(e, A.AddrOf) and e.index is not None:
                self.const_value(e.index, tok)
            return e
        return self.const_value(e, tok)

    def const_value(self, e, tok):
        v = fold(e)
        if v is None:
            raise self.error("expected a constant expression", tok)
        return v

    # -- statements ----------------------------------------------------------

    def parse_block(self):
        self.expect_op("{")
        out = []
        while not self.at_op("}"):
            if self.at("eof"):
                raise self.error("syntax error: unterminated block")
            out.extend(self.parse_stmt())
        self.expect_op("}")
        return out

    def parse_body(self):
        if self.at_op("{"):
            return self.parse_block()
        return self.parse_stmt()

    def parse_stmt(self):
        t = self.tok
        if t.kind == "keyword" and t.value in TYPES and self.peek().kind == "ident":
            return [self.parse_decl()]
        if self.accept("op", "@"):
            ann = self.expect("ident")
            if ann.value != "maxiter":
                raise self.error(f"unknown annotation @{ann.value}", ann)
            self.expect_op("(")
            n = self.expect("number").value
            self.expect_op(")")
            if n <= 0:
                raise self.error("@maxiter needs a positive count", ann)
            if not (self.tok.kind == "keyword" and self.tok.value in ("while", "for", "repeat", "loop")):
                raise self.error("@maxiter must precede a loop", ann)
            stmt = self.parse_stmt()[0]
            stmt.maxiter = n
            return [stmt]
        if t.kind == "keyword":
            v = t.value
            if v == "if":
                return [self.parse_if()]
            if v in ("while", "for", "repeat", "loop"):
                self.loop_depth += 1
                try:
                    return [getattr(self, "parse_" + v)()]
                finally:
                    self.loop_depth -= 1
            if v in ("break", "continue"):
                self.pos += 1
                if not self.loop_depth:
                    raise self.error(f"'{v}' outside a loop", t)
                self.expect_op(";")
                cls = A.Break if v == "break" else A.Continue
                return [cls(line=t.line, col=t.col)]
        if t.kind == "asm":
            self.pos += 1
            return [A.Asm(t.value, line=t.line, col=t.col)]
        if t.kind == "op" and t.value == "{":
            return self.parse_block()
        if t.kind == "ident" and self.peek().kind == "op" and self.peek().value == "(":
            return [self.parse_call()]
        s = self.parse_assign()
        self.expect_op(";")
        return [s]

    def parse_call(self):
        t = self.expect("ident")
        self.expect_op("(")
        args = []
        if not self.at_op(")"):
            while True:
                args.append(self.parse_expr())
                if not self.accept("op", ","):
                    break
        self.expect_op(")")
        self.expect_op(";")
        self.calls.append((self.proc.name if self.proc else None, t.value, t))
        if t.value in self.procs:
            want = len(self.procs[t.value].params)
            if want != len(args):
                raise self.error(f"type mismatch: {t.value} takes {want} arguments, got {len(args)}", t)
        else:
            self.pending_arity = getattr(self, "pending_arity", [])
            self.pending_arity.append((t, len(args)))
        return A.Call(t.value, args, line=t.line, col=t.col)

    def parse_assign(self):
        t = self.tok
        target = self.parse_unary()
        if not isinstance(target, (A.Name, A.Index, A.Mem)):
            raise self.error("syntax error: expected an assignable expression", t)
        if isinstance(target, A.Name) and target.sym is None:
            raise self.error(f"cannot assign to constant {target.name!r}", t)
        self.expect_op("=")
        value = self.parse_expr()
        return A.Assign(target, value, line=t.line, col=t.col)

    def parse_if(self):
        t = self.expect("keyword", "if")
        self.expect_op("(")
        cond = self.parse_expr()
        self.expect_op(")")
        then = self.parse_body()
        orelse = None
        if self.accept("keyword", "else"):
            orelse = [self.parse_if()] if self.at("keyword", "if") else self.parse_body()
        return A.If(cond, then, orelse, line=t.line, col=t.col)

    def parse_while(self):
        t = self.expect("keyword", "while")
        self.expect_op("(")
        cond = self.parse_expr()
        self.expect_op(")")
        return A.While(cond, self.parse_body(), line=t.line, col=t.col)

    def parse_for(self):
        t = self.expect("keyword", "for")
        self.expect_op("(")
        init = None if self.at_op(";") else self.parse_assign()
        self.expect_op(";")
        cond = A.Num(1) if self.at_op(";") else self.parse_expr()
        self.expect_op(";")
        step = None if self.at_op(")") else self.parse_assign()
        self.expect_op(")")
        return A.For(init, cond, step, self.parse_body(), line=t.line, col=t.col)

    def parse_repeat(self):
        t = self.expect("keyword", "repeat")
        body = self.parse_body()
        self.expect("keyword", "until")
        self.expect_op("(")
        cond = self.parse_expr()
        self.expect_op(")")
        self.expect_op(";")
        return A.Repeat(body, cond, line=t.line, col=t.col)

    def parse_loop(self):
        t = self.expect("keyword", "loop")
        return A.Loop(self.parse_body(), line=t.line, col=t.col)

    # -- expressions ---------------------------------------------------------

    def parse_expr(self, level=0):
        if level == len(_PREC):
            return self.parse_unary()
        left = self.parse_expr(level + 1)
        while self.tok.kind == "op" and self.tok.value in _PREC[level]:
            t = self.tok
            self.pos += 1
            right = self.parse_expr(level + 1)
            left = A.Binary(t.value, left, right, line=t.line, col=t.col)
        return left

    def parse_unary(self):
        t = self.tok
        if self.accept("op", "-"):
            return A.Unary("-", self.parse_unary(), line=t.line, col=t.col)
        if self.accept("op", "!"):
            return A.Unary("!", self.parse_unary(), line=t.line, col=t.col)
        if self.accept("op", "*"):
            return A.Mem("addr", self.parse_unary(), line=t.line, col=t.col)
        if self.accept("op", "&"):
            n = self.expect("ident")
            sym = self.lookup(n.value, n)
            idx = None
            if self.accept("op", "["):
                if not sym.is_array:
                    raise self.error(f"type mismatch: {n.value!r} is not an array", n)
                idx = self.parse_expr()
                self.expect_op("]")
            return A.AddrOf(n.value, idx, sym, line=t.line, col=t.col)
        if self.accept("keyword", "signed"):
            self.expect_op("(")
            e = self.parse_expr()
            self.expect_op(")")
            return A.Unary("signed", e, line=t.line, col=t.col)
        return self.parse_primary()

    def parse_primary(self):
        t = self.tok
        if self.accept("number"):
            return A.Num(t.value, line=t.line, col=t.col)
        if self.accept("op", "("):
            e = self.parse_expr()
            self.expect_op(")")
            return e
        if self.accept("keyword", "leak"):
            self.expect_op("(")
            n = self.expect("ident")
            self.expect_op(")")
            return A.Leak(n.value, line=t.line, col=t.col)
        if t.kind == "keyword" and t.value in TYPES:
            self.pos += 1
            self.expect_op("[")
            a = self.parse_expr()
            self.expect_op("]")
            return A.Mem(t.value, a, line=t.line, col=t.col)
        if self.accept("ident"):
            name = t.value
            if self.at_op("["):
                self.pos += 1
                sym = self.lookup(name, t)
                if not sym.is_array:
                    raise self.error(f"type mismatch: {name!r} is not an array", t)
                idx = self.parse_expr()
                self.expect_op("]")
                return A.Index(name, idx, sym, line=t.line, col=t.col)
            if name in self.constants and not (self.scope and name in self.scope) \
                    and name not in self.globals:
                return A.Num(self.constants[name], line=t.line, col=t.col)
            sym = self.lookup(name, t)
            if sym.is_array:
                raise self.error(f"type mismatch: array {name!r} used as a scalar", t)
            return A.Name(name, sym, line=t.line, col=t.col)
        raise self.error(f"syntax error: unexpected {str(t)!r}")


def fold(e):
    """Value of a constant expression, or None."""
    if isinstance(e, A.Num):
        return e.value
    if isinstance(e, A.Unary) and e.op == "-":
        v = fold(e.operand)
        return None if v is None else -v
    if isinstance(e, A.Binary) and e.op in A.ARITH:
        a, b = fold(e.left), fold(e.right)
        if a is None or b is None:
            return None
        return {"+": a + b, "-": a - b, "*": a * b, "&": a & b, "|": a | b}[e.op]
    return None


def parse_payload(src):
    """Parse and check a script; raises SlangError with line/column on failure."""
    p = Parser(src)
    ast = p.parse()
    for t, n in getattr(p, "pending_arity", []):
        want = len(ast.procs[t.value].params)
        if want != n:
            raise p.error(f"type mismatch: {t.value} takes {want} arguments, got {n}", t)
    return ast
