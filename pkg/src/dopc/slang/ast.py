"""Syntax tree of payload scripts."""

from dataclasses import dataclass, field


@dataclass
class Symbol:
    name: str            # source name
    mangled: str         # name in the emitted program
    kind: str            # byte, int16, int32, int64, addr
    count: int = None    # element count for arrays
    address: int = None
    init: tuple = None   # static initial values (ints or Expr for scalars)
    is_global: bool = True

    @property
    def is_array(self):
        return self.count is not None


# expressions ---------------------------------------------------------------

@dataclass
class Expr:
    line: int = field(default=0, kw_only=True)
    col: int = field(default=0, kw_only=True)


@dataclass
class Num(Expr):
    value: int


@dataclass
class Name(Expr):
    name: str
    sym: Symbol = None


@dataclass
class Index(Expr):
    name: str
    index: Expr
    sym: Symbol = None


@dataclass
class Mem(Expr):
    kind: str
    addr: Expr


@dataclass
class AddrOf(Expr):
    name: str
    index: Expr = None
    sym: Symbol = None


@dataclass
class Leak(Expr):
    name: str
    offset: int = 0


@dataclass
class Unary(Expr):
    op: str              # "-", "!", "signed"
    operand: Expr


@dataclass
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


ARITH = ("+", "-", "*", "&", "|")
COMPARE = ("==", "!=", ">=", "<", ">", "<=")


# statements ----------------------------------------------------------------

@dataclass
class Stmt:
    line: int = field(default=0, kw_only=True)
    col: int = field(default=0, kw_only=True)


@dataclass
class Assign(Stmt):
    target: Expr
    value: Expr


@dataclass
class Local(Stmt):
    sym: Symbol
    value: Expr = None       # dynamic initializer for scalars


@dataclass
class If(Stmt):
    cond: Expr
    then: list
    orelse: list = None


@dataclass
class While(Stmt):
    cond: Expr
    body: list
    maxiter: int = None


@dataclass
class For(Stmt):
    init: Stmt
    cond: Expr
    step: Stmt
    body: list
    maxiter: int = None


@dataclass
class Repeat(Stmt):
    body: list
    cond: Expr
    maxiter: int = None


@dataclass
class Loop(Stmt):
    body: list
    maxiter: int = None


@dataclass
class Break(Stmt):
    pass


@dataclass
class Continue(Stmt):
    pass


@dataclass
class Call(Stmt):
    name: str
    args: list


@dataclass
class Asm(Stmt):
    text: str


@dataclass
class Proc:
    name: str
    params: list          # Symbols
    body: list
    line: int = 0
    symbols: dict = field(default_factory=dict)


@dataclass
class PayloadAst:
    globals: list         # Symbols in declaration order
    procs: dict
    entry: str = "main"
    constants: dict = field(default_factory=dict)   # name_len values
