"""Values that appear in data requirements.

``Val`` is an affine address or constant, ``leak(name) + const``; with
``leak=None`` it is a plain integer. ``ConstRef`` stands for the address of
a cell holding ``value``; where that cell lives (constant pool or the
instance's own buffer) is the solver's business.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class Val:
    const: int
    leak: str = None

    def __add__(self, k):
        return Val(self.const + k, self.leak)

    def __sub__(self, k):
        return Val(self.const - k, self.leak)

    @property
    def concrete(self):
        return self.leak is None

    def resolve(self, leaks):
        if self.leak is None:
            return self.const
        if self.leak not in leaks:
            raise KeyError(self.leak)
        return leaks[self.leak] + self.const

    def __str__(self):
        if self.leak is None:
            return f"{self.const:#x}"
        k = self.const
        return f"leak({self.leak})" + (f"+{k}" if k > 0 else (f"{k}" if k else ""))


@dataclass(frozen=True)
class ConstRef:
    value: object          # Val or ConstRef
    width: int
    addend: int = 0        # the term is the cell address plus this

    def __add__(self, k):
        return ConstRef(self.value, self.width, self.addend + k)

    def __sub__(self, k):
        return ConstRef(self.value, self.width, self.addend - k)

    def __str__(self):
        a = self.addend
        return f"&[{self.value}:{self.width}]" + (f"+{a}" if a > 0 else (f"{a}" if a else ""))


def parse_val(text):
    """Inverse of ``str(Val)``."""
    text = text.strip()
    if text.startswith("leak("):
        name, rest = text[5:].split(")", 1)
        return Val(int(rest, 0) if rest else 0, name)
    return Val(int(text, 0))
