from .ir import AsmProgram, Directive, Instruction, LabelDef, Operand, VarDecl
from .interp import MemoryImage, interpret, layout_memory
from .macros import expand_macros
from .parser import format_asm, parse_asm

__all__ = [
    "AsmProgram", "Directive", "Instruction", "LabelDef", "Operand", "VarDecl",
    "MemoryImage", "interpret", "layout_memory", "expand_macros", "format_asm", "parse_asm",
]
