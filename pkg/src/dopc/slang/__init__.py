"""The payload language: parser, compiler to HL-DOP-asm and a reference evaluator."""

from .compiler import compile_to_hl_asm
from .evaluator import EvalResult, evaluate
from .parser import parse_payload

__all__ = ["parse_payload", "compile_to_hl_asm", "evaluate", "EvalResult"]
