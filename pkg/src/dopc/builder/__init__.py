"""Structure builder: solve data requirements into a patchable image."""

from .image import (
    SolvedStructure, assemble, concretize, format_map, load_structure, parse_image, parse_map,
    save_structure,
)
from .layout import Layout, plan_layout
from .solver import solve_all, solve_instance
from .terms import ConstRef, Val, parse_val
from .verify import VerifyReport, default_leaks, verify


def solve(req, cache=True, backend=None):
    """Solve every instance of ``req`` and serialize the result.

    ``backend`` may replace the built-in placement search; it receives the
    requirements and must return one ``SlotSolution`` per instance.
    """
    if backend is None:
        sols, _ = solve_all(req, cache=cache)
    else:
        sols = backend(req)
    data, holes = req.layout.data_bytes()
    blocks = [inst.block for inst in req.instances]
    return assemble(data, holes, sols, blocks, req.target)


__all__ = [
    "ConstRef", "Layout", "SolvedStructure", "Val", "VerifyReport", "assemble", "concretize",
    "default_leaks", "format_map", "load_structure", "parse_image", "parse_map", "parse_val",
    "plan_layout", "save_structure", "solve", "solve_all", "solve_instance", "verify",
]
