"""Command-line front end: ``dopc compile`` and ``dopc run``."""

import argparse
import os
import sys

from .builder import load_structure
from .errors import (
    ConcretizeError, DopError, InterpError, SolveError, TargetError, VmError,
)
from .pipeline import MODES, STAGES, UsageError, build, parse_symbols, write_artifacts
from .transforms.protocol import parse_protocol
from .vm.descriptor import load_target
from .vm.driver import drive

EXIT_OK, EXIT_USAGE, EXIT_COMPILE, EXIT_SOLVE, EXIT_RUN = 0, 2, 3, 4, 5


def exit_code(err):
    if isinstance(err, UsageError):
        return EXIT_USAGE
    if isinstance(err, SolveError):
        return EXIT_SOLVE
    if isinstance(err, (ConcretizeError, VmError, InterpError)):
        return EXIT_RUN
    return EXIT_COMPILE


def _leak(text):
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected NAME=HEX, got {text!r}")
    try:
        return name, int(value, 16)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad hex value in {text!r}") from None


def _range(text):
    a, sep, n = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected ADDR:LEN, got {text!r}")
    return int(a, 0), int(n, 0)


def _target(name):
    try:
        return load_target(name)
    except TargetError as e:
        raise UsageError(str(e)) from None


def make_parser():
    p = argparse.ArgumentParser(prog="dopc", description="Compile payload scripts into DOP data structures.")
    sub = p.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("compile", help="run the pipeline up to an emit stage")
    c.add_argument("script")
    c.add_argument("--target", required=True, help="target directory or shipped target name")
    c.add_argument("--mode", default="", help=f"comma-separated subset of {', '.join(MODES)}")
    c.add_argument("--emit", default="image", choices=STAGES)
    c.add_argument("--out", default=None, help="output directory (default: next to the script)")
    c.add_argument("--maxiter-default", type=int, default=0,
                   help="iteration bound for unannotated loops (0 = require annotations)")
    c.add_argument("--strategy", default="auto", choices=("auto", "cond", "mul", "index"),
                   help="branch-free guard strategy")

    r = sub.add_parser("run", help="concretize an image and execute it on a simulated target")
    r.add_argument("image")
    r.add_argument("--target", required=True)
    r.add_argument("--protocol", default=None, help="protocol file (default: <image>.protocol)")
    r.add_argument("--leak", type=_leak, action="append", default=[], metavar="NAME=HEX")
    r.add_argument("--dump", action="append", default=[], metavar="VAR", help="print a variable")
    r.add_argument("--dump-mem", type=_range, action="append", default=[], metavar="ADDR:LEN")
    r.add_argument("--fixture", default=None, help="plant the inputs of a shipped scenario")
    r.add_argument("--fuel", type=int, default=50_000_000)
    r.add_argument("--socket", action="store_true", help="send packets over a localhost socket")
    return p


def cmd_compile(args, out=None):
    out = out or sys.stdout
    target = _target(args.target)
    with open(args.script) as fh:
        source = fh.read()
    stop = "image" if args.emit == "protocol" else args.emit
    b = build(source, target, args.mode, args.maxiter_default, stop=stop, strategy=args.strategy)
    if args.emit == "protocol" and b.protocol is None:
        raise UsageError("no protocol: enable the branch-free or interactive mode")
    out_dir = args.out or os.path.dirname(os.path.abspath(args.script))
    stem = os.path.splitext(os.path.basename(args.script))[0]
    for path in write_artifacts(b, out_dir, stem, args.emit):
        print(path, file=out)
    return EXIT_OK


def cmd_run(args, out=None):
    from .payloads import default_fixture

    out = out or sys.stdout
    target = _target(args.target)
    s = load_structure(args.image)
    stem = os.path.splitext(args.image)[0]
    protocol = None
    ppath = args.protocol or stem + ".protocol"
    if os.path.exists(ppath):
        with open(ppath) as fh:
            protocol = parse_protocol(fh.read())
    leaks = dict(args.leak)
    base = leaks.setdefault(target.relative, 0x40000000) if target.relative else 0
    plant = default_fixture(args.fixture).plant(target, base) if args.fixture else None
    channel = None
    if args.socket:
        from .vm.channel import PacketChannel

        channel = PacketChannel(socket=True)
    try:
        m, r = drive(target, s, protocol, leaks=leaks, fixture=plant, fuel=args.fuel,
                     channel=channel, strict=True)
    finally:
        if channel is not None:
            channel.close()
    print(f"status: {r.status_name}", file=out)
    print(f"gadgets: {r.steps}", file=out)
    if args.dump:
        spath = stem + ".dopsym"
        if not os.path.exists(spath):
            raise UsageError(f"--dump needs the symbol file {spath}")
        with open(spath) as fh:
            syms = parse_symbols(fh.read())
        for name in args.dump:
            if name not in syms:
                raise UsageError(f"unknown variable {name!r}")
            w, n, addr = syms[name]
            a = addr.resolve(m.leaks)
            vals = [r.read(a + k * w, w) for k in range(n)]
            shown = vals[0] if n == 1 else vals
            print(f"{name} = {shown}", file=out)
    for a, n in args.dump_mem:
        print(r.dump(a + m.base, n), file=out)
    if not r.ok:
        raise VmError(f"target stopped with {r.status_name} after {r.steps} gadgets")
    return EXIT_OK


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if args.cmd == "compile":
            return cmd_compile(args)
        return cmd_run(args)
    except DopError as e:
        print(f"error [{e.stage}]: {e}", file=sys.stderr)
        return exit_code(e)
    except OSError as e:
        print(f"error [io]: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
