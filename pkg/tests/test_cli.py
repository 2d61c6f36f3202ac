import os
import shutil
import subprocess
import sys

import pytest

from dopc.cli import EXIT_COMPILE, EXIT_OK, EXIT_RUN, EXIT_SOLVE, EXIT_USAGE, main
from dopc.payloads.scenarios import script_path
from dopc.vm.descriptor import target_dir

SMALL = "int32 x;\nint32 y = 5;\nproc main() { x = y + 1; }\n"


@pytest.fixture
def work(tmp_path):
    (tmp_path / "small.slang").write_text(SMALL)
    shutil.copy(script_path("relocator"), tmp_path / "relocator.slang")
    return tmp_path


def test_compile_writes_every_stage(work, capsys):
    assert main(["compile", str(work / "small.slang"), "--target", "interp"]) == EXIT_OK
    written = capsys.readouterr().out.split()
    names = sorted(os.path.basename(p) for p in written)
    assert names == sorted(f"small.{e}" for e in
                           ("hlasm", "llasm", "reqs", "dopimg", "dopmap", "dopsym"))


def test_emit_stops_early(work, capsys):
    out = work / "o"
    assert main(["compile", str(work / "small.slang"), "--target", "interp", "--emit", "hlasm",
                 "--out", str(out)]) == EXIT_OK
    assert sorted(os.listdir(out)) == ["small.hlasm"]


def test_protocol_emit(work, capsys):
    args = ["compile", str(work / "small.slang"), "--target", "interp", "--emit", "protocol"]
    assert main(args) == EXIT_USAGE
    assert "no protocol" in capsys.readouterr().err
    assert main(args + ["--mode", "branch-free"]) == EXIT_OK
    assert (work / "small.protocol").read_text() == "(1)\n"


def test_compiles_are_byte_identical(work, capsys):
    src = work / "relocator.slang"
    blobs = []
    for k in range(2):
        out = work / f"run{k}"
        assert main(["compile", str(src), "--target", "interactive", "--out", str(out)]) == EXIT_OK
        blobs.append({n: (out / n).read_bytes() for n in sorted(os.listdir(out))})
    assert blobs[0] == blobs[1]
    assert "relocator.protocol" in blobs[0]


def test_run_relocator_with_leak(work, capsys):
    src = work / "relocator.slang"
    assert main(["compile", str(src), "--target", "interp"]) == EXIT_OK
    capsys.readouterr()
    img = str(work / "relocator.dopimg")
    code = main(["run", img, "--target", "interp", "--fixture", "relocator",
                 "--leak", "code_ptr=8048123", "--dump", "chain", "--dump-mem", "0x1c0000:8"])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert "status: ok" in out
    base = 0x8048123 - 0x4a3c
    want = [base + 0x1000 + 0x37 * i for i in range(8)] + [0] * 8
    assert f"chain = {want}" in out
    assert "001c0000: 08 00 00 00 00 10 00 00" in out


def test_run_interactive_over_socket(work, capsys):
    src = work / "small.slang"
    assert main(["compile", str(src), "--target", "interactive"]) == EXIT_OK
    capsys.readouterr()
    assert main(["run", str(work / "small.dopimg"), "--target", "interactive", "--socket",
                 "--dump", "x"]) == EXIT_OK
    assert "x = 6" in capsys.readouterr().out


def test_exit_usage(work, capsys):
    assert main(["compile", str(work / "small.slang"), "--target", "nosuch"]) == EXIT_USAGE
    assert main(["compile", str(work / "missing.slang"), "--target", "interp"]) == EXIT_USAGE
    assert main(["compile", str(work / "small.slang"), "--target", "interp",
                 "--mode", "turbo"]) == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["run", "x.dopimg", "--target", "interp", "--leak", "nonsense"])
    assert e.value.code == EXIT_USAGE


def test_exit_compile(work, capsys):
    (work / "bad.slang").write_text("proc main() { x = 1; }\n")
    assert main(["compile", str(work / "bad.slang"), "--target", "interp"]) == EXIT_COMPILE
    err = capsys.readouterr().err
    assert err.startswith("error [compile]: 1:15:") and "undeclared identifier 'x'" in err


def test_exit_solve(work, capsys):
    bad = work / "zerofree"
    shutil.copytree(target_dir("moveonly"), bad)
    with open(bad / "target.desc", "a") as fh:
        fh.write("forbidden_bytes = 0x00\n")
    assert main(["compile", str(work / "small.slang"), "--target", str(bad)]) == EXIT_SOLVE
    assert "error [solve]" in capsys.readouterr().err


def test_exit_run_on_missing_leak(work, capsys):
    assert main(["compile", str(work / "relocator.slang"), "--target", "interp"]) == EXIT_OK
    code = main(["run", str(work / "relocator.dopimg"), "--target", "interp",
                 "--fixture", "relocator"])
    assert code == EXIT_RUN
    assert "no binding for leak(code_ptr)" in capsys.readouterr().err


def test_exit_run_on_fuel(work, capsys):
    assert main(["compile", str(work / "relocator.slang"), "--target", "interp"]) == EXIT_OK
    code = main(["run", str(work / "relocator.dopimg"), "--target", "interp", "--fixture",
                 "relocator", "--leak", "code_ptr=8048123", "--fuel", "10"])
    assert code == EXIT_RUN
    captured = capsys.readouterr()
    assert "status: fuel exhausted" in captured.out and "fuel exhausted" in captured.err


def test_console_script(work):
    exe = shutil.which("dopc")
    cmd = [exe] if exe else [sys.executable, "-c", "import sys; from dopc.cli import main; "
                                                   "sys.exit(main())"]
    p = subprocess.run(cmd + ["compile", str(work / "small.slang"), "--target", "moveonly",
                              "--emit", "llasm"], capture_output=True, text=True)
    assert p.returncode == 0, p.stderr
    assert (work / "small.llasm").exists()
