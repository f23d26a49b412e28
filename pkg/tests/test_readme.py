"""The README examples run as written."""

import doctest
import re
import shlex
import subprocess
import sys
from pathlib import Path

import pytest

README = Path(__file__).resolve().parent.parent / "README.md"
COMMANDS = re.findall(r"^\$ (witnesscert .+)$", README.read_text(encoding="utf-8"), flags=re.M)


def test_python_snippets():
    result = doctest.testfile(str(README), module_relative=False, optionflags=doctest.ELLIPSIS)
    assert result.attempted > 0
    assert result.failed == 0


def test_commands_found():
    assert len(COMMANDS) >= 8


def test_commands_run(tmp_path):
    # run in order; analyze reads the file that simulate wrote
    for line in COMMANDS:
        argv = shlex.split(line)[1:]
        proc = subprocess.run(
            [sys.executable, "-m", "witnesscert.cli", *argv], cwd=tmp_path, capture_output=True, text=True
        )
        assert proc.returncode == 0, f"{line}\n{proc.stderr}"
        assert proc.stdout.strip(), line


@pytest.mark.parametrize("sub", ["gamma --tau 1e-6 --delta 2e-3", "ci --n 600 --w-hat -0.182", "presets"])
def test_json_flag(sub, tmp_path):
    import json

    proc = subprocess.run(
        [sys.executable, "-m", "witnesscert.cli", "--json", *sub.split()], cwd=tmp_path, capture_output=True, text=True
    )
    assert proc.returncode == 0, proc.stderr
    json.loads(proc.stdout)
