import shutil
from pathlib import Path

import pytest
from hypothesis import settings

import parthenos

FIXTURES = Path(parthenos.__file__).parent / "fixtures"
SCENARIO_FILES = [FIXTURES / "scenarios" / f"s{i}.json" for i in range(1, 5)]
REPOS = ("library", "scenario1", "scenario2", "scenario3")

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture
def copy_repo(tmp_path):
    """Copy a bundled repository into the test's temp dir and return its path."""

    def _copy(name: str) -> Path:
        dst = tmp_path / name
        shutil.copytree(FIXTURES / name, dst)
        return dst

    return _copy


def snapshot(root: Path) -> dict[str, bytes]:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
