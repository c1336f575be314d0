#!/usr/bin/env python
"""Tests for recsim."""

import re
from pathlib import Path

import tomllib

import recsim
from recsim import __version__
from recsim.repro import PROFILES, ReproRunner


def test_version():
    """Test version consistency between pyproject.toml and package."""
    pyproject_path = Path(__file__).parent.parent / "pyproject.toml"
    with open(pyproject_path, "rb") as f:
        pyproject_data = tomllib.load(f)
    pyproject_version = pyproject_data["project"]["version"]

    assert __version__ == pyproject_version
    assert re.match(r"^\d+\.\d+\.\d+$", __version__) is not None


def test_public_api():
    """Test the package exports its entry points."""
    for name in recsim.__all__:
        assert hasattr(recsim, name)


def test_repro_profiles():
    """Test the desk profile is smaller than the full one."""
    assert PROFILES["desk"].trace_length < PROFILES["full"].trace_length
    assert PROFILES["full"].replicates == 3


def test_repro_runner_registers_checks(tmp_path):
    """Test every acceptance check is registered."""
    runner = ReproRunner(PROFILES["desk"], tmp_path)
    assert len(runner.checks) == 13
    assert "md1-oracle" in runner.checks
    assert "distribution-sensitivity" in runner.checks


def test_repro_runner_format_results(tmp_path):
    """Test result formatting marks passes and failures."""
    runner = ReproRunner(PROFILES["desk"], tmp_path)
    results = runner.run(["percentile-exactness", "arrival-moments"])

    formatted = runner.format_results(results)
    assert "PASS percentile-exactness" in formatted
    assert "PASS arrival-moments" in formatted
    assert "2/2 checks passed (desk profile)" in formatted
