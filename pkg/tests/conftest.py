"""Shared fixtures and the acceptance summary printed at the end of a run."""

import numpy as np
import pytest

from uavtrack.geometry import CameraIntrinsics

_verdicts: list[tuple[str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        verdict = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _verdicts.append((marker.args[0], verdict, item.name))


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    grouped: dict[str, list[tuple[str, str]]] = {}
    for label, verdict, name in _verdicts:
        grouped.setdefault(label, []).append((verdict, name))
    terminalreporter.section("acceptance criteria")
    for label in sorted(grouped):
        results = grouped[label]
        failed = [name for verdict, name in results if verdict == "FAIL"]
        if failed:
            line = f"FAIL  {label}  ({', '.join(failed)})"
        elif all(verdict == "PASS" for verdict, _ in results):
            line = f"PASS  {label}  ({len(results)} check{'s' if len(results) > 1 else ''})"
        else:
            line = f"SKIP  {label}"
        terminalreporter.write_line(line)


@pytest.fixture
def intr() -> CameraIntrinsics:
    return CameraIntrinsics()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)
