"""Shared test fixtures: parsed corpus applications and paths."""

from __future__ import annotations

from pathlib import Path

import pytest

from osekcheck.oil_config import parse_oil
from osekcheck.task_lang import parse_task_file

CORPUS = Path(__file__).resolve().parent.parent / "corpus"

EMS_OIL = CORPUS / "ems.oil"
EMS_REPAIRED_OIL = CORPUS / "ems_repaired.oil"
EMS_TSK = CORPUS / "ems.tsk"
EMS_LTL = CORPUS / "ems.ltl"
EMS_REPORT = CORPUS / "ems_tests.report"
EMS_PROPS = CORPUS / "ems.props"


def _load(oil_path: Path):
    config = parse_oil(oil_path.read_text())
    bodies = parse_task_file(EMS_TSK.read_text(), config)
    return config, bodies


@pytest.fixture(scope="session")
def ems_app():
    return _load(EMS_OIL)


@pytest.fixture(scope="session")
def ems_repaired_app():
    return _load(EMS_REPAIRED_OIL)
