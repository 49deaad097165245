import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def ten_notes_text() -> str:
    return (FIXTURES / "ten_notes.json").read_text()


@pytest.fixture(scope="session")
def lexicon_text() -> str:
    return (FIXTURES / "lexicon.txt").read_text()


@pytest.fixture(scope="session")
def adversarial_instances() -> list[dict]:
    return json.loads((FIXTURES / "adversarial_family.json").read_text())
