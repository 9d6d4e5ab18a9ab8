from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def cooking_doc() -> str:
    return (DATA / "cooking_tomato_eggs.txt").read_text(encoding="utf-8")
