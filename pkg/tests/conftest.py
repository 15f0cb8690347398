from __future__ import annotations

from pathlib import Path

import pytest

from recurrent_scribe import (
    EngineSettings,
    MockProvider,
    MockScript,
    RecurrenceEngine,
    SessionMeta,
)


@pytest.fixture
def writer_meta() -> SessionMeta:
    return SessionMeta(
        title="The Harbor Light",
        genre="mystery",
        background=("An old lighthouse keeper notices strange lights moving "
                    "beneath the harbor at night, and nobody in town believes her."),
    )


@pytest.fixture
def fiction_meta() -> SessionMeta:
    return SessionMeta(
        title="The Harbor Light",
        genre="mystery",
        background=("You are the new lighthouse keeper. On your first night the "
                    "harbor lights start moving beneath the water."),
        mode="fiction",
    )


@pytest.fixture
def mock_engine() -> RecurrenceEngine:
    return RecurrenceEngine(MockProvider(MockScript(seed=0)))


@pytest.fixture
def fresh_session(mock_engine, writer_meta, tmp_path: Path):
    return mock_engine.init_session(writer_meta, seed=42,
                                    store_dir=tmp_path / "memory")
