import textwrap

import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte-Carlo acceptance checks that take minutes")


@pytest.fixture
def write_config(tmp_path):
    """Write a TOML experiment config under tmp_path and return its path."""
    def write(text: str, name: str = "experiment.toml") -> str:
        path = tmp_path / name
        path.write_text(textwrap.dedent(text), encoding="utf-8")
        return str(path)
    return write
