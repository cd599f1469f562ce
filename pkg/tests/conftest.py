import numpy as np
import pytest

from har.data import rng_from


@pytest.fixture
def rng():
    return rng_from(1234, "tests")


@pytest.fixture
def write_csv(tmp_path):
    """Write rows to a temp CSV and return its path."""

    def _write(name, header, rows):
        path = tmp_path / name
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(str(c) for c in row))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return str(path)

    return _write
