import os
import pathlib

import pytest

SMALL = {
    "corpus": {"n_scenes": 120, "n_heldout": 20},
    "train": {"batch_size": 8, "feedback": {"total_steps": 24, "c": 0.5}},
    "decode": {"max_new_tokens": 12, "beam_width": 3},
    "pope_questions": 2,
}


@pytest.fixture
def small():
    import copy

    return copy.deepcopy(SMALL)


@pytest.fixture(scope="session")
def helpd_bin():
    path = os.environ.get("HELPD_BIN")
    if not path or not pathlib.Path(path).exists():
        pytest.skip("HELPD_BIN not set")
    return str(pathlib.Path(path).resolve())
