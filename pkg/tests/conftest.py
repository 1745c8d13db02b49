import numpy as np
import pytest

from gandec.codes import LinearCode, bch_code, hamming_7_4


@pytest.fixture(scope="session")
def hamming() -> LinearCode:
    return hamming_7_4()


@pytest.fixture(scope="session")
def bch15() -> LinearCode:
    return bch_code(4, 1)


@pytest.fixture(scope="session")
def bch63() -> LinearCode:
    return bch_code(6, 3)


@pytest.fixture(scope="session")
def tree_code() -> LinearCode:
    """Length-7 cycle-free code with even-degree checks; BP is exact on it."""
    h = np.array(
        [
            [1, 1, 1, 1, 0, 0, 0],
            [0, 0, 0, 1, 1, 1, 1],
        ],
        dtype=np.uint8,
    )
    from gandec.gf2 import generator_from_parity

    return LinearCode(name="tree7_5", n=7, k=5, H=h, G=generator_from_parity(h))
