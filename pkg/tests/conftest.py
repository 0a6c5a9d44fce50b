import pytest

from bafusion.tensor import reset_graph


@pytest.fixture(autouse=True)
def clean_graph():
    """Each test starts and ends with an empty op graph."""
    reset_graph()
    yield
    reset_graph()
