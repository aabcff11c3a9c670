import os

HERE = os.path.dirname(__file__)


def golden_path(name: str) -> str:
    return os.path.join(HERE, "golden", name)


def example_path(name: str) -> str:
    return os.path.join(HERE, os.pardir, "examples", name)
