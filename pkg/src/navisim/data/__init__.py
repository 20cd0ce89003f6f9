"""Bundled reference scenario."""

from importlib import resources


def path(name: str) -> str:
    return str(resources.files(__name__).joinpath(name))


def reference_config_path() -> str:
    return path("reference.cfg")


def reference_config():
    from ..config import load_config
    return load_config(reference_config_path())
