"""Bundled PolyBench-style kernels transcribed to the loop DSL."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..frontend import parse

__all__ = ["directory", "names", "source", "load", "load_all"]


def directory() -> Path:
    return Path(str(resources.files(__package__)))


def names() -> list[str]:
    return sorted(p.stem for p in directory().glob("*.loop"))


def source(name: str) -> str:
    return (directory() / f"{name}.loop").read_text(encoding="utf-8")


def load(name: str):
    return parse(source(name), f"{name}.loop")


def load_all() -> dict:
    return {n: load(n) for n in names()}
