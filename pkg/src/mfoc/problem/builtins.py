"""The three bundled example problems."""

from __future__ import annotations

from importlib import resources

from ..errors import ProblemFileError
from .spec import ProblemSpec, parse_problem_text

BUILTIN_NAMES = ("ex1", "ex2", "ex3")


def builtin_text(name: str) -> str:
    if name not in BUILTIN_NAMES:
        raise ProblemFileError(f"unknown built-in problem {name!r} (expected one of {', '.join(BUILTIN_NAMES)})")
    return resources.files("mfoc.problem").joinpath("data", f"{name}.toml").read_text(encoding="utf-8")


def builtin(name: str) -> ProblemSpec:
    return parse_problem_text(builtin_text(name))
