"""Fingerprint-keyed recipe database."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Callable, Optional, Sequence

from ..canonical import MODES, match_key
from ..deps import perfect_band
from ..ir import FORMAT_VERSION, Loop, Node, Program, node_at
from .idioms import detect_idiom
from .transforms import (IllegalStep, KeyMismatch, MarkParallel, MarkVectorize, ReplaceIdiom,
                         Tile, Transform, apply_step, apply_steps, step_from_json, step_to_json)

__all__ = ["Recipe", "RecipeDatabase", "DuplicateKey", "DatabaseFormatError", "apply",
           "default_recipe", "apply_database"]


class DuplicateKey(ValueError):
    pass


class DatabaseFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Recipe:
    key: Optional[int]  # None: program-scoped, absolute paths
    steps: tuple[Transform, ...]
    mode: str = "shape"
    provenance: str = ""

    @property
    def key_hex(self) -> Optional[str]:
        return None if self.key is None else f"{self.key:016x}"

    def to_json(self) -> dict:
        return {"key_hex": self.key_hex, "mode": self.mode,
                "steps": [step_to_json(s) for s in self.steps], "provenance": self.provenance}

    @classmethod
    def from_json(cls, d: dict) -> "Recipe":
        if not isinstance(d, dict):
            raise DatabaseFormatError(f"entry must be an object, not {type(d).__name__}")
        unknown = set(d) - {"key_hex", "mode", "steps", "provenance"}
        if unknown:
            raise DatabaseFormatError(f"unknown field {sorted(unknown)[0]!r} in entry")
        try:
            key = None if d.get("key_hex") is None else int(d["key_hex"], 16)
            mode = d.get("mode", "shape")
            if mode not in MODES:
                raise ValueError(f"unknown mode {mode!r}")
            steps = tuple(step_from_json(s) for s in d["steps"])
        except (KeyError, ValueError, TypeError) as exc:
            raise DatabaseFormatError(f"bad entry: {exc}") from None
        return cls(key, steps, mode, str(d.get("provenance", "")))


def _nest_matches(recipe: Recipe, nest: Node, program: Program) -> bool:
    return recipe.key is not None and match_key(nest, program, recipe.mode) == recipe.key


def apply(recipe: Recipe, program: Program) -> Program:
    """Apply a recipe to every top-level nest whose key matches it (or to the
    whole program for a program-scoped recipe)."""
    if recipe.key is None:
        return apply_steps(program, recipe.steps)
    hits = [k for k, nest in enumerate(program.top) if _nest_matches(recipe, nest, program)]
    if not hits:
        raise KeyMismatch(f"no nest matches key {recipe.key_hex}")
    for k in hits:
        program = apply_steps(program, recipe.steps, (k,))
    return program


def default_recipe(nest: Node, program: Program, tile_size: int = 4) -> tuple[Transform, ...]:
    """A hand-rule recipe: library call for idioms, otherwise tile the band,
    mark the outermost loop parallel and the innermost loop vector where legal."""
    if detect_idiom(nest) is not None:
        return (ReplaceIdiom(detect_idiom(nest)),)
    if not isinstance(nest, Loop):
        return ()
    k = list(program.top).index(nest)
    scratch = program
    steps: list[Transform] = []

    def attempt(step: Transform) -> None:
        nonlocal scratch
        try:
            scratch = apply_step(scratch, step, (k,))
            steps.append(step)
        except IllegalStep:
            pass

    band = perfect_band(program, (k,))
    if len(band) >= 2:
        attempt(Tile((), tile_size))
    attempt(MarkParallel(()))
    path: tuple[int, ...] = ()
    node = node_at(scratch.top, (k,))
    while any(isinstance(c, Loop) for c in node.body):
        c = next(i for i, c in enumerate(node.body) if isinstance(c, Loop))
        path += (c,)
        node = node.body[c]
    if path:
        attempt(MarkVectorize(path))
    return tuple(steps)


@dataclass
class RecipeDatabase:
    entries: dict[tuple[int, str], Recipe] = field(default_factory=dict)

    def insert(self, recipe: Recipe) -> None:
        k = (recipe.key, recipe.mode)
        old = self.entries.get(k)
        if old is not None and old.steps != recipe.steps:
            raise DuplicateKey(f"key {recipe.key_hex} already holds a different recipe "
                               f"({old.provenance})")
        if old is None:
            self.entries[k] = recipe

    def seed(self, programs: Sequence[Program],
             recipes: Optional[Sequence[Optional[Sequence[Sequence[Transform]]]]] = None,
             mode: str = "shape", names: Optional[Sequence[str]] = None,
             builder: Callable[[Node, Program], tuple] = default_recipe) -> int:
        """Insert one recipe per top-level nest of every (normalized) program.

        ``recipes[i]``, when given, lists the step sequence for each nest of
        ``programs[i]``; otherwise ``builder`` derives it.  Returns the number
        of nests seeded."""
        count = 0
        for i, prog in enumerate(programs):
            given = recipes[i] if recipes is not None else None
            for j, nest in enumerate(prog.top):
                steps = tuple(given[j]) if given is not None else tuple(builder(nest, prog))
                tag = f"{names[i] if names else f'program {i}'} nest {j}"
                self.insert(Recipe(match_key(nest, prog, mode), steps, mode, tag))
                count += 1
        return count

    def lookup(self, nest: Node, program: Program, mode: str = "shape") -> Optional[Recipe]:
        return self.entries.get((match_key(nest, program, mode), mode))

    def to_json(self) -> dict:
        ordered = sorted(self.entries.values(), key=lambda r: (r.key_hex, r.mode))
        return {"version": FORMAT_VERSION, "entries": [r.to_json() for r in ordered]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1) + "\n"

    def save(self, path) -> None:
        FsPath(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "RecipeDatabase":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DatabaseFormatError(f"{exc.msg} at offset {exc.pos}") from None
        if not isinstance(doc, dict) or set(doc) != {"version", "entries"}:
            raise DatabaseFormatError("database must have exactly 'version' and 'entries'")
        if doc["version"] != FORMAT_VERSION:
            raise DatabaseFormatError(f"unsupported version {doc['version']!r}")
        if not isinstance(doc["entries"], list):
            raise DatabaseFormatError("'entries' must be a list")
        db = cls()
        for d in doc["entries"]:
            r = Recipe.from_json(d)
            if r.key is None:
                raise DatabaseFormatError("database entries need a key")
            if (r.key, r.mode) in db.entries:
                raise DatabaseFormatError(f"duplicate key {r.key_hex}")
            db.entries[(r.key, r.mode)] = r
        return db

    @classmethod
    def load(cls, path) -> "RecipeDatabase":
        return cls.loads(FsPath(path).read_text(encoding="utf-8"))

    def __len__(self) -> int:
        return len(self.entries)


def apply_database(db: RecipeDatabase, program: Program, mode: str = "shape"
                   ) -> tuple[Program, list[Optional[Recipe]]]:
    """Apply the matching recipe to each top-level nest; ``None`` marks misses."""
    found = [db.lookup(nest, program, mode) for nest in program.top]
    for k, r in enumerate(found):
        if r is not None:
            program = apply_steps(program, r.steps, (k,))
    return program, found
