"""Render-engine abstraction: a deterministic stub engine plus a thin adapter
for the external Manim CLI that degrades to the stub when Manim is absent.
"""

from __future__ import annotations

import hashlib
import random
import re
import shutil
import subprocess
import time
import types
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

DEFAULT_IMPORT_WHITELIST = frozenset({"manim", "numpy", "math", "random"})

TraceEntry = tuple  # (event_id, kind, start, duration, symbols)


class EngineUnavailable(RuntimeError):
    pass


class Timeout(RuntimeError):
    def __init__(self, budget_s: float):
        super().__init__(f"dry run exceeded {budget_s} s budget")
        self.budget_s = budget_s


class EngineFailure(RuntimeError):
    def __init__(self, scene_id, diagnostic: str):
        super().__init__(f"scene {scene_id}: {diagnostic}")
        self.scene_id = scene_id
        self.diagnostic = diagnostic


class DryRunError(RuntimeError):
    """Scene script raised while being constructed."""


class RenderEngine:
    engine_id: str = "abstract"
    version: str = ""
    latex_version: str = ""

    def available(self) -> bool:
        return True

    def check_math(self, fragment: str) -> bool:
        raise NotImplementedError

    def dry_run(self, code_text: str, seed: int, budget_s: float) -> list[TraceEntry]:
        raise NotImplementedError

    def render_scene(self, scene_id: int, code_text: str, seed: int) -> str:
        """Returns a frame-trace digest (stub) or a video path (real engine)."""
        raise NotImplementedError


def _fake_manim_module(trace: list) -> types.ModuleType:
    module = types.ModuleType("manim")

    class Scene:
        def __init__(self):
            pass

        def note_event(self, event_id, kind, start, duration, symbols=()):
            trace.append((str(event_id), str(kind), round(float(start), 6),
                          round(float(duration), 6), tuple(str(s) for s in symbols)))

        def construct(self):
            pass

    module.Scene = Scene
    return module


import builtins as _builtins

_SAFE_BUILTINS = {
    name: getattr(_builtins, name)
    for name in ("abs", "min", "max", "len", "range", "enumerate", "zip", "float", "int",
                 "str", "list", "tuple", "dict", "set", "round", "sum", "sorted", "ValueError",
                 "RuntimeError", "Exception", "isinstance", "print", "object", "staticmethod",
                 "classmethod", "property", "super", "type")
}


class StubEngine(RenderEngine):
    """Executes scene scripts against a fake `manim` shim and records the
    ordered event trace; never renders frames.
    """

    engine_id = "stub"
    version = "1.0"
    latex_version = "mathcheck-1"

    def __init__(self, import_whitelist: frozenset = DEFAULT_IMPORT_WHITELIST):
        self.import_whitelist = import_whitelist

    _MATH_CMD_RE = re.compile(r"\\[a-zA-Z]+")
    _KNOWN_COMMANDS = {
        r"\frac", r"\sqrt", r"\cdot", r"\times", r"\lambda", r"\alpha", r"\beta", r"\theta",
        r"\sum", r"\int", r"\vec", r"\hat", r"\mathbf", r"\left", r"\right", r"\text", r"\pi",
    }

    def check_math(self, fragment: str) -> bool:
        depth = 0
        for ch in fragment:
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth < 0:
                    return False
        if depth != 0:
            return False
        return all(cmd in self._KNOWN_COMMANDS for cmd in self._MATH_CMD_RE.findall(fragment))

    def _exec_once(self, code_text: str, seed: int, budget_s: float) -> list[TraceEntry]:
        trace: list[TraceEntry] = []
        fake_manim = _fake_manim_module(trace)
        whitelist = self.import_whitelist

        def _guarded_import(name, globals=None, locals=None, fromlist=(), level=0):
            root = name.split(".")[0]
            if root == "manim":
                return fake_manim
            if root not in whitelist:
                raise ImportError(f"import of {name!r} is not allowed in scene scripts")
            return __import__(name, globals, locals, fromlist, level)

        namespace = {
            "__builtins__": dict(_SAFE_BUILTINS, __import__=_guarded_import,
                                 __build_class__=_builtins.__build_class__,
                                 __name__="scene_script"),
            "SCENE_SEED": seed,
            "rng": random.Random(seed),
        }
        started = time.monotonic()
        ran_any = False
        try:
            exec(compile(code_text, "<scene>", "exec"), namespace)  # noqa: S102 - sandboxed dry run
            for value in list(namespace.values()):
                if isinstance(value, type) and issubclass(value, fake_manim.Scene) and value is not fake_manim.Scene:
                    instance = value()
                    instance.construct()
                    ran_any = True
        except Exception as exc:  # noqa: BLE001 - surfaced to the validator
            raise DryRunError(f"{type(exc).__name__}: {exc}") from exc
        if not ran_any:
            raise DryRunError("script defines no Scene subclass")
        # No preemption: tiny canned scripts finish in microseconds; the budget
        # only guards against pathological generated loops after the fact.
        if time.monotonic() - started > budget_s:
            raise Timeout(budget_s)
        return trace

    def dry_run(self, code_text: str, seed: int, budget_s: float = 5.0) -> list[TraceEntry]:
        return self._exec_once(code_text, seed, budget_s)

    def render_scene(self, scene_id: int, code_text: str, seed: int) -> str:
        try:
            trace = self.dry_run(code_text, seed)
        except (DryRunError, Timeout) as exc:
            raise EngineFailure(scene_id, str(exc)) from exc
        return trace_digest(trace)


class ManimAdapter(RenderEngine):
    """Shells out to the external `manim` CLI; falls back to the stub engine
    (with a warning) when the binary is missing."""

    engine_id = "manim"

    def __init__(self):
        self._binary = shutil.which("manim")
        self._fallback = StubEngine()
        if self._binary:
            out = subprocess.run([self._binary, "--version"], capture_output=True, text=True)
            self.version = out.stdout.strip() or "unknown"
        else:
            warnings.warn("manim binary not found; degrading to the stub engine", stacklevel=2)
            self.version = f"stub-fallback-{self._fallback.version}"
        self.latex_version = self._fallback.latex_version

    def available(self) -> bool:
        return True

    def check_math(self, fragment: str) -> bool:
        return self._fallback.check_math(fragment)

    def dry_run(self, code_text: str, seed: int, budget_s: float = 120.0) -> list[TraceEntry]:
        return self._fallback.dry_run(code_text, seed, budget_s)

    def render_scene(self, scene_id: int, code_text: str, seed: int) -> str:
        if not self._binary:
            return self._fallback.render_scene(scene_id, code_text, seed)
        import tempfile
        from pathlib import Path

        with tempfile.TemporaryDirectory() as tmp:
            script = Path(tmp) / f"scene_{scene_id}.py"
            script.write_text(code_text)
            proc = subprocess.run([self._binary, "render", "-ql", str(script)],
                                  capture_output=True, text=True, cwd=tmp)
            if proc.returncode != 0:
                raise EngineFailure(scene_id, proc.stderr[-2000:])
            videos = sorted(Path(tmp).rglob("*.mp4"))
            if not videos:
                raise EngineFailure(scene_id, "renderer produced no video output")
            return str(videos[0])


def trace_digest(trace: Sequence[TraceEntry]) -> str:
    h = hashlib.sha256()
    for entry in trace:
        h.update(repr(entry).encode())
        h.update(b"\n")
    return h.hexdigest()
