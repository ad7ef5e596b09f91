"""Bundled prompt templates.

Templates use ``{name}`` placeholders. Rendering substitutes only the names
it is given, in a single pass, so JSON braces in a template and braces inside
substituted values are left alone.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from pathlib import Path

_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")

# Directory consulted before the bundled assets; set by the CLI from config.
override_dir: Path | None = None


@lru_cache(maxsize=None)
def _bundled(name: str) -> str:
    return resources.files(__package__).joinpath(f"{name}.txt").read_text(encoding="utf-8")


def load(name: str) -> str:
    if override_dir is not None:
        candidate = Path(override_dir) / f"{name}.txt"
        if candidate.is_file():
            return candidate.read_text(encoding="utf-8")
    return _bundled(name)


def render(template: str, **values: object) -> str:
    def sub(match: re.Match) -> str:
        key = match.group(1)
        return str(values[key]) if key in values else match.group(0)

    return _PLACEHOLDER.sub(sub, template)


def render_named(name: str, **values: object) -> str:
    return render(load(name), **values)
