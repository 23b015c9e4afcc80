"""Built-in scaffold and prompt-template assets.

Assets ship as plain-text files; each ends with a single POSIX newline that
is not part of the template. Checksums of the raw files go into run
manifests so drift is detectable.
"""

from __future__ import annotations

import hashlib
from importlib import resources

_ASSETS = resources.files(__package__) / "assets"

SCAFFOLD_FILES = {
    "weak": "scaffold_weak.txt",
    "medium": "scaffold_medium.txt",
    "strong": "scaffold_strong.txt",
}

TEMPLATE_FILES = {
    "rubric_generation": "rubric_generation.txt",
    "scoring": "scoring.txt",
    "scoring_no_rubric": "scoring_no_rubric.txt",
    "diagnosis": "diagnosis.txt",
}


def _read_asset(filename: str) -> str:
    text = (_ASSETS / filename).read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


def load_scaffold(variant: str) -> str:
    if variant not in SCAFFOLD_FILES:
        raise KeyError(f"unknown scaffold variant {variant!r}; expected one of {sorted(SCAFFOLD_FILES)}")
    return _read_asset(SCAFFOLD_FILES[variant])


def load_template(name: str) -> str:
    if name not in TEMPLATE_FILES:
        raise KeyError(f"unknown template {name!r}; expected one of {sorted(TEMPLATE_FILES)}")
    return _read_asset(TEMPLATE_FILES[name])


def asset_checksums() -> dict[str, str]:
    """sha256 of every raw asset file, for the run manifest."""
    out = {}
    for filename in sorted({*SCAFFOLD_FILES.values(), *TEMPLATE_FILES.values()}):
        data = (_ASSETS / filename).read_bytes()
        out[filename] = hashlib.sha256(data).hexdigest()
    return out


def render(template: str, substitutions: dict[str, str]) -> str:
    """Replace {name} placeholder spans only; user text is never format()-ed."""
    out = template
    for name, value in substitutions.items():
        out = out.replace("{" + name + "}", value)
    return out
