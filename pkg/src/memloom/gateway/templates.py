"""Prompt template registry.

Templates live as versioned XML files next to this module; each file holds a
system and a user block with ``{placeholder}`` slots. The template id doubles
as the filename stem.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from importlib import resources

from ..errors import TemplateUnbound

TEMPLATE_IDS = (
    "segment",
    "extract_semantics",
    "summarize_episode",
    "distill_experience",
    "summarize_thread",
    "title_topic",
    "title_theme",
    "select_cards",
    "select_threads",
    "answer",
    "judge",
)

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    version: int
    system: str
    user: str

    @property
    def placeholders(self) -> frozenset[str]:
        found = set(_PLACEHOLDER_RE.findall(self.system))
        found.update(_PLACEHOLDER_RE.findall(self.user))
        return frozenset(found)

    def render(self, variables: dict[str, str]) -> str:
        """Substitute placeholders; raises TemplateUnbound on a missing one."""
        missing = self.placeholders - set(variables)
        if missing:
            raise TemplateUnbound(f"template {self.template_id!r} missing variables: {sorted(missing)}")

        def sub(match: re.Match) -> str:
            return str(variables[match.group(1)])

        return _PLACEHOLDER_RE.sub(sub, self.system) + "\n\n" + _PLACEHOLDER_RE.sub(sub, self.user)


def _parse(template_id: str, text: str) -> PromptTemplate:
    root = ET.fromstring(text)
    version = int(root.attrib.get("version", "1"))
    system = (root.findtext("system") or "").strip()
    user = (root.findtext("user") or "").strip()
    return PromptTemplate(template_id, version, system, user)


def load_templates() -> dict[str, PromptTemplate]:
    """Load all known templates from package data."""
    out: dict[str, PromptTemplate] = {}
    base = resources.files(__package__) / "templates"
    for template_id in TEMPLATE_IDS:
        text = (base / f"{template_id}.xml").read_text(encoding="utf-8")
        out[template_id] = _parse(template_id, text)
    return out
