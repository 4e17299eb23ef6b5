"""Rendering of log-entry templates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from runlog.domain.models import PLACEHOLDER_PATTERN, Template
from runlog.errors import MissingField


@dataclass(frozen=True)
class RenderedEntry:
    title: str
    body: str
    tags: frozenset[str]


def render_template(template: Template, values: Mapping[str, str]) -> RenderedEntry:
    """Substitute every ``{{name}}`` occurrence in the title and body patterns.

    Required fields must be supplied; other placeholders without a value
    render as the empty string. Returned tags are the template's defaults.
    """
    for name in sorted(template.required_fields):
        if name not in values:
            raise MissingField(name)

    def substitute(match) -> str:
        return str(values.get(match.group(1), ""))

    return RenderedEntry(
        title=PLACEHOLDER_PATTERN.sub(substitute, template.title_pattern),
        body=PLACEHOLDER_PATTERN.sub(substitute, template.body_pattern),
        tags=template.default_tags,
    )
