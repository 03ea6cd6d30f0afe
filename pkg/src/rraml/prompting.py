"""Prompt templates and the aggregator that merges them with support sets.

The instruction side of the pipeline is a small fixed template library;
a policy picks the template id, and `aggregate` splices the retrieved
documents into the rendered prompt under a whitespace-token budget.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .corpus import Document

PLACEHOLDERS = ("{task}", "{query}", "{context}")

DOC_SEPARATOR = "\n---\n"


class TemplateError(ValueError):
    """Raised for templates whose placeholders are missing or duplicated."""


class BudgetError(ValueError):
    """Raised when even the empty-context prompt exceeds the token budget."""


@dataclass(frozen=True)
class PromptTemplate:
    template_id: int
    style: str
    body: str

    def validate(self) -> None:
        missing = [p for p in PLACEHOLDERS if self.body.count(p) == 0]
        duplicated = [p for p in PLACEHOLDERS if self.body.count(p) > 1]
        if missing or duplicated:
            raise TemplateError(
                f"template {self.template_id}: "
                f"missing placeholders {missing}, duplicated {duplicated}"
            )


DEFAULT_TEMPLATES: tuple[PromptTemplate, ...] = (
    PromptTemplate(
        template_id=0,
        style="terse",
        body="Task: {task}\nQuestion: {query}\nContext:\n{context}\nAnswer with the value only.",
    ),
    PromptTemplate(
        template_id=1,
        style="cot",
        body=(
            "Task: {task}\nRead the context, reason step by step, then answer.\n"
            "Context:\n{context}\nQuestion: {query}\nReasoning and answer:"
        ),
    ),
    PromptTemplate(
        template_id=2,
        style="extractive",
        body=(
            "Task: {task}\nCopy the answer to the question verbatim from the context.\n"
            "Context:\n{context}\nQuestion: {query}\nAnswer:"
        ),
    ),
    PromptTemplate(
        template_id=3,
        style="strict-grounding",
        body=(
            "Task: {task}\nUse ONLY the context below. If it is not sufficient, "
            "reply UNKNOWN.\nContext:\n{context}\nQuestion: {query}\nAnswer:"
        ),
    ),
)


@dataclass(frozen=True)
class AggregatedPrompt:
    """Final prompt text plus the (section, group doc ids) breakdown."""

    final_text: str
    parts: tuple[tuple[str, tuple[str, ...]], ...]
    dropped_doc_ids: tuple[str, ...] = field(default=())

    @property
    def included_doc_ids(self) -> tuple[str, ...]:
        return tuple(doc_id for _, ids in self.parts for doc_id in ids)


def render_prompt(template: PromptTemplate, task_description: str, query: str) -> str:
    """Substitute {task} and {query}; {context} stays as the aggregation slot."""
    template.validate()
    return template.body.replace("{task}", task_description).replace("{query}", query)


def estimate_tokens(text: str) -> int:
    """Whitespace token count: crude, but safe against an unseen tokenizer."""
    return len(text.split())


def _render_group(docs: list[Document]) -> str:
    return DOC_SEPARATOR.join(f"[doc:{doc.id}] {doc.text}" for doc in docs)


def _render(prompt: str, groups: list[list[Document]]) -> tuple[str, tuple[tuple[str, tuple[str, ...]], ...]]:
    if "{context}" not in prompt:
        raise TemplateError("rendered prompt lost its {context} slot")
    if len(groups) <= 1:
        docs = groups[0] if groups else []
        section = prompt.replace("{context}", _render_group(docs))
        return section, ((section, tuple(d.id for d in docs)),)
    m = len(groups)
    parts = []
    for i, docs in enumerate(groups, start=1):
        section = f"PART {i}/{m}: " + prompt.replace("{context}", _render_group(docs))
        parts.append((section, tuple(d.id for d in docs)))
    return "\n\n".join(section for section, _ in parts), tuple(parts)


def aggregate(
    prompt: str, support_groups: list[list[Document]], context_budget: int
) -> AggregatedPrompt:
    """Splice support groups into the prompt's {context} slot.

    One group replaces the slot directly; m > 1 groups render the prompt
    m times as numbered "PART i/m" sections, one group each. If the
    whitespace-token estimate exceeds the budget, documents are dropped
    from the end of the last non-empty group until it fits, and every
    drop is recorded on the result.
    """
    groups = [list(g) for g in support_groups]
    empty_text, _ = _render(prompt, [[] for _ in groups] if groups else [])
    if estimate_tokens(empty_text) > context_budget:
        raise BudgetError(
            f"budget {context_budget} cannot fit the empty-context prompt "
            f"({estimate_tokens(empty_text)} tokens)"
        )
    dropped: list[str] = []
    while True:
        text, parts = _render(prompt, groups)
        if estimate_tokens(text) <= context_budget:
            return AggregatedPrompt(
                final_text=text, parts=parts, dropped_doc_ids=tuple(dropped)
            )
        last = max(i for i, g in enumerate(groups) if g)
        dropped.append(groups[last].pop().id)


def load_templates(path: str) -> tuple[PromptTemplate, ...]:
    """Template library file: JSON array of {template_id, style, body}."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise TemplateError("template library must be a JSON array")
    templates = []
    for entry in raw:
        tpl = PromptTemplate(
            template_id=int(entry["template_id"]),
            style=str(entry["style"]),
            body=str(entry["body"]),
        )
        tpl.validate()
        templates.append(tpl)
    templates.sort(key=lambda t: t.template_id)
    if [t.template_id for t in templates] != list(range(len(templates))):
        raise TemplateError("template ids must be 0..T-1 without gaps")
    return tuple(templates)


def save_templates(templates: tuple[PromptTemplate, ...], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            [
                {"template_id": t.template_id, "style": t.style, "body": t.body}
                for t in templates
            ],
            fh,
            indent=2,
        )
        fh.write("\n")
