"""Helpers for pulling structured JSON out of free-form model replies.

Reasoning models wrap their answers in prose and markdown fences, so the
extractor scans for the first balanced top-level object instead of calling
``json.loads`` on the whole reply.
"""

import json
import re

from .errors import OutputParseError

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n?|```")


def strip_code_fences(text: str) -> str:
    """Remove markdown code-fence markers, keeping the fenced content."""
    return _FENCE_RE.sub("", text)


def extract_json_object(text: str) -> dict:
    """Return the first balanced top-level JSON object found in *text*.

    Tolerates surrounding prose and code fences. Raises OutputParseError when
    no parseable object is present.
    """
    cleaned = strip_code_fences(text or "")
    start = cleaned.find("{")
    while start != -1:
        end = _scan_balanced(cleaned, start)
        if end is not None:
            candidate = cleaned[start : end + 1]
            try:
                obj = json.loads(candidate)
            except json.JSONDecodeError:
                obj = None
            if isinstance(obj, dict):
                return obj
        start = cleaned.find("{", start + 1)
    raise OutputParseError("no JSON object found in reply", raw_reply=text)


def _scan_balanced(text: str, start: int):
    """Index of the brace closing the object opened at *start*, or None."""
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i
    return None


def render_template(template: str, mapping: dict) -> str:
    """Substitute {name} placeholders in a single pass.

    Unlike chained str.replace, placeholder-like text inside substituted
    values is left alone.
    """
    pattern = re.compile("|".join(r"\{" + re.escape(name) + r"\}" for name in mapping))
    return pattern.sub(lambda match: str(mapping[match.group(0)[1:-1]]), template)


def normalize_text(text: str) -> str:
    """Case-fold and collapse whitespace for fuzzy text comparison."""
    return " ".join(text.casefold().split())


def token_overlap(candidate: str, reference: str) -> float:
    """Fraction of *candidate*'s word tokens that also occur in *reference*."""
    cand = set(re.findall(r"[a-z0-9]+", candidate.casefold()))
    if not cand:
        return 0.0
    ref = set(re.findall(r"[a-z0-9]+", reference.casefold()))
    return len(cand & ref) / len(cand)
