"""Prompt rendering, answer parsing and the HTTP-backed oracle."""

from ..prompts import TEMPLATES, PromptTemplate, prompt_overhead, render_prompt, template_for
from .parsing import parse_listwise_order, parse_select_best
from .endpoint import EndpointConfig, EndpointOracle, endpoint_invoke

__all__ = [
    "TEMPLATES",
    "EndpointConfig",
    "EndpointOracle",
    "PromptTemplate",
    "endpoint_invoke",
    "parse_listwise_order",
    "parse_select_best",
    "prompt_overhead",
    "render_prompt",
    "template_for",
]
