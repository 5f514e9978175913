"""Client for an external trajectory evaluator, with a rule-based offline fallback."""
from .client import (
    AuthFailed,
    EndpointConfig,
    EvalError,
    EvalPrompt,
    MalformedResponse,
    MissingConfig,
    StyleResult,
    TccResult,
    Transport,
    build_prompt,
    decimate,
    evaluate_many,
    evaluate_offline,
    evaluate_remote,
    parse_response,
    parse_style,
    parse_tcc,
    request_body,
    serialize_triview,
)
from .templates import STYLE_TEMPLATE, TCC_TEMPLATE, TEMPLATES

__all__ = [
    "AuthFailed",
    "EndpointConfig",
    "EvalError",
    "EvalPrompt",
    "MalformedResponse",
    "MissingConfig",
    "STYLE_TEMPLATE",
    "StyleResult",
    "TCC_TEMPLATE",
    "TEMPLATES",
    "TccResult",
    "Transport",
    "build_prompt",
    "decimate",
    "evaluate_many",
    "evaluate_offline",
    "evaluate_remote",
    "parse_response",
    "parse_style",
    "parse_tcc",
    "request_body",
    "serialize_triview",
]
