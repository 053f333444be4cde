"""Thought template lifecycle: stores, retrieval, packing, metrics, analytics."""

from templar._core import (
    Bm25Index,
    Decision,
    Document,
    ParseError,
    ScoredDoc,
    TemplateExample,
    TemplateStore,
    ThoughtTemplate,
    UsageRecord,
    analyze,
    apply_decision,
    assign_template_id,
    binary_accuracy,
    cooccurrence_lift,
    detect_used_templates,
    estimate_tokens,
    exact_match,
    format_document,
    ingest,
    load_store,
    load_usage_log,
    normalize_answer,
    pack,
    parse_final_answer,
    recall_at_k,
    sha256_hex,
    snapshot,
    store_hash,
    token_f1,
    usage_histogram,
    validate_template,
)

__all__ = [
    "Bm25Index",
    "Decision",
    "Document",
    "ParseError",
    "ScoredDoc",
    "TemplateExample",
    "TemplateStore",
    "ThoughtTemplate",
    "UsageRecord",
    "analyze",
    "apply_decision",
    "assign_template_id",
    "binary_accuracy",
    "cooccurrence_lift",
    "detect_used_templates",
    "estimate_tokens",
    "exact_match",
    "format_document",
    "ingest",
    "load_store",
    "load_usage_log",
    "normalize_answer",
    "pack",
    "parse_final_answer",
    "recall_at_k",
    "sha256_hex",
    "snapshot",
    "store_hash",
    "token_f1",
    "usage_histogram",
    "validate_template",
]
