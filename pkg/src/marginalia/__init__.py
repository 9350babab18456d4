"""Anchored commenting engine.

Binds AI-generated feedback to exact text spans, keeps those bindings valid
across edits via token diffing and span remapping, and disambiguates
repeated anchor text by widening to the smallest unique context window.
"""

from .anchoring import (
    Anchor,
    AnchorProposal,
    ContextWindow,
    Rejection,
    expand_acw,
    find_occurrences,
    reanchor,
    resolve_proposal,
)
from .diffing import (
    Change,
    ChangeSet,
    LocalizedChange,
    SpanMapping,
    compute_changes,
    localize,
    map_span,
)
from .document import (
    DocumentVersion,
    Edit,
    SegmentationConfig,
    SegmentationIndex,
    Span,
    apply_edits,
    ingest,
    window_at,
)
from .llm import (
    LLMClient,
    MockScript,
    Prompt,
    ProviderConfig,
    ReplyDecision,
    build_meta_prompt,
    build_refine_prompt,
    build_thread_prompt,
    parse_proposals,
    parse_reply_decision,
    prompt_key,
)
from .metrics import RevisionMetrics, compute_metrics, token_edit_distance
from .normalization import normalize, normalize_with_map
from .store import Event, Session, SessionConfig, SessionStore
from .threads import CommentThread, Message, MetaQueryResult, Orchestrator

__version__ = "0.1.0"

__all__ = [
    "Anchor",
    "AnchorProposal",
    "Change",
    "ChangeSet",
    "CommentThread",
    "ContextWindow",
    "DocumentVersion",
    "Edit",
    "Event",
    "LLMClient",
    "LocalizedChange",
    "Message",
    "MetaQueryResult",
    "MockScript",
    "Orchestrator",
    "Prompt",
    "ProviderConfig",
    "Rejection",
    "ReplyDecision",
    "RevisionMetrics",
    "SegmentationConfig",
    "SegmentationIndex",
    "Session",
    "SessionConfig",
    "SessionStore",
    "Span",
    "SpanMapping",
    "apply_edits",
    "build_meta_prompt",
    "build_refine_prompt",
    "build_thread_prompt",
    "compute_changes",
    "compute_metrics",
    "expand_acw",
    "find_occurrences",
    "ingest",
    "localize",
    "map_span",
    "normalize",
    "normalize_with_map",
    "parse_proposals",
    "parse_reply_decision",
    "prompt_key",
    "reanchor",
    "resolve_proposal",
    "token_edit_distance",
    "window_at",
]
