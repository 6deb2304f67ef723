"""codecascade: cost-aware orchestration of LLM assistant / code-executor
conversations with tier escalation and solution retrieval."""

from .backends import (
    BackendError,
    ChatExchange,
    ContextOverflowError,
    HttpChatBackend,
    ModelProfile,
    RuleBackend,
    ScriptedBackend,
    complete,
    cost_of,
    estimate_tokens,
)
from .conversation import (
    Assistant,
    ConversationConfig,
    classify_success_candidate,
    run_conversation,
)
from .core import (
    ApiSpec,
    Conversation,
    Message,
    Query,
    Role,
    Termination,
    TokenUsage,
    Verdict,
    VerdictSourceKind,
    extract_code_blocks,
    generate_fake_key,
    is_terminate,
)
from .executor import (
    ExecutionResult,
    SandboxExecutor,
    execute,
    format_executor_reply,
    substitute_keys,
)
from .judging import JudgeConfig, JudgeQuality, judge, judge_quality, parse_judge_reply
from .ledger import Ledger, LedgerEntry, LedgerEvent, RunSummary, summarize
from .orchestrator import PolicyFlags, QueryPipeline, QueryResult, build_initial_prompt
from .store import HashedBagOfWords, SolutionRecord, SolutionStore, cosine

__version__ = "0.1.0"

__all__ = [
    "ApiSpec",
    "Assistant",
    "BackendError",
    "ChatExchange",
    "ContextOverflowError",
    "Conversation",
    "ConversationConfig",
    "ExecutionResult",
    "HashedBagOfWords",
    "HttpChatBackend",
    "JudgeConfig",
    "JudgeQuality",
    "Ledger",
    "LedgerEntry",
    "LedgerEvent",
    "Message",
    "ModelProfile",
    "PolicyFlags",
    "Query",
    "QueryPipeline",
    "QueryResult",
    "Role",
    "RuleBackend",
    "RunSummary",
    "SandboxExecutor",
    "ScriptedBackend",
    "SolutionRecord",
    "SolutionStore",
    "Termination",
    "TokenUsage",
    "Verdict",
    "VerdictSourceKind",
    "build_initial_prompt",
    "classify_success_candidate",
    "complete",
    "cosine",
    "cost_of",
    "estimate_tokens",
    "execute",
    "extract_code_blocks",
    "format_executor_reply",
    "generate_fake_key",
    "is_terminate",
    "judge",
    "judge_quality",
    "parse_judge_reply",
    "run_conversation",
    "substitute_keys",
    "summarize",
]
