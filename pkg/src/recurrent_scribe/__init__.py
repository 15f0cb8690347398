"""Long-form text generation by recurrent prompting over a frozen LLM.

Each step feeds the previous paragraph, a chosen plan, a rolling short-term
memory, and retrieved long-term memory back into the model, which returns the
next paragraph, a rewritten memory, and fresh candidate plans. Sessions are
plain files on disk; a deterministic mock backend makes every run replayable.
"""

from .config import (
    DEFAULT_CONTENT_WORDS,
    DEFAULT_CONTEXT_BUDGET,
    DEFAULT_MEMORY_SENTENCES,
    DEFAULT_PLAN_COUNT,
    DEFAULT_PLAN_SENTENCES,
    DEFAULT_RETRIEVAL_K,
    EngineSettings,
)
from .engine import (
    Edit,
    EditRecord,
    RecurrenceEngine,
    ReplaceLastContent,
    ReplacePlan,
    ReplaceShortTerm,
    RunReport,
    StepRecord,
    consistent_view,
    derive_session_id,
    exclusive,
)
from .errors import (
    BudgetError,
    DimensionMismatchError,
    EmptyTextError,
    EngineError,
    InitError,
    InvalidEditError,
    InvalidMetaError,
    InvalidPlanError,
    MemoryStoreMissingError,
    ParseError,
    ProviderError,
    ProviderResponseError,
    ScribeError,
    SessionCorruptError,
    SessionIOError,
    SessionNotFoundError,
    SessionVersionError,
    StepError,
    StepInFlightError,
    StoreCorruptError,
    StoreIOError,
    StoreVersionError,
    TemplateError,
    TimestepError,
    TransportError,
    VectorError,
    ZeroVectorError,
)
from .memory import (
    STORE_FORMAT_VERSION,
    EmbeddingVector,
    LongTermMemory,
    MemoryEntry,
    cosine_similarity,
)
from .persistence import (
    SESSION_FORMAT_VERSION,
    export_transcript,
    load_session,
    save_session,
    session_path,
    store_path,
)
from .prompts import (
    Block,
    Message,
    PromptBundle,
    PromptTemplate,
    build_generation_prompt,
    build_init_prompt,
    build_selector_prompt,
    enforce_budget,
    estimate_tokens,
    load_template,
    repair_bundle,
)
from .providers import (
    HttpChatProvider,
    MockProvider,
    MockScript,
    Provider,
    ProviderConfig,
    hash_embedding,
    make_provider,
)
from .service import ServiceConfig, SessionManager, create_app
from .state import (
    Content,
    LengthLimits,
    Plan,
    SessionMeta,
    SessionState,
    ShortTermMemory,
    ValidationReport,
    Violation,
    count_sentences,
    count_words,
    split_sentences,
    validate_content,
    validate_plan,
    validate_short_term,
)
from .wire import (
    DEFAULT_LABELS,
    LabelSet,
    ResponseShape,
    StepOutput,
    parse_selector_output,
    parse_step_output,
    render_output_format,
    render_step_output,
)

__version__ = "0.1.0"
