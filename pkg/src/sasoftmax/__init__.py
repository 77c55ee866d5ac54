"""Self-adjusting softmax attention: scoring kernels, analytic gradients,
vanishing-gradient diagnostics, and a micro language-model trainer."""

from .errors import (
    CacheMismatch,
    CorpusTooSmall,
    EmptyHistory,
    EmptyRow,
    LengthMismatch,
    NonFiniteGradient,
    NonFiniteInput,
    NotNormalized,
    OddHeadDim,
    SaSoftmaxError,
    ShapeMismatch,
    TextTooShort,
    UnknownSymbol,
)
from .variants import (
    ALL_KINDS,
    DEFAULT_EPS,
    LogitRow,
    RowExtrema,
    ScoreRow,
    VariantKind,
    apply_variant,
    masked_extrema,
    masked_softmax,
    row_extrema,
    softmax_row,
    variant_scaler,
    variant_weights,
)
from .jacobians import (
    GradCheckReport,
    JacobianBlock,
    fd_jacobian,
    gradcheck,
    is_tie_row,
    reports_to_json,
    softmax_jacobian,
    variant_jacobian,
    variant_weight_vjp,
)
from .attention import (
    AttentionCache,
    AttentionGrads,
    AttentionInput,
    attention_backward,
    attention_forward,
    causal_mask,
    rope_rotate,
    rope_rotate_back,
    scaled_scores,
)
from .diagnostics import (
    SweepRecord,
    SweepSpec,
    TraceRow,
    dump_attention,
    grad_norm_trace,
    mean_diff,
    profile_row,
    saturated_probe_config,
    saturation_sweep,
    sweep_to_csv,
)
from .microlm import (
    AdamState,
    RunMetrics,
    TrainConfig,
    TrainResult,
    Vocabulary,
    adam_step,
    attention_maps,
    backward,
    evaluate_ppl,
    forward_loss,
    global_grad_norm,
    init_adam,
    init_params,
    load_checkpoint,
    load_corpus,
    metrics_to_csv,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
