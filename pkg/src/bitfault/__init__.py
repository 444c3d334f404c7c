"""bitfault: a bit-exact workbench for fault tolerance of quantized DNN arithmetic.

Approximate multiplier models with fault detection, reproducible bit-flip
campaigns, MSB-vote weight protection, activation range clamping, reliability
metrics, and a threshold-gated bit-width search.
"""

__version__ = "0.1.0"

from .errors import (
    CodeOutOfRange,
    ConfigError,
    DataError,
    EmptyDataset,
    EmptyTensor,
    ExhaustiveTooLarge,
    IndexOutOfRange,
    InvalidFaultSite,
    ModelLoadFailure,
    NonFiniteWeight,
    ShapeMismatch,
    WorkbenchError,
    ZeroOperand,
)
from .faults import (
    EMPTY_PLAN,
    FaultPlan,
    FaultSite,
    RngSpec,
    apply_word_faults,
    merge_plans,
    plan_ber_weight_faults,
    plan_single_activation_fault,
    plan_single_adder_fault,
)
from .metrics import (
    CampaignRecord,
    PDropInputs,
    RapInputs,
    SdcRates,
    fault_coverage,
    p_drop,
    rap,
    sdc_rates,
    softmax,
    vulnerability,
)
from .multipliers import (
    Exhaustive,
    FlipCampaign,
    MulOutcome,
    MultConfig,
    Sampled,
    adam_mul,
    duplicated_slice,
    exact_mul,
    internal_flip_campaign,
    lod,
    mare,
    mitchell_mul,
    mitchell_product_array,
    multiply,
    parse_mult_config,
    product_array,
)
from .network import (
    AffineScheme,
    Bounds,
    LayerSpec,
    QuantizedNetwork,
    clamp_unit,
    evaluate_accuracy,
    infer,
    profile_input_bounds,
    profile_ranges,
)
from .quantize import (
    ProtectedWord,
    QuantScheme,
    UniformQuantizer,
    dequantize,
    majority_decode,
    majority_decode_words,
    protect,
    protect_words,
    protected_memory_bits,
    quantize,
    stored_width,
)
from .search import (
    BitWidthSearch,
    SearchConfig,
    SearchTrace,
    SelectedQnn,
    StepEval,
    bitwidth_search,
    make_model_evaluator,
)
