"""Channel-decoding laboratory: classic and trainable belief-propagation
decoders for linear block codes, adversarial decoder training, and a
reproducible frame-error-rate evaluation harness."""

from .alist import load_alist, save_alist
from .autodiff import AdamState, Tape, adam_step, backward, finite_diff_check
from .bp import (
    BpConfig,
    BpDecoder,
    BpResult,
    check_update_minsum,
    check_update_sumproduct,
    decode_bp,
    marginal_output,
    variable_update,
)
from .channel import ChannelConfig, FrameStreams, Rng, frame_llrs, gaussian, llr, modulate, transmit
from .codes import LinearCode, bch_code, code_by_name, encode, hamming_7_4, is_codeword
from .errors import (
    GandecError,
    InconsistentDegrees,
    InvalidParameters,
    LayoutMismatch,
    LengthMismatch,
    NonFinite,
    NotPrimitive,
    ParseError,
    RankDeficient,
    TooLarge,
    UsageError,
)
from .evaluation import (
    EquilibriumReport,
    FerRecord,
    FunctionDecoder,
    MlDecoder,
    PgMlResult,
    QuantizedChannel,
    enumerate_pg_ml,
    equilibrium_report,
    estimate_fer,
    fer_records_to_csv,
    ml_decode,
    quantized_awgn_channel,
    snr_sweep,
)
from .fields import Gf2mField, gf2m_new, minimal_polynomial
from .gan import (
    Discriminator,
    GameValueEstimate,
    GanTrainConfig,
    TrainLog,
    d_ml_closed_form,
    deserialize_discriminator,
    disc_forward,
    init_discriminator,
    load_checkpoint,
    loss_f_gd,
    save_checkpoint,
    serialize_discriminator,
    train_offline,
    train_online,
    train_step_decoder,
    train_step_discriminator,
)
from .gf2 import generator_from_parity, rref
from .tanner import TannerGraph, build_tanner
from .unfolded import (
    DecoderOutput,
    UnfoldedBpDecoder,
    UnfoldedWeights,
    deserialize_weights,
    forward,
    forward_variant,
    init_unfolded,
    serialize_weights,
    supervised_loss,
)

__version__ = "0.1.0"
