"""Single-utterance test-time adaptation for CTC models (C++ core)."""

from ._core import (
    BLANK,
    VOCAB_SIZE,
    ContractViolation,
    DataError,
    FormatError,
    Model,
    Utterance,
    adapt,
    add_gaussian_noise,
    combined_loss,
    ctc_loss,
    default_learning_rate,
    encode,
    evaluate,
    generate_corpus,
    greedy_decode,
    init_model,
    load_corpus,
    run_corpus,
    save_corpus,
    softmax_temperature,
    train_source,
    wer,
    werr,
)

__all__ = [name for name in dir() if not name.startswith("_")]
