from .corpora import (
    AlignmentPair,
    ReferenceSpeaker,
    SftRecord,
    StreamingSample,
    TtsPair,
    alignment_pairs,
    reference_codebook,
    sft_records,
    streaming_samples,
    tts_pairs,
)
from .stages import (
    BATCH_SIZE,
    STAGE1,
    STAGE2A,
    STAGE2B,
    STAGE3,
    CheckpointMismatchError,
    EmptyModalityError,
    MissingTagError,
    StageReport,
    Variant,
    VocabularyOverflowError,
    assert_freeze,
    continuation_exact_match,
    run_stage1,
    run_stage2_offline,
    run_stage2_streaming,
    run_stage3,
    sft_exact_match,
    stream_decode,
)
