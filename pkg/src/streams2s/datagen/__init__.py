from .clients import ClientError, ClientSuite
from .pipeline import (
    DatagenConfig,
    DatagenResult,
    EmptyManifestError,
    InvalidEmotionError,
    ManifestStats,
    NoMatchingSeedError,
    SeedIndex,
    TagMarginals,
    build_seed_bank,
    derive_t2s,
    generate_instructions,
    generate_response,
    manifest_stats,
    run_datagen,
    select_seed,
    synthesize_record,
)
from .records import DialogueRecord, InstructionRecord, Kind, SchemaError, SeedAudio, Sensitivity, read_manifest, read_seeds, write_jsonl
from .store import AudioStore
