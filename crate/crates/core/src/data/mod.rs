//! Interaction logs in, prepared per-student sequences out: ingestion,
//! vocabularies, chronological splits, prefix counts and windows.

mod cache;
mod counts;
mod dataset;
mod ingest;
mod sequence;
mod split;
mod vocab;
mod window;

pub use cache::{
    read_cache, read_manifest, write_cache, CacheManifest, RecordCounts, CACHE_VERSION, DATASET_FILE,
    MANIFEST_FILE, VOCAB_FILE,
};
pub use counts::{
    compute_prefix_counts, compute_target_counts, CountFeatures, CountLookup, CountPair, PrefixCounter,
    TargetCounts,
};
pub use dataset::{Dataset, DatasetOptions, PreparedStudent, Record, RecordRef};
pub use ingest::{ingest_file, ingest_interactions, IngestReport, Interaction, InteractionLog, RowIssue, StudentLog};
pub use sequence::{encode_sequence, Step, StudentSequence};
pub use split::{chronological_split, split_sizes, ChronologicalSplit, Split, SplitSizes};
pub use vocab::{build_vocabularies, KeyIndex, Vocab};
pub use window::{window_sequences, window_spans, Window, WindowSpan};
