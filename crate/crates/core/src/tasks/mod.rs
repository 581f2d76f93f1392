//! Task streams, exemplar memory and hybrid sampling.

mod buffer;
mod idx;
mod sampler;
mod stream;

pub use buffer::{buffer_update, memory_ratio, task_weights, ReplayBuffer};
pub use idx::{
    encode_idx, idx_stream_from_bytes, load_idx_stream, parse_idx, parse_idx_pair, IdxArray, IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
};
pub use sampler::{sample_buffer_batch, sample_hybrid_batch, sample_task_batch, HybridPool, SamplingMode};
pub use stream::{
    examples_to_batch, gen_synthetic_stream, read_stream, write_stream, LabeledExample, SyntheticStreamConfig,
    TaskSpec, TaskStream, STREAM_MAGIC,
};
