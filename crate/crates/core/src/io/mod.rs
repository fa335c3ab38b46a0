//! Checkpoint and adapter IO over the safetensors container layout, plus
//! update materialization and checkpoint diffs.

mod adapter;
mod container;
mod delta;
mod tensor_map;

pub use adapter::{
    load_adapters, pair_adapters, sidecar_path, AdapterConfig, AdapterNaming, AdapterPair,
    AdapterSet,
};
pub use container::Dtype;
pub use delta::{diff_checkpoints, delta_map, materialize_delta, CheckpointDiff, DeltaSource};
pub use tensor_map::{
    is_analyzable, load_tensor_map, save_tensor_map, NamedTensorMap, Precision, TensorEntry,
};
