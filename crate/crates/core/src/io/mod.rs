//! Data model and file formats shared across the toolkit.

mod embeddings;
mod maps;
mod properties;
mod tensor;

pub use embeddings::{read_embedding_dir, write_embedding_dir, EmbeddingSet};
pub use maps::{
    list_tensor_sidecars, read_gradient_stack, read_saliency_map, write_saliency_map,
    GradientStack, SaliencyMap,
};
pub use properties::{
    check_same_ids, encode_labels, read_property_table, write_property_table, PropertyTable,
};
pub use tensor::{read_tensor, write_tensor, TensorF32, DTYPE_TAG, FORMAT_TAG};
