pub mod boxes;
pub mod keys;
pub mod mask;
pub mod tensor;

pub use boxes::{BoxRecord, BoxesDocument, ImageRecord};
pub use keys::KeysFile;
pub use mask::{read_mask, write_mask};
pub use tensor::{read_field, write_field};
