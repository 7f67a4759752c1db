//! Placeholder C ABI; filled in once the pipeline API lands.
