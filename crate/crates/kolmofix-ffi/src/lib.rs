//! C ABI for kolmofix (placeholder; filled in once the core API lands).
