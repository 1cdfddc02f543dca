//! C ABI scaffolding; filled in once the core library lands.
