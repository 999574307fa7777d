//! Coverless image hiding.
//!
//! A sender never embeds anything in the image it transmits. Instead, a
//! generator trained adversarially maps each registered secret image to an
//! unrelated cover image, and a second generator maps that cover back to
//! the secret. Both sides hold the same model databases; hiding is a lookup
//! plus a forward pass, and so is revealing.

pub mod image;
pub mod modeldb;
pub mod nn;
pub mod protocol;
pub mod stegbench;
pub mod train;
