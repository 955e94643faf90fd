//! Runs the guide's code blocks as doctests so the book cannot drift from
//! the crate. One module per chapter keeps failures attributable.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
