pub mod bloch;
pub mod design;
pub mod element;
pub mod error;
pub mod grid;
pub mod homogenize;
pub mod io;
pub mod mma;
pub mod sensitivity;
pub mod shape;
pub mod solver;
pub mod topopt;

pub use error::{Error, Result};
