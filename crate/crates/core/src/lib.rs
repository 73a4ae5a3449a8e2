//! Local Riemannian curvature and Ricci flow checks driven by truncated Taylor jets.

pub mod catalog;
pub mod exprdsl;
pub mod flow;
pub mod geometry;
pub mod identities;
pub mod jet;
pub mod soliton;
pub mod tensor;
