pub mod barycenter;
pub mod check;
pub mod demo;
pub mod exit;
pub mod fit;
pub mod predict;
pub mod synth;
