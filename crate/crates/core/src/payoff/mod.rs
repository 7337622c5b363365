//! Random-variable algebra over a Brownian path and the expectation engines.

mod engine;
mod expr;
mod grid;
mod hermite;
mod paths;

pub use engine::{Estimate, ExpectationEngine, Method, SampleTable, TiltedMoments};
pub use expr::{BrownianSpace, PayoffExpr, TerminalFn};
pub use grid::{StepFunction, TimeGrid};
pub use hermite::standard_normal_rule;
pub use paths::{sample_paths, PathBatch};
