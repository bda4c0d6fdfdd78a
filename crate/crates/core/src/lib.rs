pub mod analysis;
pub mod llm;
pub mod metrics;
pub mod model;
pub mod refine;
pub mod toolbox;
pub mod trajectory;
pub mod verify;
