use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("site budget exceeded: region has {requested} sites, budget is {budget}")]
    SiteBudget { requested: u128, budget: u128 },

    #[error("path budget exceeded: family has {requested} paths, budget is {budget}")]
    PathBudget { requested: u128, budget: u128 },

    #[error("scenery has {got} values but the site set has {want} sites")]
    SceneryMismatch { got: usize, want: usize },

    #[error("irregular site set: {0}")]
    IrregularSites(String),

    #[error("invalid scale schedule: {0}")]
    Schedule(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bracket violation: {0}")]
    Bracket(String),

    #[error("size guard: {0}")]
    SizeGuard(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
