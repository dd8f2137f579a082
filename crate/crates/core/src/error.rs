use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("validation: {0}")]
    Validation(String),

    #[error("duplicate exposure: employee {employee} already has campaign {campaign}")]
    DuplicateExposure { employee: String, campaign: u32 },

    #[error("no scenario code for scenario `{0}`")]
    MissingScenario(String),

    #[error("perfect separation on column `{column}`")]
    Separation { column: String },

    #[error("collinear columns: {}", format_sets(.sets))]
    Collinear { sets: Vec<Vec<String>> },

    #[error("no convergence after {iterations} iterations (max |gradient| {grad_max:e}); trace: {trace:?}")]
    NoConvergence { iterations: usize, grad_max: f64, trace: Vec<f64> },

    #[error("singular Hessian; run the collinearity diagnostic on the design")]
    SingularHessian,

    #[error("non-finite coefficient vector")]
    NonFinite,

    #[error("positivity violation: employee {employee}, exposure {exposure}, denominator probability {prob:e}")]
    Positivity { employee: String, exposure: usize, prob: f64 },

    #[error("linearly dependent restrictions: rows {rows:?}")]
    DependentRestrictions { rows: Vec<usize> },

    #[error("nothing identified: {0}")]
    NotIdentified(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_sets(sets: &[Vec<String>]) -> String {
    sets.iter().map(|s| format!("{{{}}}", s.join(", "))).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
