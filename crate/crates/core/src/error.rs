use thiserror::Error;

pub type Result<T> = std::result::Result<T, FqteError>;

#[derive(Debug, Error)]
pub enum FqteError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {file}: {message}")]
    Csv { file: String, message: String },

    #[error("missing column '{column}' in {file}")]
    MissingColumn { file: String, column: String },

    #[error("unexpected column '{column}' in {file}: auxiliary data must not carry the detailed covariates")]
    UnexpectedColumn { file: String, column: String },

    #[error("non-binary treatment value '{value}' in {file}, row {row}, column '{column}'")]
    NonBinaryTreatment {
        file: String,
        row: usize,
        column: String,
        value: String,
    },

    #[error("non-finite numeric cell '{value}' in {file}, row {row}, column '{column}'")]
    NonFinite {
        file: String,
        row: usize,
        column: String,
        value: String,
    },

    #[error("empty treatment arm t={arm} in the {sample} sample")]
    EmptyArm { sample: &'static str, arm: u8 },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("quantile level out of range: {0} (levels must lie strictly inside (0, 1))")]
    LevelOutOfRange(f64),

    #[error("calibration levels must be strictly increasing: {0:?}")]
    UnorderedLevels(Vec<f64>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("perfect separation in logistic fit (coefficient norm {norm:.3e})")]
    Separation { norm: f64 },

    #[error("singular {what} (condition estimate {condition:.3e})")]
    Singular { what: &'static str, condition: f64 },

    #[error("rank-deficient design in {0}")]
    RankDeficient(&'static str),

    #[error("degenerate outcome model: residual scale is zero")]
    DegenerateOutcome,

    #[error("estimating equation has no root on [{low}, {high}]")]
    NoRoot { low: f64, high: f64 },

    #[error("arm t={arm} subsample too small for density estimation: {size} < {min}")]
    SampleTooSmall { arm: u8, size: usize, min: usize },

    #[error("calibration degenerate: covariance of the calibration vector is numerically zero")]
    CalibrationDegenerate,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{failed} of {total} replications failed (more than 1%); first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
}

impl FqteError {
    /// Errors caused by user-supplied settings rather than by the data or the fit.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            FqteError::LevelOutOfRange(_) | FqteError::UnorderedLevels(_) | FqteError::Config(_)
        )
    }

    /// Short machine-readable tag used in JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            FqteError::Io { .. } => "io",
            FqteError::Csv { .. } => "csv",
            FqteError::MissingColumn { .. } => "missing_column",
            FqteError::UnexpectedColumn { .. } => "unexpected_column",
            FqteError::NonBinaryTreatment { .. } => "non_binary_treatment",
            FqteError::NonFinite { .. } => "non_finite",
            FqteError::EmptyArm { .. } => "empty_arm",
            FqteError::InvalidDataset(_) => "invalid_dataset",
            FqteError::LevelOutOfRange(_) => "level_out_of_range",
            FqteError::UnorderedLevels(_) => "unordered_levels",
            FqteError::Config(_) => "config",
            FqteError::Separation { .. } => "separation",
            FqteError::Singular { .. } => "singular_matrix",
            FqteError::RankDeficient(_) => "rank_deficient",
            FqteError::DegenerateOutcome => "degenerate_outcome",
            FqteError::NoRoot { .. } => "no_root",
            FqteError::SampleTooSmall { .. } => "sample_too_small",
            FqteError::CalibrationDegenerate => "calibration_degenerate",
            FqteError::DimensionMismatch(_) => "dimension_mismatch",
            FqteError::TooManyFailures { .. } => "too_many_failures",
        }
    }
}
