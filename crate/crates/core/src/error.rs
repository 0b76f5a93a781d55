use std::path::PathBuf;

/// Errors raised anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("panel input is empty")]
    EmptyPanel,
    #[error("duplicate cell (unit {unit}, period {period})")]
    DuplicateCell { unit: i64, period: i64 },
    #[error("unbalanced panel: {0}")]
    UnbalancedPanel(String),
    #[error("treatment switches off for unit {unit} at period {period}; reversal designs are not supported")]
    NonAbsorbingTreatment { unit: i64, period: i64 },
    #[error("invalid treatment value {value} for unit {unit}, period {period}")]
    InvalidTreatment { unit: i64, period: i64, value: f64 },
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("{0} is not defined for never-treated units")]
    NotApplicable(&'static str),
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("scenario produced no treated or no never-treated units")]
    DegenerateScenario,
    #[error("design is collinear after absorbing fixed effects ({0})")]
    CollinearDesign(String),
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("no observations support event-time dummy e = {0}")]
    EmptyEventBin(i32),
    #[error("empty control group{0}")]
    EmptyControl(String),
    #[error("cohort g = {0} has no units")]
    EmptyCohort(u32),
    #[error("unit {0} has no untreated observation")]
    UnidentifiedUnit(i64),
    #[error("period {0} has no untreated observation")]
    UnidentifiedPeriod(i64),
    #[error("a single timing group without never-treated units admits no 2x2 comparison")]
    SingleTimingGroup,
    #[error("no treated observations")]
    NoTreatedCells,
    #[error("bench plan has no {0}")]
    EmptyPlan(&'static str),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("unknown estimator {0:?}")]
    UnknownEstimator(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyPanel => "EmptyPanel",
            Error::DuplicateCell { .. } => "DuplicateCell",
            Error::UnbalancedPanel(_) => "UnbalancedPanel",
            Error::NonAbsorbingTreatment { .. } => "NonAbsorbingTreatment",
            Error::InvalidTreatment { .. } => "InvalidTreatment",
            Error::NonFiniteInput(_) => "NonFiniteInput",
            Error::NotApplicable(_) => "NotApplicable",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::DegenerateScenario => "DegenerateScenario",
            Error::CollinearDesign(_) => "CollinearDesign",
            Error::NoConvergence(_) => "NoConvergence",
            Error::EmptyEventBin(_) => "EmptyEventBin",
            Error::EmptyControl(_) => "EmptyControl",
            Error::EmptyCohort(_) => "EmptyCohort",
            Error::UnidentifiedUnit(_) => "UnidentifiedUnit",
            Error::UnidentifiedPeriod(_) => "UnidentifiedPeriod",
            Error::SingleTimingGroup => "SingleTimingGroup",
            Error::NoTreatedCells => "NoTreatedCells",
            Error::EmptyPlan(_) => "EmptyPlan",
            Error::UnknownPreset(_) => "UnknownPreset",
            Error::UnknownEstimator(_) => "UnknownEstimator",
            Error::Io { .. } => "Io",
            Error::Csv(_) => "Csv",
            Error::Parse(_) => "Parse",
        }
    }
}
