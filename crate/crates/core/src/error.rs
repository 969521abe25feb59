use thiserror::Error;

/// Errors raised by the engine. Variants map onto the CLI exit-code classes
/// through [`Error::class`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("malformed value in column `{column}` at row {row}: {value:?}")]
    MalformedValue { row: usize, column: String, value: String },
    #[error("population is empty")]
    EmptyPopulation,
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("csv: {0}")]
    Csv(String),

    #[error("unknown field `{0}` in predicate")]
    UnknownField(String),
    #[error("predicate syntax: {0}")]
    PredicateSyntax(String),
    #[error("invalid bandwidth: {0}")]
    InvalidBandwidth(String),
    #[error("mask selects no labeled records")]
    EmptyMask,
    #[error("mask length {mask} does not match population size {population}")]
    MaskLength { mask: usize, population: usize },

    #[error("utility domain error: {0}")]
    Domain(String),
    #[error("invalid utility: {0}")]
    InvalidUtility(String),
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("baseline welfare is zero; report gains as differences")]
    ZeroBaseline,

    #[error("record {0} is in the improvement mask but unlabeled")]
    UnlabeledInMask(usize),
    #[error("capacity {0} exceeds 1")]
    CapacityOverflow(f64),
    #[error("lever `{lever}` does not apply to {utility} utility")]
    VariantMismatch { lever: String, utility: String },
    #[error("cost argument {theta} outside tabulated range [{lo}, {hi}]")]
    CostOutOfRange { theta: f64, lo: f64, hi: f64 },
    #[error("invalid lever: {0}")]
    InvalidLever(String),
    #[error("cost model for `{0}` cannot be inverted from spend")]
    NonInvertibleCost(String),
    #[error("benchmark gain is not monotone in theta (drops at theta={0})")]
    NonMonotoneBenchmark(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("instance too large to enumerate: {0} cells")]
    TooLargeToEnumerate(u128),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    /// An error raised while evaluating one cell of a sweep.
    #[error("at {cell}: {source}")]
    AtCell { cell: String, source: Box<Error> },
}

/// Coarse error class used for exit codes and HTTP status mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Analysis,
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn at_cell(cell: impl Into<String>, source: Error) -> Self {
        Error::AtCell {
            cell: cell.into(),
            source: Box::new(source),
        }
    }

    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            AtCell { source, .. } => source.class(),
            MissingColumn(_) | MalformedValue { .. } | EmptyPopulation | DuplicateId(_) | Csv(_) => ErrorClass::Data,
            Config { .. }
            | UnknownField(_)
            | PredicateSyntax(_)
            | InvalidBandwidth(_)
            | InvalidUtility(_)
            | InvalidConstraint(_)
            | InvalidLever(_)
            | InvalidGrid(_)
            | InvalidSpec(_)
            | MaskLength { .. } => ErrorClass::Config,
            _ => ErrorClass::Analysis,
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        use Error::*;
        match self {
            AtCell { source, .. } => source.kind(),
            MissingColumn(_) => "MissingColumn",
            MalformedValue { .. } => "MalformedValue",
            EmptyPopulation => "EmptyPopulation",
            DuplicateId(_) => "DuplicateId",
            Csv(_) => "Csv",
            UnknownField(_) => "UnknownField",
            PredicateSyntax(_) => "PredicateSyntax",
            InvalidBandwidth(_) => "InvalidBandwidth",
            EmptyMask => "EmptyMask",
            MaskLength { .. } => "MaskLength",
            Domain(_) => "DomainError",
            InvalidUtility(_) => "InvalidUtility",
            InvalidConstraint(_) => "InvalidConstraint",
            ZeroBaseline => "ZeroBaseline",
            UnlabeledInMask(_) => "UnlabeledInMask",
            CapacityOverflow(_) => "CapacityOverflow",
            VariantMismatch { .. } => "VariantMismatch",
            CostOutOfRange { .. } => "CostOutOfRange",
            InvalidLever(_) => "InvalidLever",
            NonInvertibleCost(_) => "NonInvertibleCost",
            NonMonotoneBenchmark(_) => "NonMonotoneBenchmark",
            InvalidGrid(_) => "InvalidGrid",
            TooLargeToEnumerate(_) => "TooLargeToEnumerate",
            InvalidSpec(_) => "InvalidSpec",
            Config { .. } => "ConfigError",
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
