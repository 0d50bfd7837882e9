use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("context mismatch between operands")]
    ContextMismatch,
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error("polynomial is not homogeneous in the {0} grading")]
    NotHomogeneous(&'static str),
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown generator or parameter `{0}`")]
    UnknownGenerator(String),
    #[error("odd level {0} exceeds the context bound")]
    LevelOutOfRange(usize),
    #[error("operator extraction needs odd variables of level 0 only")]
    OddLevelTooHigh,
    #[error("bivector is not of hydrodynamic type: {0}")]
    NotHydrodynamic(String),
    #[error("metric is degenerate")]
    DegenerateMetric,
    #[error("leading Jacobian of the Miura map is not constant and invertible")]
    NonInvertibleLeadingJacobian,
    #[error("input mixes odd levels where only level 0 is allowed")]
    MixedOddLevels,
    #[error("not a bihamiltonian vector field: {0}")]
    NotBihamiltonianVectorField(String),
    #[error("not a bihamiltonian pair: {0}")]
    NotBihamiltonian(String),
    #[error("expression is not a total x-derivative")]
    NotExact,
    #[error("derivation has no image for generator {0}")]
    MissingImage(String),
    #[error("eta is not constant")]
    EtaNotConstant,
    #[error("eta is singular")]
    EtaSingular,
    #[error("calibration is resonant at level {level}: {dim} free constants")]
    ResonantCalibration { level: usize, dim: usize },
    #[error("exactness check [Z, P1] = P0 failed")]
    ExactnessFailed,
    #[error("resonant spectrum: {0}")]
    ResonantSpectrum(String),
    #[error("unsupported resonance: {0}")]
    UnsupportedResonance(String),
    #[error("resonant recursion level {0}")]
    ResonantLevel(usize),
    #[error("linear system has no solution: {0}")]
    NoSolution(String),
    #[error("solution is underdetermined: {dim} free parameters in {what}")]
    UnderdeterminedReported { what: String, dim: usize },
    #[error("locality fails: {0}")]
    NonLocalObstruction(String),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
    #[error("not a tau symmetry: {0}")]
    NotATauSymmetry(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable numeric code shared by the CLI exit status and the C ABI.
    pub fn code(&self) -> i32 {
        match self {
            Error::ContextMismatch => 10,
            Error::InvalidContext(_) => 11,
            Error::NotHomogeneous(_) => 12,
            Error::Syntax { .. } => 13,
            Error::UnknownGenerator(_) => 14,
            Error::LevelOutOfRange(_) => 15,
            Error::OddLevelTooHigh => 16,
            Error::NotHydrodynamic(_) => 17,
            Error::DegenerateMetric => 18,
            Error::NonInvertibleLeadingJacobian => 19,
            Error::MixedOddLevels => 20,
            Error::NotBihamiltonianVectorField(_) => 21,
            Error::NotBihamiltonian(_) => 22,
            Error::NotExact => 23,
            Error::MissingImage(_) => 24,
            Error::EtaNotConstant => 25,
            Error::EtaSingular => 26,
            Error::ResonantCalibration { .. } => 27,
            Error::ExactnessFailed => 28,
            Error::ResonantSpectrum(_) => 29,
            Error::UnsupportedResonance(_) => 30,
            Error::ResonantLevel(_) => 31,
            Error::NoSolution(_) => 32,
            Error::UnderdeterminedReported { .. } => 33,
            Error::NonLocalObstruction(_) => 34,
            Error::VerificationFailed(_) => 35,
            Error::NotATauSymmetry(_) => 36,
            Error::Unsupported(_) => 37,
            Error::InvalidInput(_) => 38,
            Error::Io(_) => 39,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
