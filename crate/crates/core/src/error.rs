use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Grid construction rejected (bounds, point count).
    InvalidGrid(String),
    /// Values array does not match the grid size.
    LengthMismatch { expected: usize, found: usize },
    /// A non-finite sample where a finite one is required.
    NonFinite { index: usize },
    /// Plain integration was asked to cover a masked point.
    MaskedPoint { index: usize },
    /// Two fields (or a field and a potential) live on different grids.
    GridMismatch,
    /// Grid does not cover the physical domain a closed form requires.
    DomainMismatch(String),
    /// Harmonic eigenstate still has non-negligible amplitude at the grid edge.
    EdgeAmplitude { state: usize, amplitude: f64 },
    /// Eigenpair failed to converge within the iteration cap.
    NoConvergence { pair: usize },
    /// Requested more eigenpairs than the matrix has.
    TooManyStates { requested: usize, dimension: usize },
    /// Wavepacket carries too much probability outside the well.
    PacketLeak { leaked: f64 },
    /// Wavefunction is identically zero.
    ZeroState,
    /// Streamline seed lies in a node-masked neighbourhood.
    StartMasked { x: f64 },
    /// Radial profile would leave the domain.
    RadiusTooLarge { r_max: f64, limit: f64 },
    /// Probability still inside the barrier at the measurement time.
    NotCleared { in_barrier: f64 },
    /// No bracketing barrier heights found; probed (U0, T) pairs.
    NoBracket { probes: Vec<(f64, f64)> },
    /// Bisection used its probe budget without meeting the tolerance.
    TuningStalled { probes: Vec<(f64, f64)> },
    /// Calibration sweep could not hit the requested truncation index.
    Calibration { target: usize, reached: usize },
    InvalidInput(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidGrid(why) => write!(f, "invalid grid: {why}"),
            Error::LengthMismatch { expected, found } => {
                write!(f, "field has {found} values, grid has {expected} points")
            }
            Error::NonFinite { index } => write!(f, "non-finite value at index {index}"),
            Error::MaskedPoint { index } => {
                write!(f, "masked point at index {index} in unmasked integration")
            }
            Error::GridMismatch => write!(f, "fields are defined on different grids"),
            Error::DomainMismatch(why) => write!(f, "grid does not match domain: {why}"),
            Error::EdgeAmplitude { state, amplitude } => write!(
                f,
                "state {state} has edge amplitude {amplitude:e}; widen the grid"
            ),
            Error::NoConvergence { pair } => {
                write!(f, "eigenpair {pair} did not converge")
            }
            Error::TooManyStates {
                requested,
                dimension,
            } => write!(
                f,
                "requested {requested} eigenpairs from a matrix of dimension {dimension}"
            ),
            Error::PacketLeak { leaked } => {
                write!(f, "wavepacket leaks {leaked:e} probability outside the well")
            }
            Error::ZeroState => write!(f, "wavefunction vanishes everywhere"),
            Error::StartMasked { x } => write!(f, "streamline seed x={x} is inside a node mask"),
            Error::RadiusTooLarge { r_max, limit } => write!(
                f,
                "r_max={r_max} exceeds distance {limit} to the boundary"
            ),
            Error::NotCleared { in_barrier } => write!(
                f,
                "packet has not cleared the barrier: {in_barrier:e} probability inside"
            ),
            Error::NoBracket { probes } => {
                write!(f, "no transmission bracket around 0.5; probes (U0, T):")?;
                for (u, t) in probes {
                    write!(f, " ({u}, {t:.4})")?;
                }
                Ok(())
            }
            Error::TuningStalled { probes } => {
                write!(f, "tuner exhausted {} probes without |T - 0.5| < tol", probes.len())
            }
            Error::Calibration { target, reached } => write!(
                f,
                "width calibration cannot reach truncation index {target} (closest {reached})"
            ),
            Error::InvalidInput(why) => write!(f, "{why}"),
        }
    }
}

impl core::error::Error for Error {}
