use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("infeasible power: p[{index}] = {value} outside [0, {p_max}]")]
    InfeasiblePower { index: usize, value: f64, p_max: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("instance too large: {levels}^{pairs} grid points exceeds the limit of {limit}")]
    InstanceTooLarge { levels: usize, pairs: usize, limit: u64 },

    #[error("circuit has {0} qubits, above the simulator ceiling of {max}", max = crate::qsim::MAX_QUBITS)]
    TooManyQubits(usize),

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("angle slot {0} does not drive a rotation gate")]
    SlotNotRotational(usize),

    #[error("observable support qubit {qubit} out of range for {n} qubits")]
    SupportOutOfRange { qubit: usize, n: usize },

    #[error("non-finite loss at epoch {epoch}, step {step}, instance {instance}: {value}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        instance: usize,
        value: f64,
    },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed {what} at line {line}: {msg}")]
    Format {
        what: &'static str,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got })
        }
    }
}
