use std::path::Path;

use thiserror::Error;
use ttaverify::aggregator::AggregateError;
use ttaverify::manifest::ManifestError;
use ttaverify::pipeline::PipelineError;
use ttaverify::protocol::ProtocolError;
use ttaverify::records::RecordError;
use ttaverify::synthworld::WorldError;
use ttaverify::FallbackPolicy;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_COMPUTATION: u8 = 4;
pub const EXIT_COVERAGE: u8 = 5;

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    pub fn computation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_COMPUTATION,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {err}", path.display()),
        }
    }

    pub fn from_manifest(path: &Path, err: ManifestError) -> Self {
        let code = if err.is_io() { EXIT_IO } else { EXIT_VALIDATION };
        Self {
            code,
            message: format!("{}: {err}", path.display()),
        }
    }

    pub fn from_records(path: &Path, err: RecordError) -> Self {
        Self::validation(format!("{}: {err}", path.display()))
    }

    pub fn from_world(err: WorldError) -> Self {
        match err {
            WorldError::InvalidConfig(_) => Self::validation(err.to_string()),
            WorldError::Pipeline(p) => Self::from_pipeline(p, FallbackPolicy::Strict),
        }
    }

    pub fn from_pipeline(err: PipelineError, policy: FallbackPolicy) -> Self {
        let code = match &err {
            PipelineError::Select { .. } | PipelineError::Mismatch(_) => EXIT_VALIDATION,
            PipelineError::CoverageGap(_) => EXIT_COVERAGE,
            PipelineError::Aggregate { source, .. } => aggregate_code(source, policy),
            PipelineError::Protocol(p) => protocol_code(p),
            PipelineError::Pool(_) => EXIT_COMPUTATION,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }

    pub fn from_protocol(err: ProtocolError) -> Self {
        Self {
            code: protocol_code(&err),
            message: err.to_string(),
        }
    }
}

fn aggregate_code(err: &AggregateError, policy: FallbackPolicy) -> u8 {
    match err {
        AggregateError::MissingRepresentation { .. } if policy == FallbackPolicy::Strict => EXIT_COVERAGE,
        AggregateError::MissingRepresentation { .. } | AggregateError::InvalidWeights { .. } => EXIT_VALIDATION,
        _ => EXIT_COMPUTATION,
    }
}

fn protocol_code(err: &ProtocolError) -> u8 {
    match err {
        ProtocolError::FoldMismatch(_) => EXIT_COMPUTATION,
        _ => EXIT_VALIDATION,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let too_few = ProtocolError::TooFewPairs { n_pairs: 5, k: 10 };
        assert_eq!(CliError::from_protocol(too_few).code, EXIT_VALIDATION);
        let gap = PipelineError::Aggregate {
            pair_index: 0,
            sample_id: "a".into(),
            source: AggregateError::MissingRepresentation {
                sample_id: "a".into(),
                missing: vec![],
            },
        };
        assert_eq!(CliError::from_pipeline(gap, FallbackPolicy::Strict).code, EXIT_COVERAGE);
        let degenerate = PipelineError::Aggregate {
            pair_index: 0,
            sample_id: "a".into(),
            source: AggregateError::DegenerateSum(0.0),
        };
        assert_eq!(
            CliError::from_pipeline(degenerate, FallbackPolicy::RealFallback).code,
            EXIT_COMPUTATION
        );
        let missing = ManifestError::MissingBlob("x.bin".into());
        assert_eq!(CliError::from_manifest(Path::new("x.jsonl"), missing).code, EXIT_IO);
    }
}
