use thiserror::Error;

use crate::cloud::CloudError;
use crate::distance::DistanceError;
use crate::geometry::GeometryError;
use crate::imaging::ImagingError;
use crate::planes::PlaneError;
use crate::roof::RoofError;
use crate::scale::ScaleError;
use crate::stitching::StitchError;
use crate::synth::SynthError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure category; the CLI maps these onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Inputs did not parse or violate a precondition.
    Input,
    /// Inputs were valid but the estimator could not produce a result.
    Algorithm,
    /// Filesystem failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Plane(#[from] PlaneError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Roof(#[from] RoofError),
    #[error(transparent)]
    Stitch(#[from] StitchError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Module-qualified machine-readable code, e.g. `distance.too_few_clusters`.
    pub fn code(&self) -> String {
        let (module, kind) = match self {
            Error::Cloud(e) => ("cloud", e.kind()),
            Error::Geometry(e) => ("geometry", e.kind()),
            Error::Plane(e) => ("planes", e.kind()),
            Error::Distance(e) => match e {
                DistanceError::Plane(inner) => ("planes", inner.kind()),
                other => ("distance", other.kind()),
            },
            Error::Scale(e) => ("scale", e.kind()),
            Error::Imaging(e) => ("imaging", e.kind()),
            Error::Roof(e) => ("roof", e.kind()),
            Error::Stitch(e) => ("stitching", e.kind()),
            Error::Synth(e) => ("synth", e.kind()),
            Error::Config(_) => ("config", "invalid"),
            Error::Io { .. } => ("io", "failed"),
        };
        format!("{module}.{kind}")
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Imaging(ImagingError::Io(_)) => ErrorClass::Io,
            Error::Cloud(CloudError::Io(_)) => ErrorClass::Io,
            Error::Scale(ScaleError::Io(_)) => ErrorClass::Io,
            Error::Cloud(_) | Error::Config(_) | Error::Synth(_) => ErrorClass::Input,
            Error::Imaging(_) => ErrorClass::Input,
            Error::Scale(e) if e.is_input() => ErrorClass::Input,
            Error::Roof(e) if e.is_input() => ErrorClass::Input,
            Error::Distance(DistanceError::InvalidConfig(_)) => ErrorClass::Input,
            Error::Plane(PlaneError::InvalidConfig(_)) => ErrorClass::Input,
            Error::Stitch(StitchError::InvalidInput(_)) => ErrorClass::Input,
            _ => ErrorClass::Algorithm,
        }
    }
}
