// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Validation,
    Numeric,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Validation => 2,
            ErrorKind::Numeric => 3,
            ErrorKind::Io => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("pixel buffer has {actual} pixels, expected {expected}")]
    BufferSizeMismatch { expected: usize, actual: usize },
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("intensity {value} at pixel ({x}, {y}) is outside [0, 1]")]
    OutOfRange { x: usize, y: usize, value: f64 },
    #[error("affine transform is singular (|det| = {det:e})")]
    SingularTransform { det: f64 },

    #[error("{channel} channel is degenerate (statistic {value:e} is too close to zero)")]
    DegenerateChannel { channel: &'static str, value: f64 },
    #[error("white-balance system for the {channel} channel is singular")]
    SingularAwbSystem { channel: &'static str },
    #[error("histogram needs at least 2 bins, got {0}")]
    BadBinCount(usize),

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("no non-collinear sample found within {retries} draws")]
    NoValidSample { retries: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("canvas {width}x{height} exceeds the {limit} px per side limit")]
    CanvasTooLarge { width: f64, height: f64, limit: usize },
    #[error("no correspondences supplied for frame {0}")]
    MissingCorrespondences(usize),
    #[error("at least one frame is required")]
    NoFrames,

    #[error("frame {frame} is outside the layout ({frames} frames)")]
    FrameOutOfRange { frame: usize, frames: usize },
    #[error("fish {fish_id} has conflicting species labels {first:?} and {second:?}")]
    InconsistentSpecies {
        fish_id: String,
        first: String,
        second: String,
    },
    #[error("fish {fish_id} is annotated twice in frame {frame}")]
    DuplicateObservation { fish_id: String, frame: usize },

    #[error("trajectory spans zero time")]
    ZeroDuration,
    #[error("trajectory has a single observation")]
    SinglePoint,
    #[error("heading of fish {0} is undefined (head coincides with center)")]
    UndefinedHeading(String),
    #[error("nearest-neighbor features need at least 2 fish, got {0}")]
    TooFewFish(usize),
    #[error("fps must be positive, got {0}")]
    InvalidFps(f64),

    #[error("frame {frame} falls outside the texture under its transform")]
    FrameOutsideTexture { frame: usize },

    #[error("unsupported image format: {}", .0.display())]
    UnsupportedFormat(PathBuf),
    #[error("corrupt image file {}: {message}", path.display())]
    CorruptFile { path: PathBuf, message: String },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{}: missing column {column:?}", path.display())]
    MissingColumn { path: PathBuf, column: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InvalidConfig(_) | InvalidFps(_) => ErrorKind::Usage,
            SingularTransform { .. }
            | DegenerateChannel { .. }
            | SingularAwbSystem { .. }
            | DegenerateConfiguration(_)
            | NoValidSample { .. }
            | CanvasTooLarge { .. }
            | ZeroDuration
            | SinglePoint
            | UndefinedHeading(_)
            | TooFewFish(_) => ErrorKind::Numeric,
            UnsupportedFormat(_) | CorruptFile { .. } | Io { .. } => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }

    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            InvalidDimensions { .. } => "INVALID_DIMENSIONS",
            BufferSizeMismatch { .. } => "BUFFER_SIZE_MISMATCH",
            NonFiniteInput(_) => "NON_FINITE_INPUT",
            OutOfRange { .. } => "OUT_OF_RANGE",
            SingularTransform { .. } => "SINGULAR_TRANSFORM",
            DegenerateChannel { .. } => "DEGENERATE_CHANNEL",
            SingularAwbSystem { .. } => "SINGULAR_AWB_SYSTEM",
            BadBinCount(_) => "BAD_BIN_COUNT",
            DegenerateConfiguration(_) => "DEGENERATE_CONFIGURATION",
            NoValidSample { .. } => "NO_VALID_SAMPLE",
            InvalidConfig(_) => "INVALID_CONFIG",
            DimensionMismatch(_) => "DIMENSION_MISMATCH",
            CanvasTooLarge { .. } => "CANVAS_TOO_LARGE",
            MissingCorrespondences(_) => "MISSING_CORRESPONDENCES",
            NoFrames => "NO_FRAMES",
            FrameOutOfRange { .. } => "FRAME_OUT_OF_RANGE",
            InconsistentSpecies { .. } => "INCONSISTENT_SPECIES",
            DuplicateObservation { .. } => "DUPLICATE_OBSERVATION",
            ZeroDuration => "ZERO_DURATION",
            SinglePoint => "SINGLE_POINT",
            UndefinedHeading(_) => "UNDEFINED_HEADING",
            TooFewFish(_) => "TOO_FEW_FISH",
            InvalidFps(_) => "INVALID_FPS",
            FrameOutsideTexture { .. } => "FRAME_OUTSIDE_TEXTURE",
            UnsupportedFormat(_) => "UNSUPPORTED_FORMAT",
            CorruptFile { .. } => "CORRUPT_FILE",
            Parse { .. } => "PARSE_ERROR",
            MissingColumn { .. } => "MISSING_COLUMN",
            Io { .. } => "IO_ERROR",
        }
    }
}
