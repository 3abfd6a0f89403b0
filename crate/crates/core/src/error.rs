use std::fmt;

/// Pipeline stage tags carried by [`Error::Stage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Composite,
    Chip,
    Ingest,
    Consolidate,
    Link,
    Enrich,
    Stats,
    Eval,
    Export,
    Simulate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Composite => "composite",
            Stage::Chip => "chip",
            Stage::Ingest => "ingest",
            Stage::Consolidate => "consolidate",
            Stage::Link => "link",
            Stage::Enrich => "enrich",
            Stage::Stats => "stats",
            Stage::Eval => "eval",
            Stage::Export => "export",
            Stage::Simulate => "simulate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("tile {width}x{height} is smaller than one chip; pad it first")]
    PaddingRequired { width: usize, height: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("footprint: {0}")]
    Footprint(String),

    #[error("input: {0}")]
    Input(String),

    #[error("layer: {0}")]
    Layer(String),

    #[error("schema: {msg} (columns found: {})", found.join(","))]
    Schema { msg: String, found: Vec<String> },

    #[error("empty summary: {0}")]
    EmptySummary(String),

    #[error("spec: {0}")]
    Spec(String),

    #[error("{stage} failed for {unit}: {source}")]
    Stage {
        stage: Stage,
        unit: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    /// Wrap an error with the stage and unit (tile, quarter, ...) it came from.
    pub fn at_stage(self, stage: Stage, unit: impl Into<String>) -> Self {
        Error::Stage { stage, unit: unit.into(), source: Box::new(self) }
    }
}

/// Extension for tagging `Result`s with a stage.
pub trait StageExt<T> {
    fn stage(self, stage: Stage, unit: impl Into<String>) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage, unit: impl Into<String>) -> Result<T> {
        self.map_err(|e| e.at_stage(stage, unit))
    }
}
