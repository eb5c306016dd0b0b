use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed JSON. Byte offset is computed from the parser's line/column
    /// against the original input.
    #[error("malformed JSON at line {line}, column {column} (byte {offset}): {msg}")]
    Json { line: usize, column: usize, offset: usize, msg: String },

    /// Structurally invalid case content (bad reference, wrong arity, ...).
    /// Named by the offending field so callers can surface it directly.
    #[error("schema violation in `{field}`: {msg}")]
    Schema { field: String, msg: String },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("supervision cannot be built: {0}")]
    Supervision(String),

    /// Tensor op applied to incompatible shapes.
    #[error("shape mismatch in op `{op}`: lhs {lhs} vs rhs {rhs}")]
    Shape { op: String, lhs: String, rhs: String },

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("infeasible scenario: {0}")]
    Infeasible(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("invalid configuration: {what}")]
    Config { what: String },

    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn schema(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema { field: field.into(), msg: msg.into() }
    }

    pub fn config(what: impl Into<String>) -> Self {
        Error::Config { what: what.into() }
    }
}

/// Maps a serde_json error to [`Error::Json`], recovering the byte offset
/// from the reported line/column.
pub fn json_error(src: &str, err: &serde_json::Error) -> Error {
    let (line, column) = (err.line(), err.column());
    let mut offset = 0usize;
    for (i, l) in src.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            offset += column.saturating_sub(1);
            break;
        }
        offset += l.len();
    }
    Error::Json { line, column, offset, msg: err.to_string() }
}
