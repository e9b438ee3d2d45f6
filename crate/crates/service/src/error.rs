use autoviz::bench::BenchError;
use autoviz::goals::GoalError;
use autoviz::infographer::InfographerError;
use autoviz::llm::ProviderError;
use autoviz::ops::OpsError;
use autoviz::summary::SummaryError;
use autoviz::vis::VisError;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Coarse error category. Decides the HTTP status and the CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Validation,
    NotFound,
    Conflict,
    PayloadTooLarge,
    Provider,
    NoViableCandidate,
    Io,
    Internal,
}

impl ErrorKind {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorKind::Usage | ErrorKind::Validation | ErrorKind::NoViableCandidate => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Conflict => StatusCode::CONFLICT,
            ErrorKind::PayloadTooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            ErrorKind::Provider => StatusCode::BAD_GATEWAY,
            ErrorKind::Io | ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Internal => 1,
            ErrorKind::Usage => 2,
            ErrorKind::Validation | ErrorKind::PayloadTooLarge => 3,
            ErrorKind::Provider => 4,
            ErrorKind::NoViableCandidate => 5,
            ErrorKind::Io => 6,
            ErrorKind::NotFound => 7,
            ErrorKind::Conflict => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct AppError {
    pub kind: ErrorKind,
    pub class: String,
    pub message: String,
    pub detail: Option<Value>,
}

impl AppError {
    pub fn new(kind: ErrorKind, class: impl Into<String>, message: impl Into<String>) -> Self {
        Self { kind, class: class.into(), message: message.into(), detail: None }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn validation(class: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Validation, class, message)
    }

    pub fn not_found(class: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::NotFound, class, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Io, "io", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Internal, "internal", message)
    }

    pub fn body(&self) -> Value {
        let mut error = json!({ "kind": self.kind, "class": self.class, "message": self.message });
        if let Some(detail) = &self.detail {
            error["detail"] = detail.clone();
        }
        json!({ "error": error })
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        if self.kind.status().is_server_error() || self.kind == ErrorKind::Provider {
            tracing::warn!(class = %self.class, "{}", self.message);
        }
        (self.kind.status(), Json(self.body())).into_response()
    }
}

impl From<ProviderError> for AppError {
    fn from(e: ProviderError) -> Self {
        AppError::new(ErrorKind::Provider, e.class(), e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::io(e.to_string())
    }
}

impl From<SummaryError> for AppError {
    fn from(e: SummaryError) -> Self {
        let class = match &e {
            SummaryError::Provider(p) => return p.clone().into(),
            SummaryError::Io(_) => "dataset_io",
            SummaryError::Parse { .. } => "dataset_parse",
            SummaryError::EmptyDataset => "empty_dataset",
            SummaryError::HeaderMissing => "header_missing",
            SummaryError::DuplicateColumn(_) => "duplicate_column",
            SummaryError::UnknownField(_) => "unknown_field",
            SummaryError::AlreadyEnriched => "already_enriched",
        };
        AppError::validation(class, e.to_string())
    }
}

impl From<GoalError> for AppError {
    fn from(e: GoalError) -> Self {
        match e {
            GoalError::Provider(p) => p.into(),
            GoalError::InvalidGoalCount => AppError::validation("invalid_goal_count", e.to_string()),
            GoalError::NoParsableJson => AppError::new(ErrorKind::Provider, "no_parsable_json", e.to_string()),
            GoalError::AllGoalsRejected { ref rejections, .. } => {
                let detail = serde_json::to_value(rejections).unwrap_or(Value::Null);
                AppError::new(ErrorKind::Provider, "all_goals_rejected", e.to_string()).with_detail(detail)
            }
        }
    }
}

impl From<VisError> for AppError {
    fn from(e: VisError) -> Self {
        let class = match &e {
            VisError::Provider(p) => return p.clone().into(),
            VisError::NoViableCandidate { .. } => {
                return AppError::new(ErrorKind::NoViableCandidate, "no_viable_candidate", e.to_string())
            }
            VisError::InvalidScaffold { .. } => return AppError::internal(e.to_string()),
            VisError::UnknownGrammar(_) => "unknown_grammar",
            VisError::EmptyStub => "empty_stub",
            VisError::InvalidPolicy(_) => "invalid_policy",
        };
        AppError::validation(class, e.to_string())
    }
}

impl From<OpsError> for AppError {
    fn from(e: OpsError) -> Self {
        let message = e.to_string();
        match e {
            OpsError::Provider(p) => p.into(),
            OpsError::Vis(v) => v.into(),
            OpsError::EmptyCode => AppError::validation("empty_code", message),
            OpsError::EmptyInstruction => AppError::validation("empty_instruction", message),
            OpsError::InvalidCount => AppError::validation("invalid_count", message),
            OpsError::NotCompiled(_) => AppError::validation("not_compiled", message),
            OpsError::NoViableCandidate { attempts } => {
                let detail = serde_json::to_value(attempts).unwrap_or(Value::Null);
                AppError::new(ErrorKind::NoViableCandidate, "no_viable_candidate", message).with_detail(detail)
            }
            OpsError::ExplanationParseFailure { raw } => {
                AppError::new(ErrorKind::Provider, "explanation_parse_failure", message)
                    .with_detail(json!({ "raw": raw }))
            }
            OpsError::ScoreParseFailure { reply, .. } => {
                AppError::new(ErrorKind::Provider, "score_parse_failure", message)
                    .with_detail(json!({ "reply": reply }))
            }
            OpsError::EvaluationFailed { .. } => AppError::new(ErrorKind::Provider, "evaluation_failed", message),
            OpsError::NoParsableJson => AppError::new(ErrorKind::Provider, "no_parsable_json", message),
        }
    }
}

impl From<InfographerError> for AppError {
    fn from(e: InfographerError) -> Self {
        let class = match &e {
            InfographerError::Provider(p) => return p.clone().into(),
            InfographerError::Io(m) => return AppError::io(m.clone()),
            InfographerError::UnknownStyle(_) => "unknown_style",
            InfographerError::StrengthOutOfRange(_) => "strength_out_of_range",
            InfographerError::NoStyle => "no_style",
            InfographerError::BadImage { .. } => "bad_image",
            InfographerError::InvalidLibrary(_) => "invalid_style_library",
        };
        AppError::validation(class, e.to_string())
    }
}

impl From<BenchError> for AppError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Provider(p) => p.into(),
            BenchError::Dataset { source, path } => {
                let inner: AppError = source.into();
                AppError { message: format!("{path}: {}", inner.message), ..inner }
            }
            other => AppError::validation("benchmark_config", other.to_string()),
        }
    }
}
