use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, OptionalFromRequest, Request};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use classbot::dataset::ParseError;
use classbot::pipeline::PipelineError;
use classbot::project::{ProjectError, StepError, StoreError};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

/// Error document: `{"error": {"code", "message", "details"?}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn parse_errors(errors: &[ParseError]) -> Self {
        let message = errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n");
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_dataset", message).with_details(json!({ "parse_errors": errors }))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "code": self.code, "message": self.message });
        if let Some(details) = self.details {
            body["details"] = details;
        }
        (self.status, Json(json!({ "error": body }))).into_response()
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        let message = e.to_string();
        match e {
            ProjectError::Unrepresentable(errors) if !errors.is_empty() => Self::parse_errors(&errors),
            ProjectError::NoModel => Self::conflict("no_model", message),
            ProjectError::Pipeline(p) => p.into(),
            ProjectError::Train(_) | ProjectError::Split(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "training_precondition", message),
            ProjectError::Eval(_) => Self::internal(message),
            _ => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let message = e.to_string();
        match &e {
            PipelineError::EmptyQuestion => Self::bad_request(message),
            PipelineError::InvalidConfig(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message),
            PipelineError::Labels(_) => Self::conflict("label_mismatch", message),
            PipelineError::Classifier { .. } | PipelineError::Qa { .. } => {
                let trace = serde_json::to_value(e.trace()).unwrap_or(Value::Null);
                Self::new(StatusCode::BAD_GATEWAY, "pipeline_failure", message).with_details(json!({ "trace": trace }))
            }
        }
    }
}

impl From<StepError> for ApiError {
    fn from(e: StepError) -> Self {
        let message = e.to_string();
        match e {
            StepError::OutOfRange(_) => Self::not_found(message),
            StepError::PreviousIncomplete { step, missing } => {
                Self::conflict("step_unavailable", message).with_details(json!({ "step": step, "missing": missing }))
            }
            StepError::Gate { step, unmet } => Self::conflict("gate", message).with_details(json!({ "step": step, "unmet": unmet })),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::Locked(_) => Self::conflict("locked", message),
            StoreError::NotAProject(_) => Self::not_found(message),
            StoreError::Invariant(issues) => Self::conflict("read_only", message).with_details(json!({ "issues": issues })),
            _ => Self::internal(message),
        }
    }
}

/// `Json` whose rejections use the API error document.
pub struct Body<T>(pub T);

fn rejected(e: JsonRejection) -> ApiError {
    ApiError::new(e.status(), "bad_request", e.body_text())
}

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let Json(v) = <Json<T> as FromRequest<S>>::from_request(req, state).await.map_err(rejected)?;
        Ok(Body(v))
    }
}

impl<S: Send + Sync, T: DeserializeOwned> OptionalFromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Option<Self>, ApiError> {
        let v = <Json<T> as OptionalFromRequest<S>>::from_request(req, state).await.map_err(rejected)?;
        Ok(v.map(|Json(v)| Body(v)))
    }
}
