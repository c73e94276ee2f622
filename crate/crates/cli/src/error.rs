use origami_core::analysis::AnalysisError;
use origami_core::collision::CollisionError;
use origami_core::kinematics::KinematicsError;
use origami_core::model::ModelError;
use origami_core::singlevertex::SingleVertexError;
use origami_core::tracking::TrackingError;
use serde_json::json;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("bad argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Collision(#[from] CollisionError),
    #[error(transparent)]
    SingleVertex(#[from] SingleVertexError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io(..) => "Io",
            CliError::Config(_) => "Config",
            CliError::Argument(_) => "Argument",
            CliError::Model(e) => match e {
                ModelError::Format(_) => "Format",
                ModelError::NonPlanar(..) => "NonPlanar",
                ModelError::VertexOnCrease { .. } => "VertexOnCrease",
                ModelError::OpenPanel { .. } => "OpenPanel",
                ModelError::DanglingCrease { .. } => "DanglingCrease",
                ModelError::Disconnected => "Disconnected",
                ModelError::BadHole { .. } => "BadHole",
                ModelError::InvalidBasePanel(_) => "InvalidBasePanel",
                ModelError::RhoOutOfRange { .. } => "RhoOutOfRange",
                ModelError::BadSectorAngle { .. } => "BadSectorAngle",
                ModelError::LambdaConflict(..) => "LambdaConflict",
                ModelError::Json(_) => "Json",
            },
            CliError::Kinematics(e) => match e {
                KinematicsError::WrongLength { .. } => "WrongLength",
                KinematicsError::PointOutsidePanel(_) => "PointOutsidePanel",
            },
            CliError::Analysis(e) => match e {
                AnalysisError::NotOnVariety(_) => "NotOnVariety",
                AnalysisError::NotAFlex(_) => "NotAFlex",
                AnalysisError::NotDevelopable => "NotDevelopable",
                AnalysisError::HasHoles => "HasHoles",
                AnalysisError::FormulaMismatch { .. } => "FormulaMismatch",
            },
            CliError::Tracking(e) => match e {
                TrackingError::NotOnVariety(_) => "NotOnVariety",
                TrackingError::NotAFlex(_) => "NotAFlex",
                TrackingError::CorrectorDiverged => "CorrectorDiverged",
                TrackingError::WrongLength { .. } => "WrongLength",
                TrackingError::NotForest { .. } => "NotForest",
                TrackingError::NonGenericIntersection { .. } => "NonGenericIntersection",
                TrackingError::EmptyIntersection { .. } => "EmptyIntersection",
                TrackingError::BadVertexPath { .. } => "BadVertexPath",
            },
            CliError::Collision(e) => match e {
                CollisionError::NotOnVariety(_) => "NotOnVariety",
                CollisionError::NotStacked(..) => "NotStacked",
            },
            CliError::SingleVertex(e) => match e {
                SingleVertexError::NotDegree3(_) => "NotDegree3",
                SingleVertexError::BadAngles => "BadAngles",
                SingleVertexError::NoCase => "NoCase",
                SingleVertexError::BadDegree(_) => "BadDegree",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "NotOnVariety" | "NotAFlex" | "CorrectorDiverged" | "FormulaMismatch" => EXIT_NUMERIC,
            "NotForest" | "NonGenericIntersection" | "EmptyIntersection" | "BadVertexPath" => EXIT_INFEASIBLE,
            _ => EXIT_INVALID,
        }
    }

    pub fn to_json(&self) -> String {
        let v = json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        serde_json::to_string_pretty(&v).expect("error JSON serializes")
    }
}
