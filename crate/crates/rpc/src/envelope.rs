//! Request and response messages.

use std::fmt;

use agsim_core::VehicleType;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Which endpoint a message belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    Multirotor,
    Car,
    World,
}

impl EndpointKind {
    pub const ALL: [EndpointKind; 3] = [EndpointKind::Multirotor, EndpointKind::Car, EndpointKind::World];

    pub fn as_str(self) -> &'static str {
        match self {
            EndpointKind::Multirotor => "multirotor",
            EndpointKind::Car => "car",
            EndpointKind::World => "world",
        }
    }

    pub fn vehicle_type(self) -> Option<VehicleType> {
        match self {
            EndpointKind::Multirotor => Some(VehicleType::Multirotor),
            EndpointKind::Car => Some(VehicleType::Car),
            EndpointKind::World => None,
        }
    }

    /// Port offset from the base port.
    pub fn offset(self) -> u16 {
        match self {
            EndpointKind::Multirotor => 0,
            EndpointKind::Car => 1,
            EndpointKind::World => 2,
        }
    }
}

impl From<VehicleType> for EndpointKind {
    fn from(v: VehicleType) -> Self {
        match v {
            VehicleType::Multirotor => EndpointKind::Multirotor,
            VehicleType::Car => EndpointKind::Car,
        }
    }
}

impl fmt::Display for EndpointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn empty_params() -> Value {
    Value::Object(Default::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcEnvelope {
    pub id: u64,
    pub vehicle_type: EndpointKind,
    /// Empty for world requests.
    pub vehicle_id: String,
    pub method: String,
    #[serde(default = "empty_params")]
    pub params: Value,
}

impl RpcEnvelope {
    pub fn new(id: u64, vehicle_type: EndpointKind, vehicle_id: &str, method: &str, params: Value) -> Self {
        Self {
            id,
            vehicle_type,
            vehicle_id: vehicle_id.to_string(),
            method: method.to_string(),
            params,
        }
    }

    pub fn world(id: u64, method: &str, params: Value) -> Self {
        Self::new(id, EndpointKind::World, "", method, params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    VehicleTypeMismatch,
    UnknownVehicle,
    UnknownMethod,
    NoSuchSensor,
    BadParams,
    MalformedRequest,
    FrameTooLarge,
    NotAvailable,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::VehicleTypeMismatch => "VEHICLE_TYPE_MISMATCH",
            ErrorCode::UnknownVehicle => "UNKNOWN_VEHICLE",
            ErrorCode::UnknownMethod => "UNKNOWN_METHOD",
            ErrorCode::NoSuchSensor => "NO_SUCH_SENSOR",
            ErrorCode::BadParams => "BAD_PARAMS",
            ErrorCode::MalformedRequest => "MALFORMED_REQUEST",
            ErrorCode::FrameTooLarge => "FRAME_TOO_LARGE",
            ErrorCode::NotAvailable => "NOT_AVAILABLE",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcResponse {
    pub id: u64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<ErrorCode>,
    /// Human-readable detail for errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
}

impl RpcResponse {
    pub fn ok(id: u64, payload: Value) -> Self {
        Self {
            id,
            status: Status::Ok,
            error_code: None,
            message: None,
            payload: Some(payload),
        }
    }

    pub fn error(id: u64, code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            id,
            status: Status::Error,
            error_code: Some(code),
            message: Some(message.into()),
            payload: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}
