//! JSON-over-websocket protocol between the live service and its clients.

use serde::{Deserialize, Serialize};

use bikelab_core::env::reward::RewardTerms;

/// JSON schema covering every client and server message.
pub const WIRE_MESSAGE_SCHEMA: &str = include_str!("../schemas/wire_message.schema.json");

/// Operator command envelope.
pub const V_CMD_MAX: f64 = 5.0;
pub const DELTA_CMD_MAX_DEG: f64 = 10.0;

/// Client to server. Every message carries a `seq` echoed in its ack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMsg {
    Command {
        seq: u64,
        v_cmd: f64,
        delta_cmd_deg: f64,
    },
    Reset {
        seq: u64,
        #[serde(default)]
        scenario: Option<String>,
    },
    /// Toggles the pause state.
    Pause { seq: u64 },
    SelectController { seq: u64, id: String },
    /// Claims command authority from its current holder.
    Takeover { seq: u64 },
    Release { seq: u64 },
}

impl ClientMsg {
    pub fn seq(&self) -> u64 {
        match self {
            ClientMsg::Command { seq, .. }
            | ClientMsg::Reset { seq, .. }
            | ClientMsg::Pause { seq }
            | ClientMsg::SelectController { seq, .. }
            | ClientMsg::Takeover { seq }
            | ClientMsg::Release { seq } => *seq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Fall,
    Reset,
    Timeout,
    AuthorityGranted,
    AuthorityRevoked,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WireTerms {
    pub surv: f64,
    pub vel: f64,
    pub steer: f64,
    pub act: f64,
    pub rate: f64,
}

impl From<RewardTerms> for WireTerms {
    fn from(t: RewardTerms) -> Self {
        Self {
            surv: t.surv,
            vel: t.vel,
            steer: t.steer,
            act: t.act,
            rate: t.rate,
        }
    }
}

/// Snapshot of the simulated bicycle; angles in rad except the command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMsg {
    pub t: f64,
    pub phi: f64,
    pub phi_dot: f64,
    pub delta: f64,
    pub v: f64,
    pub psi: f64,
    pub x: f64,
    pub y: f64,
    /// Weighted reward components of the latest step.
    pub reward_terms: WireTerms,
    pub controller: String,
    pub v_cmd: f64,
    pub delta_cmd_deg: f64,
    pub episode: u64,
    pub paused: bool,
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    State(StateMsg),
    Event {
        kind: EventKind,
        #[serde(skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    Ack {
        seq: u64,
        /// The command was moved into the envelope.
        #[serde(default)]
        clamped: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        v_cmd: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        delta_cmd_deg: Option<f64>,
    },
    Error {
        #[serde(skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
        message: String,
    },
}

impl ServerMsg {
    pub fn event(kind: EventKind) -> Self {
        ServerMsg::Event { kind, detail: None }
    }

    pub fn ack(seq: u64) -> Self {
        ServerMsg::Ack {
            seq,
            clamped: false,
            v_cmd: None,
            delta_cmd_deg: None,
        }
    }

    pub fn error(seq: Option<u64>, message: impl Into<String>) -> Self {
        ServerMsg::Error {
            seq,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }
}

/// Parses one client frame; malformed input becomes the error reply.
pub fn parse_client(text: &str) -> Result<ClientMsg, ServerMsg> {
    serde_json::from_str::<ClientMsg>(text).map_err(|e| {
        let seq = serde_json::from_str::<serde_json::Value>(text)
            .ok()
            .and_then(|v| v.get("seq").and_then(|s| s.as_u64()));
        ServerMsg::error(seq, format!("malformed message: {e}"))
    })
}

/// Clamps an operator command into the envelope. Returns
/// `(v_cmd, delta_cmd_deg, clamped)`.
pub fn clamp_command(v_cmd: f64, delta_cmd_deg: f64) -> (f64, f64, bool) {
    let v = v_cmd.clamp(0.0, V_CMD_MAX);
    let d = delta_cmd_deg.clamp(-DELTA_CMD_MAX_DEG, DELTA_CMD_MAX_DEG);
    (v, d, v != v_cmd || d != delta_cmd_deg)
}
