//! Binary policy checkpoints.
//!
//! Layout: `b"CYRL"`, `u32` format version, `u32` metadata length, metadata
//! JSON, then little-endian `f32` arrays (actor parameters, log-std, critic
//! parameters), then a SHA-256 digest of all preceding bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mlp::{Mlp, Topology};
use super::policy::{ActorCritic, RunningNorm};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"CYRL";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub actor: Topology,
    pub critic: Topology,
    pub normalizer: Option<RunningNorm>,
    /// Free-form provenance (seed, epoch, configuration, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

pub fn to_bytes<T: Scalar>(policy: &ActorCritic<T>, extra: serde_json::Value) -> Result<Vec<u8>> {
    let meta = CheckpointMeta {
        actor: policy.actor.topology().clone(),
        critic: policy.critic.topology().clone(),
        normalizer: policy.normalizer.clone(),
        extra,
    };
    let json = serde_json::to_vec(&meta)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in policy
        .actor
        .params()
        .iter()
        .chain(&policy.log_std)
        .chain(policy.critic.params())
    {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= buf.len())
        .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
    let s = &buf[*pos..end];
    *pos = end;
    Ok(s)
}

fn read_u32(buf: &[u8], pos: &mut usize) -> Result<u32> {
    let b = take(buf, pos, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

fn read_f32s<T: Scalar>(buf: &[u8], pos: &mut usize, n: usize) -> Result<Vec<T>> {
    let b = take(buf, pos, n * 4)?;
    Ok(b.chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect())
}

pub fn from_bytes<T: Scalar>(buf: &[u8]) -> Result<(ActorCritic<T>, CheckpointMeta)> {
    if buf.len() < MAGIC.len() || &buf[..4] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    if buf.len() < 12 + DIGEST_LEN {
        return Err(Error::Checkpoint("truncated checkpoint".into()));
    }
    let (body, digest) = buf.split_at(buf.len() - DIGEST_LEN);
    let mut pos = 4;
    let version = read_u32(body, &mut pos)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checkpoint(
            "checksum mismatch (truncated or corrupt)".into(),
        ));
    }
    let len = read_u32(body, &mut pos)? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(take(body, &mut pos, len)?)
        .map_err(|e| Error::Checkpoint(format!("bad metadata: {e}")))?;
    let actor_params = read_f32s(body, &mut pos, meta.actor.num_params())?;
    let log_std = read_f32s(body, &mut pos, meta.actor.output)?;
    let critic_params = read_f32s(body, &mut pos, meta.critic.num_params())?;
    if pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after parameters".into()));
    }
    let policy = ActorCritic {
        actor: Mlp::from_params(meta.actor.clone(), actor_params)?,
        critic: Mlp::from_params(meta.critic.clone(), critic_params)?,
        log_std,
        normalizer: meta.normalizer.clone(),
    };
    Ok((policy, meta))
}

/// Writes atomically through a sibling temporary file.
pub fn save<T: Scalar>(
    path: &Path,
    policy: &ActorCritic<T>,
    extra: serde_json::Value,
) -> Result<()> {
    let bytes = to_bytes(policy, extra)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<(ActorCritic<T>, CheckpointMeta)> {
    from_bytes(&std::fs::read(path)?)
}
