//! Trajectory persistence: CSV (one row per step, plus a terminal row with
//! empty action cells), a compact binary cache, and the demonstration
//! manifest.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{EnvSpec, ExpertSpec, TrueConstraint};
use crate::error::{PuclError, Result};
use crate::types::{StateAction, Trajectory};

pub fn write_trajectories_csv<W: Write>(trajectories: &[Trajectory], w: W) -> Result<()> {
    let (sdim, adim) = dims(trajectories);
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![
        "trajectory".to_string(),
        "start_index".into(),
        "step".into(),
    ];
    header.extend((0..sdim).map(|i| format!("s{i}")));
    header.extend((0..adim).map(|i| format!("a{i}")));
    out.write_record(&header)?;
    for (ti, t) in trajectories.iter().enumerate() {
        let prefix = |step: usize| {
            vec![
                ti.to_string(),
                t.start_index().to_string(),
                step.to_string(),
            ]
        };
        for (si, sa) in t.steps().iter().enumerate() {
            let mut row = prefix(si);
            row.extend(sa.state.iter().map(|v| format!("{v:?}")));
            row.extend(sa.action.iter().map(|v| format!("{v:?}")));
            out.write_record(&row)?;
        }
        let mut row = prefix(t.len());
        row.extend(t.terminal().iter().map(|v| format!("{v:?}")));
        row.extend(std::iter::repeat(String::new()).take(adim));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn dims(trajectories: &[Trajectory]) -> (usize, usize) {
    let sdim = trajectories
        .first()
        .map(|t| t.terminal().len())
        .unwrap_or(0);
    let adim = trajectories
        .iter()
        .find_map(|t| t.steps().first().map(|sa| sa.action.len()))
        .unwrap_or(0);
    (sdim, adim)
}

fn parse(field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| PuclError::Format(format!("bad number `{field}`")))
}

/// Reads trajectories written by [`write_trajectories_csv`]; returns are
/// recomputed by `env`.
pub fn read_trajectories_csv<R: Read>(r: R, env: &EnvSpec) -> Result<Vec<Trajectory>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let sdim = header
        .iter()
        .filter(|h| h.starts_with('s') && h[1..].parse::<usize>().is_ok())
        .count();
    let adim = header
        .iter()
        .filter(|h| h.starts_with('a') && h[1..].parse::<usize>().is_ok())
        .count();
    if sdim != env.state_dim() {
        return Err(PuclError::DimensionMismatch {
            expected: env.state_dim(),
            found: sdim,
        });
    }
    let mut out = Vec::new();
    let mut steps: Vec<StateAction> = Vec::new();
    let mut current: Option<usize> = None;
    for record in rdr.records() {
        let record = record?;
        if record.len() != 3 + sdim + adim {
            return Err(PuclError::Format(
                "row width does not match the header".into(),
            ));
        }
        let id: usize = record[0]
            .parse()
            .map_err(|_| PuclError::Format("bad trajectory id".into()))?;
        let start_index: usize = record[1]
            .parse()
            .map_err(|_| PuclError::Format("bad start index".into()))?;
        if current.is_some_and(|c| c != id) {
            return Err(PuclError::Format(format!(
                "trajectory {id} starts before the previous one ended"
            )));
        }
        current = Some(id);
        let state = (3..3 + sdim)
            .map(|i| parse(&record[i]))
            .collect::<Result<Vec<f64>>>()?;
        if (3 + sdim..record.len()).all(|i| record[i].is_empty()) {
            let mut t = Trajectory::new(std::mem::take(&mut steps), state, start_index, 0.0)?;
            let ret = env.trajectory_return(&t);
            t = Trajectory::new(t.steps().to_vec(), t.terminal().to_vec(), start_index, ret)?;
            out.push(t);
            current = None;
        } else {
            let action = (3 + sdim..3 + sdim + adim)
                .map(|i| parse(&record[i]))
                .collect::<Result<Vec<f64>>>()?;
            steps.push(StateAction::new(state, action)?);
        }
    }
    if !steps.is_empty() {
        return Err(PuclError::Format(
            "last trajectory has no terminal row".into(),
        ));
    }
    Ok(out)
}

const MAGIC: &[u8; 8] = b"PUCLTRJ1";

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_all<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_vec<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        })
        .collect()
}

/// Little-endian binary cache; round-trips bit-exactly including the
/// cached return.
pub fn write_trajectories_binary<W: Write>(trajectories: &[Trajectory], mut w: W) -> Result<()> {
    let (sdim, adim) = dims(trajectories);
    w.write_all(MAGIC)?;
    put_u64(&mut w, trajectories.len() as u64)?;
    put_u64(&mut w, sdim as u64)?;
    put_u64(&mut w, adim as u64)?;
    for t in trajectories {
        put_u64(&mut w, t.start_index() as u64)?;
        put_u64(&mut w, t.len() as u64)?;
        w.write_all(&t.cached_return().to_le_bytes())?;
        for sa in t.steps() {
            put_all(&mut w, &sa.state)?;
            put_all(&mut w, &sa.action)?;
        }
        put_all(&mut w, t.terminal())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectories_binary<R: Read>(mut r: R) -> Result<Vec<Trajectory>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(PuclError::Format("not a trajectory cache".into()));
    }
    let count = get_u64(&mut r)? as usize;
    let sdim = get_u64(&mut r)? as usize;
    let adim = get_u64(&mut r)? as usize;
    if sdim > 1 << 16 || adim > 1 << 16 {
        return Err(PuclError::Format("implausible dimensions in cache".into()));
    }
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let start_index = get_u64(&mut r)? as usize;
        let len = get_u64(&mut r)? as usize;
        let ret = get_vec(&mut r, 1)?[0];
        let mut steps = Vec::with_capacity(len.min(1 << 20));
        for _ in 0..len {
            let state = get_vec(&mut r, sdim)?;
            let action = get_vec(&mut r, adim)?;
            steps.push(StateAction::new(state, action)?);
        }
        let terminal = get_vec(&mut r, sdim)?;
        out.push(Trajectory::new(steps, terminal, start_index, ret)?);
    }
    Ok(out)
}

/// Provenance of a stored demonstration set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoManifest {
    pub env_hash: String,
    pub seed: u64,
    pub count: usize,
    pub attempts: usize,
    pub expert: ExpertSpec,
    pub reference_returns: Vec<f64>,
    pub trajectories_csv: String,
    #[serde(default)]
    pub cache: Option<String>,
}

/// SHA-256 over the JSON encoding of the environment and true constraint.
pub fn env_hash(env: &EnvSpec, constraint: &TrueConstraint) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(env)?);
    h.update(b"\n");
    h.update(serde_json::to_vec(constraint)?);
    Ok(hex::encode(h.finalize()))
}

impl DemoManifest {
    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }

    /// Fails unless the manifest was produced for this environment.
    pub fn check(&self, env: &EnvSpec, constraint: &TrueConstraint) -> Result<()> {
        let h = env_hash(env, constraint)?;
        if h == self.env_hash {
            Ok(())
        } else {
            Err(PuclError::Config(format!(
                "demonstrations were generated for environment {} but the config describes {h}",
                self.env_hash
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ExperimentConfig, Task};

    fn sample() -> (EnvSpec, Vec<Trajectory>) {
        let env = ExperimentConfig::preset(Task::Reaching2d).env;
        let a = env
            .rollout(&|_: &[f64], _: usize| vec![0.3, 0.1], &[0.2, 0.7], 0)
            .unwrap();
        let b = env
            .rollout(&|_: &[f64], _: usize| vec![0.1, -0.4], &[0.25, 1.3], 1)
            .unwrap();
        let c = env
            .rollout(&|_: &[f64], _: usize| vec![0.0, 0.0], &[1.8, 1.0], 2)
            .unwrap();
        (env, vec![a, b, c])
    }

    #[test]
    fn csv_round_trip() {
        let (env, trajs) = sample();
        let mut buf = Vec::new();
        write_trajectories_csv(&trajs, &mut buf).unwrap();
        let back = read_trajectories_csv(buf.as_slice(), &env).unwrap();
        assert_eq!(back.len(), 3);
        for (x, y) in back.iter().zip(&trajs) {
            assert_eq!(x.steps(), y.steps());
            assert_eq!(x.terminal(), y.terminal());
            assert_eq!(x.start_index(), y.start_index());
            assert!((x.cached_return() - y.cached_return()).abs() < 1e-9);
        }
        assert!(back[2].is_empty());
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let (_, trajs) = sample();
        let mut buf = Vec::new();
        write_trajectories_binary(&trajs, &mut buf).unwrap();
        assert_eq!(read_trajectories_binary(buf.as_slice()).unwrap(), trajs);
        buf[0] = b'X';
        assert!(read_trajectories_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn env_hash_tracks_the_environment() {
        let cfg = ExperimentConfig::preset(Task::Reaching2d);
        let h = env_hash(&cfg.env, &cfg.constraint).unwrap();
        assert_eq!(h.len(), 64);
        let mut env = cfg.env.clone();
        env.dt = 0.025;
        assert_ne!(h, env_hash(&env, &cfg.constraint).unwrap());
    }
}
