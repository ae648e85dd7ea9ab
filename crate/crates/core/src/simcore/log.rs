//! Trajectory logs.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! header:  b"TSTR"  u32 version (=1)  u32 n_f64 (=69)
//! record:  u64 step_count, then 69 × f64:
//!          t, p.x, p.y, psi, v.x, v.y, omega, gait_phase,
//!          action[8], observation[27], mu, roughness,
//!          force[8], slip[8], stance[4] (0/1), saturated[4] (0/1)
//! ```

use std::io::{self, Read, Write};

use super::{Action, ContactResult, Observation, RobotState, ACTION_DIM, N_FEET, OBS_DIM};
use crate::terrain::TerrainParams;

pub const LOG_MAGIC: &[u8; 4] = b"TSTR";
pub const LOG_RECORD_F64S: usize = 8 + ACTION_DIM + OBS_DIM + 2 + 4 * N_FEET + 2 * N_FEET;
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    pub state: RobotState,
    pub action: Action,
    pub obs: Observation,
    pub terrain: TerrainParams,
    pub contact: ContactResult,
}

impl LogRecord {
    fn to_f64s(&self) -> Vec<f64> {
        let s = &self.state;
        let mut v = vec![self.t, s.p[0], s.p[1], s.psi, s.v[0], s.v[1], s.omega, s.gait_phase];
        v.extend_from_slice(&self.action.flat());
        v.extend_from_slice(&self.obs.values);
        v.push(self.terrain.mu);
        v.push(self.terrain.roughness);
        for f in &self.contact.force {
            v.extend_from_slice(f);
        }
        for f in &self.contact.slip {
            v.extend_from_slice(f);
        }
        v.extend(self.contact.stance.iter().map(|&b| b as u8 as f64));
        v.extend(self.contact.saturated.iter().map(|&b| b as u8 as f64));
        v
    }

    fn from_f64s(step_count: u64, v: &[f64]) -> Self {
        let mut it = v.iter().copied();
        let mut next = || it.next().unwrap();
        let t = next();
        let state = RobotState {
            p: [next(), next()],
            psi: next(),
            v: [next(), next()],
            omega: next(),
            gait_phase: next(),
            step_count,
        };
        let mut a = [0.0; ACTION_DIM];
        a.iter_mut().for_each(|x| *x = next());
        let mut o = [0.0; OBS_DIM];
        o.iter_mut().for_each(|x| *x = next());
        let terrain = TerrainParams { mu: next(), roughness: next() };
        let mut c = ContactResult::default();
        for f in c.force.iter_mut() {
            *f = [next(), next()];
        }
        for f in c.slip.iter_mut() {
            *f = [next(), next()];
        }
        for b in c.stance.iter_mut() {
            *b = next() != 0.0;
        }
        for b in c.saturated.iter_mut() {
            *b = next() != 0.0;
        }
        Self {
            t,
            state,
            action: Action::from_slice(&a, f64::INFINITY),
            obs: Observation { values: o },
            terrain,
            contact: c,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub records: Vec<LogRecord>,
}

impl TrajectoryLog {
    pub fn push(&mut self, r: LogRecord) {
        self.records.push(r);
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(LOG_MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(LOG_RECORD_F64S as u32).to_le_bytes())?;
        for r in &self.records {
            w.write_all(&r.state.step_count.to_le_bytes())?;
            for x in r.to_f64s() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

pub fn read_log<R: Read>(mut r: R) -> io::Result<TrajectoryLog> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let mut head = [0u8; 12];
    r.read_exact(&mut head)?;
    if &head[..4] != LOG_MAGIC {
        return Err(bad("not a trajectory log"));
    }
    if u32::from_le_bytes(head[4..8].try_into().unwrap()) != VERSION {
        return Err(bad("unsupported log version"));
    }
    if u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize != LOG_RECORD_F64S {
        return Err(bad("unexpected record width"));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let rec = 8 + 8 * LOG_RECORD_F64S;
    if bytes.len() % rec != 0 {
        return Err(bad("truncated record"));
    }
    let records = bytes
        .chunks_exact(rec)
        .map(|c| {
            let step = u64::from_le_bytes(c[..8].try_into().unwrap());
            let v: Vec<f64> = c[8..].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            LogRecord::from_f64s(step, &v)
        })
        .collect();
    Ok(TrajectoryLog { records })
}

pub fn write_log_csv<W: Write>(log: &TrajectoryLog, mut w: W) -> io::Result<()> {
    let mut cols = vec!["step".to_string(), "t".into(), "x".into(), "y".into(), "psi".into()];
    cols.extend(["vx", "vy", "omega", "gait_phase"].map(String::from));
    cols.extend((0..ACTION_DIM).map(|i| format!("a{i}")));
    cols.extend((0..OBS_DIM).map(|i| format!("o{i}")));
    cols.extend(["mu", "roughness"].map(String::from));
    cols.extend((0..N_FEET).flat_map(|i| [format!("f{i}x"), format!("f{i}y")]));
    cols.extend((0..N_FEET).flat_map(|i| [format!("s{i}x"), format!("s{i}y")]));
    cols.extend((0..N_FEET).map(|i| format!("stance{i}")));
    cols.extend((0..N_FEET).map(|i| format!("sat{i}")));
    writeln!(w, "{}", cols.join(","))?;
    for r in &log.records {
        let vals: Vec<String> = r.to_f64s().iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{},{}", r.state.step_count, vals.join(","))?;
    }
    Ok(())
}
