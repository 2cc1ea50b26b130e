//! Binary dataset cache.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes  "PCSRSIM\0"
//! version    u32      1
//! spec       u32 length + UTF-8 TOML scenario
//! states     u64 count, then per state 20 × f64:
//!            t, p[3], q[x y z w], v[3], omega[3], bg[3], ba[3]
//! features   u64 count, then 3 × f64 each
//! imu        u64 count, then 7 × f64 each: omega[3], accel[3], dt
//! frames     u64 count, then per frame:
//!            t f64, imu_index u64, u32 observation count,
//!            per observation: feature_id u64, u f64, v f64, label u8 (0 SLAM, 1 MSCKF)
//! ```

use std::io::{Read, Write};

use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};

use super::generate::{Dataset, FeatureObservation, Frame, GroundTruth, TrackLabel, TruthState};
use super::{ScenarioSpec, SimError};
use crate::models::ImuSample;

pub const CACHE_MAGIC: &[u8; 8] = b"PCSRSIM\0";
pub const CACHE_VERSION: u32 = 1;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.0.write_all(b)
    }
    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.bytes(&[v])
    }
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64s(&mut self, v: &[f64]) -> std::io::Result<()> {
        v.iter().try_for_each(|x| self.bytes(&x.to_le_bytes()))
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn array<const N: usize>(&mut self) -> Result<[u8; N], SimError> {
        let mut b = [0u8; N];
        self.0
            .read_exact(&mut b)
            .map_err(|e| SimError::Cache(format!("truncated file: {e}")))?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8, SimError> {
        Ok(self.array::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32, SimError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, SimError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, SimError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn vec3(&mut self) -> Result<Vector3<f64>, SimError> {
        Ok(Vector3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    fn count(&mut self) -> Result<usize, SimError> {
        let n = self.u64()?;
        usize::try_from(n).map_err(|_| SimError::Cache(format!("count {n} too large")))
    }
}

pub fn write_dataset(out: impl Write, d: &Dataset) -> Result<(), SimError> {
    let mut w = Writer(out);
    w.bytes(CACHE_MAGIC)?;
    w.u32(CACHE_VERSION)?;
    let spec = d.spec.to_toml()?;
    w.u32(spec.len() as u32)?;
    w.bytes(spec.as_bytes())?;
    w.u64(d.truth.states.len() as u64)?;
    for s in &d.truth.states {
        let q = s.q.coords;
        w.f64s(&[s.t])?;
        w.f64s(s.p.as_slice())?;
        w.f64s(&[q.x, q.y, q.z, q.w])?;
        for v in [&s.v, &s.omega, &s.bg, &s.ba] {
            w.f64s(v.as_slice())?;
        }
    }
    w.u64(d.truth.features.len() as u64)?;
    for f in &d.truth.features {
        w.f64s(f.as_slice())?;
    }
    w.u64(d.imu.len() as u64)?;
    for s in &d.imu {
        w.f64s(s.omega.as_slice())?;
        w.f64s(s.accel.as_slice())?;
        w.f64s(&[s.dt])?;
    }
    w.u64(d.frames.len() as u64)?;
    for f in &d.frames {
        w.f64s(&[f.t])?;
        w.u64(f.imu_index as u64)?;
        w.u32(f.observations.len() as u32)?;
        for o in &f.observations {
            w.u64(o.feature_id)?;
            w.f64s(o.pixel.as_slice())?;
            w.u8(match o.label {
                TrackLabel::Slam => 0,
                TrackLabel::Msckf => 1,
            })?;
        }
    }
    Ok(())
}

pub fn read_dataset(input: impl Read) -> Result<Dataset, SimError> {
    let mut r = Reader(input);
    if &r.array::<8>()? != CACHE_MAGIC {
        return Err(SimError::Cache("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CACHE_VERSION {
        return Err(SimError::Cache(format!("unsupported version {version}")));
    }
    let len = r.u32()? as usize;
    let mut text = vec![0u8; len];
    r.0.read_exact(&mut text)
        .map_err(|e| SimError::Cache(format!("truncated spec: {e}")))?;
    let text = String::from_utf8(text).map_err(|_| SimError::Cache("spec is not UTF-8".into()))?;
    let spec = ScenarioSpec::from_toml(&text)?;

    let n = r.count()?;
    let mut states = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let t = r.f64()?;
        let p = r.vec3()?;
        let (x, y, z, qw) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let q = UnitQuaternion::new_unchecked(Quaternion::new(qw, x, y, z));
        states.push(TruthState {
            t,
            p,
            q,
            v: r.vec3()?,
            omega: r.vec3()?,
            bg: r.vec3()?,
            ba: r.vec3()?,
        });
    }
    let n = r.count()?;
    let features = (0..n).map(|_| r.vec3()).collect::<Result<Vec<_>, _>>()?;
    let n = r.count()?;
    let mut imu = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        imu.push(ImuSample {
            omega: r.vec3()?,
            accel: r.vec3()?,
            dt: r.f64()?,
        });
    }
    let n = r.count()?;
    let mut frames = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let t = r.f64()?;
        let imu_index = r.count()?;
        let m = r.u32()? as usize;
        let mut observations = Vec::with_capacity(m);
        for _ in 0..m {
            let feature_id = r.u64()?;
            let pixel = Vector2::new(r.f64()?, r.f64()?);
            let label = match r.u8()? {
                0 => TrackLabel::Slam,
                1 => TrackLabel::Msckf,
                v => return Err(SimError::Cache(format!("bad track label {v}"))),
            };
            observations.push(FeatureObservation {
                feature_id,
                pixel,
                label,
            });
        }
        frames.push(Frame {
            t,
            imu_index,
            observations,
        });
    }
    Ok(Dataset {
        spec,
        truth: GroundTruth { states, features },
        imu,
        frames,
    })
}
