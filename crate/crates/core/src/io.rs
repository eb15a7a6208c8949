//! Run artifacts: CSV tables and flat binary snapshots with small headers.

use std::io::{Read, Write};
use std::path::Path;

use crate::attractor::{CloudPoint, CloudX, WzGapRow};
use crate::dynamics::EnergyDiagnostics;
use crate::error::Result;
use crate::field::Field;
use crate::kernel::{HistorySegment, PhaseSpaceParams};
use crate::noise::NoisePath;

/// Per-run diagnostics CSV with header `t,h_norm,v_norm,eta_norm,theta1,residual`.
pub fn write_run_csv(path: &Path, diag: &EnergyDiagnostics) -> Result<()> {
    let mut out = String::from("t,h_norm,v_norm,eta_norm,theta1,residual\n");
    for r in &diag.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.t,
            r.h_norm_sq.sqrt(),
            r.v_norm_sq.sqrt(),
            r.eta_norm_sq.sqrt(),
            r.theta1,
            r.residual
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Noise path dump with one column per derived process.
pub fn write_paths_csv(path: &Path, noise: &NoisePath, stride: usize) -> Result<()> {
    let mut header = String::from("t,w,z_star");
    for c in noise.colored_paths() {
        header.push_str(&format!(",zeta_{0},y_{0}", c.delta));
    }
    header.push('\n');
    let mut out = header;
    let stride = stride.max(1);
    for i in (0..noise.n_nodes()).step_by(stride) {
        out.push_str(&format!(
            "{},{},{}",
            noise.node_time(i),
            noise.w_nodes()[i],
            noise.z_star_nodes()[i]
        ));
        for c in noise.colored_paths() {
            out.push_str(&format!(",{},{}", c.zeta[i], c.y[i]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Wong-Zakai gap table: `delta,sup_gap,hist_gap,eps,seed`.
pub fn write_wz_csv(path: &Path, rows: &[(u64, WzGapRow)]) -> Result<()> {
    let mut out = String::from("delta,sup_gap,hist_gap,eps,seed\n");
    for (seed, r) in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.delta, r.sup_gap, r.hist_gap, r.eps, seed
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Attractor-convergence table: `delta,dist,floor,seed`.
pub fn write_usc_csv(path: &Path, rows: &[(f64, f64, f64, u64)]) -> Result<()> {
    let mut out = String::from("delta,dist,floor,seed\n");
    for (delta, dist, floor, seed) in rows {
        out.push_str(&format!("{delta},{dist},{floor},{seed}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

const FIELD_MAGIC: &[u8; 8] = b"SPECFLD1";
const CLOUD_MAGIC: &[u8; 8] = b"CLOUDX01";

fn push_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        (&self.data[self.pos..]).read_exact(&mut b)?;
        self.pos += 8;
        Ok(f64::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        (&self.data[self.pos..]).read_exact(&mut b)?;
        self.pos += 8;
        Ok(u64::from_le_bytes(b))
    }
}

/// Flat field snapshot: magic, domain length, mode count, coefficients.
pub fn write_field(path: &Path, l: f64, field: &Field) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 8 * field.len());
    buf.extend_from_slice(FIELD_MAGIC);
    push_f64(&mut buf, l);
    push_u64(&mut buf, field.len() as u64);
    for &c in &field.coeffs {
        push_f64(&mut buf, c);
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<(f64, Field)> {
    let data = std::fs::read(path)?;
    if data.len() < 24 || &data[..8] != FIELD_MAGIC {
        return Err(crate::error::CoreError::InvalidParameter(
            "not a field snapshot".into(),
        ));
    }
    let mut r = Reader { data: &data, pos: 8 };
    let l = r.f64()?;
    let n = r.u64()? as usize;
    let coeffs: Result<Vec<f64>> = (0..n).map(|_| r.f64()).collect();
    Ok((l, Field::from_coeffs(coeffs?)))
}

/// Cloud snapshot: grid parameters, mode count, then per point the field and
/// the history values row-major over grid nodes.
pub fn write_cloud(path: &Path, cloud: &CloudX) -> Result<()> {
    let n_modes = if cloud.points.is_empty() {
        0
    } else {
        cloud.points[0].field.len()
    };
    let mut buf = Vec::new();
    buf.extend_from_slice(CLOUD_MAGIC);
    push_f64(&mut buf, cloud.phase.gamma);
    push_f64(&mut buf, cloud.phase.s_max);
    push_u64(&mut buf, cloud.phase.grid.n as u64);
    push_u64(&mut buf, n_modes as u64);
    push_u64(&mut buf, cloud.points.len() as u64);
    push_u64(&mut buf, cloud.seed);
    push_f64(&mut buf, cloud.pullback_time);
    for p in &cloud.points {
        for &c in &p.field.coeffs {
            push_f64(&mut buf, c);
        }
        for h in &p.history.values {
            for &c in &h.coeffs {
                push_f64(&mut buf, c);
            }
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_cloud(path: &Path) -> Result<CloudX> {
    let data = std::fs::read(path)?;
    if data.len() < 8 || &data[..8] != CLOUD_MAGIC {
        return Err(crate::error::CoreError::InvalidParameter(
            "not a cloud snapshot".into(),
        ));
    }
    let mut r = Reader { data: &data, pos: 8 };
    let gamma = r.f64()?;
    let s_max = r.f64()?;
    let n_nodes = r.u64()? as usize;
    let n_modes = r.u64()? as usize;
    let n_points = r.u64()? as usize;
    let seed = r.u64()?;
    let pullback_time = r.f64()?;
    let phase = PhaseSpaceParams::new(gamma, s_max, n_nodes)?;
    let mut points = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let coeffs: Result<Vec<f64>> = (0..n_modes).map(|_| r.f64()).collect();
        let field = Field::from_coeffs(coeffs?);
        let mut values = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let coeffs: Result<Vec<f64>> = (0..n_modes).map(|_| r.f64()).collect();
            values.push(Field::from_coeffs(coeffs?));
        }
        points.push(CloudPoint { field, history: HistorySegment { values } });
    }
    Ok(CloudX {
        phase,
        points,
        seed,
        pullback_time,
        mode_tag: "snapshot".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attractor::{sample_ensemble, EnsembleConfig};

    #[test]
    fn field_snapshot_round_trip() {
        let dir = std::env::temp_dir().join(format!("memoir-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let f = Field::from_coeffs(vec![1.5, -2.25, 1.0 / 3.0]);
        let p = dir.join("field.bin");
        write_field(&p, std::f64::consts::PI, &f).unwrap();
        let (l, back) = read_field(&p).unwrap();
        assert_eq!(l, std::f64::consts::PI);
        assert_eq!(back.coeffs, f.coeffs);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn cloud_snapshot_round_trip() {
        let dir = std::env::temp_dir().join(format!("memoir-io-c{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let phase = PhaseSpaceParams::new(0.45, 5.0, 26).unwrap();
        let cfg = EnsembleConfig { n_points: 5, n_history_perturbed: 2, radius: 1.0, seed: 9 };
        let cloud = sample_ensemble(3, &[1.0, 4.0, 9.0], &phase, &cfg);
        let p = dir.join("cloud.bin");
        write_cloud(&p, &cloud).unwrap();
        let back = read_cloud(&p).unwrap();
        assert_eq!(back.points.len(), 5);
        for (a, b) in cloud.points.iter().zip(&back.points) {
            assert_eq!(a.field.coeffs, b.field.coeffs);
            assert_eq!(a.history.values.len(), b.history.values.len());
            for (x, y) in a.history.values.iter().zip(&b.history.values) {
                assert_eq!(x.coeffs, y.coeffs);
            }
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
