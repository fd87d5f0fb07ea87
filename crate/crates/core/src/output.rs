//! Result files. The first line of every file names the SHA-256 of the
//! config bytes and the master seed.
//!
//! * CSV: `# config_sha256=<hex> seed=<n>` then a column header.
//! * JSON: a header object on line one, the payload on line two.
//! * Binary fields: the CSV comment line, then little-endian `u64` n1, n2,
//!   count, then for each saved time `t` as `f64` followed by the n1·n2
//!   coefficients as interleaved (re, im) `f64` in row-major order.
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Trajectory;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn comment_line(&self) -> String {
        format!("# config_sha256={} seed={}", self.config_sha256, self.seed)
    }
}

/// Write through a sibling temporary file and rename, so readers never see
/// a partial file.
fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .ok_or_else(|| Error::Precondition(format!("not a file path: {}", path.display())))?;
    tmp.set_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Columns `t, l2, grad_l2, l2sigma2` where the last is ‖u‖ in L^{2σ+2}.
pub fn write_trajectory_csv(path: &Path, prov: &Provenance, traj: &Trajectory) -> Result<()> {
    let p_top = *traj
        .norm_exponents
        .last()
        .ok_or_else(|| Error::Precondition("trajectory carries no norm exponents".into()))?;
    write_atomic(path, |w| {
        writeln!(w, "{}", prov.comment_line())?;
        writeln!(w, "t,l2,grad_l2,l2sigma2")?;
        for (t, n) in traj.times.iter().zip(&traj.norms) {
            let lp = n.lp(p_top).unwrap_or(f64::NAN);
            writeln!(w, "{t:e},{:e},{:e},{lp:e}", n.l2, n.grad_l2)?;
        }
        Ok(())
    })
}

pub fn write_events_csv(path: &Path, prov: &Provenance, traj: &Trajectory) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{}", prov.comment_line())?;
        writeln!(w, "t,mark,pre_norm,post_norm")?;
        for e in &traj.events {
            writeln!(w, "{:e},{},{:e},{:e}", e.t, e.mark, e.pre_norm, e.post_norm)?;
        }
        Ok(())
    })
}

pub fn write_fields_bin(path: &Path, prov: &Provenance, traj: &Trajectory) -> Result<()> {
    let (n1, n2) = traj
        .states
        .first()
        .map(|s| s.modes.dim())
        .ok_or_else(|| Error::Precondition("empty trajectory".into()))?;
    write_atomic(path, |w| {
        writeln!(w, "{}", prov.comment_line())?;
        for v in [n1 as u64, n2 as u64, traj.states.len() as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        for (t, s) in traj.times.iter().zip(&traj.states) {
            w.write_all(&t.to_le_bytes())?;
            for c in s.modes.iter() {
                w.write_all(&c.re.to_le_bytes())?;
                w.write_all(&c.im.to_le_bytes())?;
            }
        }
        Ok(())
    })
}

/// Decoded binary field file: provenance line, shape, times and coefficients.
#[derive(Debug, Clone)]
pub struct FieldFile {
    pub header: String,
    pub n1: usize,
    pub n2: usize,
    pub times: Vec<f64>,
    pub modes: Vec<Vec<num_complex::Complex64>>,
}

pub fn read_fields_bin(path: &Path) -> Result<FieldFile> {
    let bytes = std::fs::read(path)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Precondition("binary file has no header line".into()))?;
    let header = String::from_utf8_lossy(&bytes[..nl]).into_owned();
    let mut rest = &bytes[nl + 1..];
    let mut take = |n: usize| -> Result<[u8; 8]> {
        if rest.len() < 8 {
            return Err(Error::Precondition(format!("binary file truncated at field {n}")));
        }
        let (a, b) = rest.split_at(8);
        rest = b;
        Ok(a.try_into().expect("eight bytes"))
    };
    let n1 = u64::from_le_bytes(take(0)?) as usize;
    let n2 = u64::from_le_bytes(take(1)?) as usize;
    let count = u64::from_le_bytes(take(2)?) as usize;
    let mut times = Vec::with_capacity(count);
    let mut modes = Vec::with_capacity(count);
    for i in 0..count {
        times.push(f64::from_le_bytes(take(i)?));
        let mut m = Vec::with_capacity(n1 * n2);
        for _ in 0..n1 * n2 {
            let re = f64::from_le_bytes(take(i)?);
            let im = f64::from_le_bytes(take(i)?);
            m.push(num_complex::Complex64::new(re, im));
        }
        modes.push(m);
    }
    if !rest.is_empty() {
        return Err(Error::Precondition("trailing bytes in binary file".into()));
    }
    Ok(FieldFile {
        header,
        n1,
        n2,
        times,
        modes,
    })
}

pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, payload: &T) -> Result<()> {
    let head = serde_json::to_string(prov)?;
    let body = serde_json::to_string(payload)?;
    write_atomic(path, |w| {
        writeln!(w, "{head}")?;
        writeln!(w, "{body}")
    })
}

/// Header object followed by one JSON record per line.
pub fn write_json_lines<T: Serialize>(path: &Path, prov: &Provenance, records: &[T]) -> Result<()> {
    let head = serde_json::to_string(prov)?;
    let lines = records
        .iter()
        .map(serde_json::to_string)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    write_atomic(path, |w| {
        writeln!(w, "{head}")?;
        for l in &lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })
}

pub fn read_json_lines<T: DeserializeOwned>(path: &Path) -> Result<(Provenance, Vec<T>)> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Precondition(format!("{} is empty", path.display())))??;
    let prov: Provenance = serde_json::from_str(&head)?;
    let mut out = Vec::new();
    for l in lines {
        let l = l?;
        if !l.trim().is_empty() {
            out.push(serde_json::from_str(&l)?);
        }
    }
    Ok((prov, out))
}
