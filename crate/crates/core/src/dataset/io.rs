use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DatasetError, Scaling, SnapshotSet};
use crate::linalg::DenseMatrix;

const MAGIC: &[u8; 4] = b"MCRM";
const VERSION: u32 = 1;

/// Raw contents of an `MCRM` file.
///
/// Layout (little endian): magic, `u32` version, `u64` dims `(N_h, N_s, n_μ)`,
/// `P` as `(n_μ+1) x N_s` then `S` as `N_h x N_s` row-major `f64`,
/// `u32` label flag and `N_s` `u32` labels, `u32` scaling flag and two `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub p: DenseMatrix,
    pub s: DenseMatrix,
    pub labels: Option<Vec<u32>>,
    pub scaling: Option<Scaling>,
}

pub fn write_container(w: &mut impl Write, c: &Container) -> Result<(), DatasetError> {
    if c.p.cols() != c.s.cols() || c.p.rows() == 0 {
        return Err(DatasetError::Shape("P and S must share a nonzero column count".into()));
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for d in [c.s.rows(), c.s.cols(), c.p.rows() - 1] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in c.p.as_slice().iter().chain(c.s.as_slice()) {
        w.write_all(&v.to_le_bytes())?;
    }
    match &c.labels {
        Some(l) => {
            if l.len() != c.s.cols() {
                return Err(DatasetError::Shape("one label per column required".into()));
            }
            w.write_all(&1u32.to_le_bytes())?;
            for v in l {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        None => w.write_all(&0u32.to_le_bytes())?,
    }
    match c.scaling {
        Some(sc) => {
            w.write_all(&1u32.to_le_bytes())?;
            w.write_all(&sc.min.to_le_bytes())?;
            w.write_all(&sc.max.to_le_bytes())?;
        }
        None => w.write_all(&0u32.to_le_bytes())?,
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, DatasetError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, DatasetError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>, DatasetError> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

pub fn read_container(r: &mut impl Read) -> Result<Container, DatasetError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DatasetError::Format("bad magic bytes".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(DatasetError::Format(format!("unsupported version {version}")));
    }
    let n_h = read_u64(r)? as usize;
    let n_s = read_u64(r)? as usize;
    let n_mu = read_u64(r)? as usize;
    const LIMIT: usize = 1 << 34;
    if n_h.saturating_mul(n_s) > LIMIT || (n_mu + 1).saturating_mul(n_s) > LIMIT {
        return Err(DatasetError::Format(format!("implausible dims ({n_h}, {n_s}, {n_mu})")));
    }
    let p = DenseMatrix::from_vec(n_mu + 1, n_s, read_f64s(r, (n_mu + 1) * n_s)?)
        .map_err(|e| DatasetError::Format(e.to_string()))?;
    let s =
        DenseMatrix::from_vec(n_h, n_s, read_f64s(r, n_h * n_s)?).map_err(|e| DatasetError::Format(e.to_string()))?;
    let labels = match read_u32(r)? {
        0 => None,
        1 => Some((0..n_s).map(|_| read_u32(r)).collect::<Result<Vec<_>, _>>()?),
        f => return Err(DatasetError::Format(format!("bad label flag {f}"))),
    };
    let scaling = match read_u32(r)? {
        0 => None,
        1 => {
            let v = read_f64s(r, 2)?;
            Some(Scaling { min: v[0], max: v[1] })
        }
        f => return Err(DatasetError::Format(format!("bad scaling flag {f}"))),
    };
    Ok(Container { p, s, labels, scaling })
}

pub fn write_snapshots(path: impl AsRef<Path>, set: &SnapshotSet) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_container(
        &mut w,
        &Container { p: set.p.clone(), s: set.s.clone(), labels: set.labels.clone(), scaling: set.scaling },
    )?;
    w.flush()?;
    Ok(())
}

pub fn read_snapshots(path: impl AsRef<Path>) -> Result<SnapshotSet, DatasetError> {
    let c = read_container(&mut BufReader::new(File::open(path)?))?;
    let mut set = SnapshotSet::new(c.p, c.s)?;
    set.labels = c.labels;
    set.scaling = c.scaling;
    Ok(set)
}

/// One row per column: parameters, time, `ℓ∞` norm and label.
pub fn write_snapshot_csv(path: impl AsRef<Path>, set: &SnapshotSet) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = vec!["column".into()];
    header.extend((0..set.n_params()).map(|d| format!("mu{d}")));
    header.extend(["t".into(), "norm_inf".into(), "label".into()]);
    w.write_record(&header)?;
    let norms = set.unscaled().column_norms_inf();
    for j in 0..set.n_cols() {
        let mut rec = vec![j.to_string()];
        rec.extend(set.query(j).iter().map(|v| format!("{v:e}")));
        rec.push(format!("{:e}", norms[j]));
        rec.push(set.labels.as_ref().map_or(String::new(), |l| l[j].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let p = DenseMatrix::from_fn(2, 3, |i, j| (i + 10 * j) as f64 * 0.1);
        let s = DenseMatrix::from_fn(4, 3, |i, j| (i as f64 - j as f64).exp());
        let c = Container { p, s, labels: Some(vec![1, 2, 6]), scaling: Some(Scaling { min: -1.0, max: 2.5 }) };
        let mut buf = Vec::new();
        write_container(&mut buf, &c).unwrap();
        assert_eq!(&buf[..4], b"MCRM");
        assert_eq!(read_container(&mut buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let c = Container { p: DenseMatrix::zeros(1, 2), s: DenseMatrix::identity(2), labels: None, scaling: None };
        let mut buf = Vec::new();
        write_container(&mut buf, &c).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_container(&mut bad.as_slice()), Err(DatasetError::Format(_))));
        assert!(matches!(read_container(&mut &buf[..buf.len() - 3]), Err(DatasetError::Io(_))));
    }
}
