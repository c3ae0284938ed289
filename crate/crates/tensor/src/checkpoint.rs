use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"WCPT";
const VERSION: u32 = 1;

/// One named array from a checkpoint file.
#[derive(Debug, Clone)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Write named parameter arrays plus a text manifest. Values are stored as
/// little-endian f32 regardless of the in-memory precision.
pub fn save<T: Scalar, P: AsRef<Path>>(
    path: P,
    manifest: &str,
    entries: &[(String, Tensor<T>)],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let mb = manifest.as_bytes();
    w.write_all(&(mb.len() as u64).to_le_bytes())?;
    w.write_all(mb)?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, tensor) in entries {
        let nb = name.as_bytes();
        w.write_all(&(nb.len() as u32).to_le_bytes())?;
        w.write_all(nb)?;
        let shape = tensor.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in tensor.data().iter() {
            w.write_all(&v.as_f32().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load<P: AsRef<Path>>(path: P) -> Result<(String, Vec<CheckpointEntry>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Checkpoint("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let manifest_len = read_u64(&mut r)? as usize;
    let mut manifest = vec![0u8; manifest_len];
    r.read_exact(&mut manifest)?;
    let manifest = String::from_utf8(manifest)
        .map_err(|_| TensorError::Checkpoint("manifest is not utf-8".into()))?;

    let count = read_u32(&mut r)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| TensorError::Checkpoint("entry name is not utf-8".into()))?;
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u64(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 4];
        for _ in 0..numel {
            r.read_exact(&mut buf)?;
            data.push(f32::from_le_bytes(buf));
        }
        entries.push(CheckpointEntry { name, shape, data });
    }
    Ok((manifest, entries))
}

/// Copy checkpoint arrays into live parameters matched by name. Any missing,
/// extra, or shape-mismatched entry is reported as a refusal diff.
pub fn restore<T: Scalar>(
    entries: &[CheckpointEntry],
    params: &[(String, Tensor<T>)],
) -> Result<()> {
    let mut diffs = Vec::new();
    let by_name: std::collections::HashMap<&str, &CheckpointEntry> =
        entries.iter().map(|e| (e.name.as_str(), e)).collect();
    for (name, tensor) in params {
        match by_name.get(name.as_str()) {
            None => diffs.push(format!("missing from checkpoint: {name} {:?}", tensor.shape())),
            Some(e) if e.shape != tensor.shape() => diffs.push(format!(
                "shape mismatch for {name}: checkpoint {:?}, model {:?}",
                e.shape,
                tensor.shape()
            )),
            Some(_) => {}
        }
    }
    let model_names: std::collections::HashSet<&str> =
        params.iter().map(|(n, _)| n.as_str()).collect();
    for e in entries {
        if !model_names.contains(e.name.as_str()) {
            diffs.push(format!("unused checkpoint entry: {} {:?}", e.name, e.shape));
        }
    }
    if !diffs.is_empty() {
        return Err(TensorError::Checkpoint(diffs.join("; ")));
    }
    for (name, tensor) in params {
        let entry = by_name[name.as_str()];
        let values: Vec<T> = entry.data.iter().map(|&v| T::cast(v as f64)).collect();
        tensor.set_data(&values);
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let a = Tensor::<f32>::from_f64(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], true).unwrap();
        let b = Tensor::<f32>::from_f64(&[2], &[-0.5, 0.25], true).unwrap();
        save(
            &path,
            "hidden = 2\n",
            &[("enc.w".to_string(), a.clone()), ("enc.b".to_string(), b)],
        )
        .unwrap();
        let (manifest, entries) = load(&path).unwrap();
        assert_eq!(manifest, "hidden = 2\n");
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].name, "enc.w");
        assert_eq!(entries[0].shape, vec![2, 3]);
        assert_eq!(entries[0].data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn restore_reports_shape_diff() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let a = Tensor::<f32>::zeros(&[2, 3], true);
        save(&path, "", &[("w".to_string(), a)]).unwrap();
        let (_, entries) = load(&path).unwrap();
        let target = Tensor::<f32>::zeros(&[3, 3], true);
        let err = restore(&entries, &[("w".to_string(), target)]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[3, 3]"), "{msg}");
    }

    #[test]
    fn restore_reports_missing_and_unused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, "", &[("old".to_string(), Tensor::<f32>::zeros(&[1], true))]).unwrap();
        let (_, entries) = load(&path).unwrap();
        let err = restore(
            &entries,
            &[("new".to_string(), Tensor::<f32>::zeros(&[1], true))],
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("missing from checkpoint: new"));
        assert!(msg.contains("unused checkpoint entry: old"));
    }
}
