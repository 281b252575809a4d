//! Volume and mask files.
//!
//! A volume is a raw little-endian `f64` payload next to a JSON sidecar
//! `<file>.json` holding `{"dims": [...], "order": "row-major", "dtype": "f64-le"}`.
//! A mask payload is either a list of little-endian `u64` linear indices or a
//! byte per grid point (1 = missing); the sidecar records which.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier_map::GridShape;
use crate::masked_operator::MaskSet;

pub const ORDER: &str = "row-major";
pub const VOLUME_DTYPE: &str = "f64-le";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: Vec<usize>,
    pub order: String,
    pub dtype: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskFormat {
    IndexList,
    ByteMask,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskHeader {
    pub dims: Vec<usize>,
    pub format: MaskFormat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

/// `<path>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn read_sidecar<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side)
        .map_err(|e| Error::Header(format!("cannot read {}: {e}", side.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Header(format!("{}: {e}", side.display())))
}

fn write_sidecar<T: Serialize>(path: &Path, header: &T) -> Result<()> {
    fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(header)? + "\n",
    )?;
    Ok(())
}

fn element_count(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Header(format!("invalid dims {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Header(format!("dims {dims:?} overflow")))
}

pub fn write_volume(path: &Path, dims: &[usize], values: &[f64]) -> Result<()> {
    let n = element_count(dims)?;
    if n != values.len() {
        return Err(Error::ShapeMismatch {
            what: "volume payload",
            expected: n,
            actual: values.len(),
        });
    }
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    write_sidecar(
        path,
        &VolumeHeader {
            dims: dims.to_vec(),
            order: ORDER.into(),
            dtype: VOLUME_DTYPE.into(),
        },
    )
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let header: VolumeHeader = read_sidecar(path)?;
    if header.order != ORDER {
        return Err(Error::Header(format!(
            "unsupported order {:?}",
            header.order
        )));
    }
    if header.dtype != VOLUME_DTYPE {
        return Err(Error::Header(format!(
            "unsupported dtype {:?}",
            header.dtype
        )));
    }
    let n = element_count(&header.dims)?;
    let bytes = fs::read(path)?;
    if bytes.len() != 8 * n {
        return Err(Error::Header(format!(
            "payload has {} bytes, dims {:?} need {}",
            bytes.len(),
            header.dims,
            8 * n
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Volume {
        dims: header.dims,
        values,
    })
}

pub fn write_mask(path: &Path, mask: &MaskSet, format: MaskFormat) -> Result<()> {
    let bytes: Vec<u8> = match format {
        MaskFormat::IndexList => mask
            .missing()
            .iter()
            .flat_map(|&i| (i as u64).to_le_bytes())
            .collect(),
        MaskFormat::ByteMask => mask.flags().into_iter().map(u8::from).collect(),
    };
    fs::write(path, bytes)?;
    write_sidecar(
        path,
        &MaskHeader {
            dims: mask.shape().dims().to_vec(),
            format,
        },
    )
}

pub fn read_mask(path: &Path) -> Result<MaskSet> {
    let header: MaskHeader = read_sidecar(path)?;
    let shape = GridShape::new(&header.dims)?;
    let bytes = fs::read(path)?;
    match header.format {
        MaskFormat::IndexList => {
            if bytes.len() % 8 != 0 {
                return Err(Error::Header(format!(
                    "index list of {} bytes is not a multiple of 8",
                    bytes.len()
                )));
            }
            let missing = bytes
                .chunks_exact(8)
                .map(|c| {
                    let v = u64::from_le_bytes(c.try_into().expect("chunk of 8"));
                    usize::try_from(v)
                        .map_err(|_| Error::InvalidMask(format!("index {v} out of range")))
                })
                .collect::<Result<Vec<_>>>()?;
            MaskSet::new(missing, shape)
        }
        MaskFormat::ByteMask => {
            if bytes.len() != shape.len() {
                return Err(Error::Header(format!(
                    "byte mask has {} entries, grid has {}",
                    bytes.len(),
                    shape.len()
                )));
            }
            if let Some(b) = bytes.iter().find(|&&b| b > 1) {
                return Err(Error::InvalidMask(format!(
                    "byte mask entry {b} is not 0 or 1"
                )));
            }
            let flags: Vec<bool> = bytes.iter().map(|&b| b == 1).collect();
            MaskSet::from_flags(&flags, shape)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_name_appends_suffix() {
        assert_eq!(
            sidecar_path(Path::new("/tmp/x.bin")),
            PathBuf::from("/tmp/x.bin.json")
        );
    }

    #[test]
    fn volume_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        let values = vec![
            0.1,
            -0.0,
            f64::MIN_POSITIVE,
            1e300,
            -7.25,
            f64::EPSILON,
            3.0,
            4.0,
        ];
        write_volume(&path, &[2, 4], &values).unwrap();
        let v = read_volume(&path).unwrap();
        assert_eq!(v.dims, vec![2, 4]);
        let bits = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&v.values), bits(&values));
    }

    #[test]
    fn mask_round_trips_in_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let mask = MaskSet::new(vec![0, 5, 6, 15], GridShape::new(&[4, 4]).unwrap()).unwrap();
        for fmt in [MaskFormat::IndexList, MaskFormat::ByteMask] {
            let path = dir.path().join(format!("{fmt:?}.mask"));
            write_mask(&path, &mask, fmt).unwrap();
            assert_eq!(read_mask(&path).unwrap(), mask);
        }
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        assert!(matches!(read_volume(&path), Err(Error::Header(_))));

        write_volume(&path, &[4], &[1.0; 4]).unwrap();
        fs::write(
            sidecar_path(&path),
            "{\"dims\": [4], \"order\": \"col-major\", \"dtype\": \"f64-le\"}",
        )
        .unwrap();
        assert!(matches!(read_volume(&path), Err(Error::Header(_))));
        fs::write(sidecar_path(&path), "not json").unwrap();
        assert!(matches!(read_volume(&path), Err(Error::Header(_))));
        fs::write(
            sidecar_path(&path),
            "{\"dims\": [8], \"order\": \"row-major\", \"dtype\": \"f64-le\"}",
        )
        .unwrap();
        assert!(matches!(read_volume(&path), Err(Error::Header(_))));

        assert!(write_volume(&path, &[3], &[1.0; 4]).is_err());

        let mpath = dir.path().join("m.bin");
        fs::write(&mpath, [1u8, 2, 0, 0]).unwrap();
        fs::write(
            sidecar_path(&mpath),
            "{\"dims\": [4], \"format\": \"byte-mask\"}",
        )
        .unwrap();
        assert!(matches!(read_mask(&mpath), Err(Error::InvalidMask(_))));
        fs::write(&mpath, [1u8, 1, 1, 1]).unwrap();
        assert!(read_mask(&mpath).is_err());
        fs::write(
            sidecar_path(&mpath),
            "{\"dims\": [4], \"format\": \"index-list\"}",
        )
        .unwrap();
        fs::write(&mpath, [0u8; 5]).unwrap();
        assert!(matches!(read_mask(&mpath), Err(Error::Header(_))));
    }
}
