//! Labeled push samples and their on-disk form: one NDJSON metadata record per
//! sample plus a companion blob of little-endian `f32` 64×64 images.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::{PushImage, CROP_PIXELS};
use crate::error::{Error, Result};
use crate::oracle::LabelBreakdown;
use crate::runner::PolicyKind;

pub const DATASET_SCHEMA: &str = "singulate.dataset/1";
const IMAGE_BYTES: u64 = (CROP_PIXELS * 4) as u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub trial_id: u64,
    pub push_index: u32,
    pub policy: PolicyKind,
    pub split: Split,
    pub trial_seed: u64,
    pub n_objects: usize,
    pub breakdown: LabelBreakdown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub image: PushImage,
    /// 0 or 1.
    pub label: u8,
    pub meta: SampleMeta,
}

impl LabeledSample {
    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    schema: String,
    blob_offset: u64,
    label: u8,
    proposal: crate::proposals::PushProposal,
    #[serde(flatten)]
    meta: SampleMeta,
}

/// Path of the image blob that accompanies a metadata file.
pub fn blob_path(meta_path: &Path) -> PathBuf {
    meta_path.with_extension("bin")
}

/// Appends samples to a dataset; creates both files if absent.
pub struct DatasetWriter {
    meta_path: PathBuf,
    blob_path: PathBuf,
    meta: BufWriter<File>,
    blob: BufWriter<File>,
    blob_len: u64,
    count: usize,
}

impl DatasetWriter {
    /// Starts a fresh dataset, truncating existing files.
    pub fn create(path: &Path) -> Result<Self> {
        Self::open(path, true)
    }

    /// Opens a dataset for appending.
    pub fn append(path: &Path) -> Result<Self> {
        Self::open(path, false)
    }

    fn open(path: &Path, truncate: bool) -> Result<Self> {
        let bpath = blob_path(path);
        let opts = |p: &Path| {
            let mut o = OpenOptions::new();
            o.create(true).write(true);
            if truncate {
                o.truncate(true);
            } else {
                o.append(true);
            }
            o.open(p).map_err(|e| Error::io(p, 0, e))
        };
        let meta = opts(path)?;
        let blob = opts(&bpath)?;
        let blob_len = blob.metadata().map_err(|e| Error::io(&bpath, 0, e))?.len();
        if blob_len % IMAGE_BYTES != 0 {
            return Err(Error::Format {
                what: "dataset blob",
                detail: format!(
                    "{} bytes is not a whole number of images",
                    blob_len
                ),
            });
        }
        Ok(Self {
            meta_path: path.to_path_buf(),
            blob_path: bpath,
            meta: BufWriter::new(meta),
            blob: BufWriter::new(blob),
            blob_len,
            count: 0,
        })
    }

    pub fn write(&mut self, sample: &LabeledSample) -> Result<()> {
        if sample.image.pixels.len() != CROP_PIXELS {
            return Err(Error::InputShape {
                expected: CROP_PIXELS,
                found: sample.image.pixels.len(),
            });
        }
        let rec = Record {
            schema: DATASET_SCHEMA.to_string(),
            blob_offset: self.blob_len,
            label: sample.label,
            proposal: sample.image.proposal,
            meta: sample.meta.clone(),
        };
        let mut line = serde_json::to_string(&rec)?;
        line.push('\n');
        self.meta
            .write_all(line.as_bytes())
            .map_err(|e| Error::io(&self.meta_path, self.count as u64, e))?;
        let mut bytes = Vec::with_capacity(IMAGE_BYTES as usize);
        for v in &sample.image.pixels {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.blob
            .write_all(&bytes)
            .map_err(|e| Error::io(&self.blob_path, self.blob_len, e))?;
        self.blob_len += IMAGE_BYTES;
        self.count += 1;
        Ok(())
    }

    /// Samples written through this writer.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(mut self) -> Result<usize> {
        self.meta
            .flush()
            .map_err(|e| Error::io(&self.meta_path, 0, e))?;
        self.blob
            .flush()
            .map_err(|e| Error::io(&self.blob_path, self.blob_len, e))?;
        Ok(self.count)
    }
}

pub fn write_dataset(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    let mut w = DatasetWriter::create(path)?;
    for s in samples {
        w.write(s)?;
    }
    w.finish().map(|_| ())
}

pub fn read_dataset(path: &Path) -> Result<Vec<LabeledSample>> {
    let meta = File::open(path).map_err(|e| Error::io(path, 0, e))?;
    let bpath = blob_path(path);
    let mut blob = File::open(&bpath).map_err(|e| Error::io(&bpath, 0, e))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    let mut buf = vec![0u8; IMAGE_BYTES as usize];
    for line in BufReader::new(meta).lines() {
        let line = line.map_err(|e| Error::io(path, offset, e))?;
        let line_len = line.len() as u64 + 1;
        if line.trim().is_empty() {
            offset += line_len;
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Format {
            what: "dataset record",
            detail: format!("byte offset {offset}: {e}"),
        })?;
        if rec.schema != DATASET_SCHEMA {
            return Err(Error::Schema {
                expected: DATASET_SCHEMA.to_string(),
                found: rec.schema,
            });
        }
        if rec.label > 1 {
            return Err(Error::Format {
                what: "dataset record",
                detail: format!("byte offset {offset}: label {} is not binary", rec.label),
            });
        }
        blob.seek(SeekFrom::Start(rec.blob_offset))
            .and_then(|_| blob.read_exact(&mut buf))
            .map_err(|e| Error::io(&bpath, rec.blob_offset, e))?;
        let pixels = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        out.push(LabeledSample {
            image: PushImage {
                pixels,
                proposal: rec.proposal,
            },
            label: rec.label,
            meta: rec.meta,
        });
        offset += line_len;
    }
    Ok(out)
}

/// Positive and negative counts.
pub fn class_counts(samples: &[LabeledSample]) -> (usize, usize) {
    let pos = samples.iter().filter(|s| s.is_positive()).count();
    (pos, samples.len() - pos)
}
