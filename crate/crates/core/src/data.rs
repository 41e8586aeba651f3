//! MNIST-style IDX datasets.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const N_CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Row-major grayscale images with one class label each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
    pub split: Split,
}

impl Dataset {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>, split: Split) -> Result<Self> {
        let n = labels.len();
        if pixels.len() != n * rows * cols {
            return Err(Error::Shape(format!("{} pixels for {n} images of {rows}x{cols}", pixels.len())));
        }
        if let Some(l) = labels.iter().find(|&&l| usize::from(l) >= N_CLASSES) {
            return Err(Error::InputDomain(format!("label {l} outside 0..{N_CLASSES}")));
        }
        Ok(Self { rows, cols, pixels, labels, split })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let sz = self.rows * self.cols;
        &self.pixels[i * sz..(i + 1) * sz]
    }

    pub fn label(&self, i: usize) -> usize {
        usize::from(self.labels[i])
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        let mut c = [0; N_CLASSES];
        for &l in &self.labels {
            c[usize::from(l)] += 1;
        }
        c
    }

    fn select(&self, idx: &[usize]) -> Self {
        let mut pixels = Vec::with_capacity(idx.len() * self.rows * self.cols);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            pixels.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Self { rows: self.rows, cols: self.cols, pixels, labels, split: self.split }
    }

    /// Load `{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]` from `dir`.
    pub fn load_split(dir: &Path, split: Split) -> Result<Self> {
        let images = find_file(dir, &format!("{}-images-idx3-ubyte", split.prefix()))?;
        let labels = find_file(dir, &format!("{}-labels-idx1-ubyte", split.prefix()))?;
        let (rows, cols, pixels) = load_idx_images(&images)?;
        let labels = load_idx_labels(&labels)?;
        if pixels.len() != labels.len() * rows * cols {
            return Err(Error::Format(format!(
                "{} has {} images but {} has {} labels",
                images.display(),
                pixels.len() / (rows * cols).max(1),
                labels.len(),
                labels.len()
            )));
        }
        Self::new(rows, cols, pixels, labels, split)
    }

    /// Write the dataset as a pair of uncompressed IDX files.
    pub fn write_idx(&self, images: &Path, labels: &Path) -> Result<()> {
        let mut f = File::create(images)?;
        for v in [IMAGES_MAGIC, self.len() as u32, self.rows as u32, self.cols as u32] {
            f.write_all(&v.to_be_bytes())?;
        }
        f.write_all(&self.pixels)?;
        let mut f = File::create(labels)?;
        for v in [LABELS_MAGIC, self.len() as u32] {
            f.write_all(&v.to_be_bytes())?;
        }
        f.write_all(&self.labels)?;
        Ok(())
    }
}

fn find_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    let plain = dir.join(stem);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("neither {} nor {} exists", plain.display(), gz.display()),
    )))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut reader: Box<dyn Read> = {
        let f = BufReader::new(File::open(path)?);
        if path.extension().is_some_and(|e| e == "gz") {
            Box::new(GzDecoder::new(f))
        } else {
            Box::new(f)
        }
    };
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Length(format!("{what}: header ends before byte {}", at + 4)))
}

/// Parse an IDX image container. Returns `(rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!("image file magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let n = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let need = n * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(Error::Length(format!("image payload has {} bytes, header promises {need}", payload.len())));
    }
    Ok((rows, cols, payload[..need].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!("label file magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let n = be_u32(bytes, 4, "labels")? as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(Error::Length(format!("label payload has {} bytes, header promises {n}", payload.len())));
    }
    let labels = payload[..n].to_vec();
    if let Some(l) = labels.iter().find(|&&l| usize::from(l) >= N_CLASSES) {
        return Err(Error::InputDomain(format!("label {l} outside 0..{N_CLASSES}")));
    }
    Ok(labels)
}

pub fn load_idx_images(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    parse_idx_images(&read_all(path)?)
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    parse_idx_labels(&read_all(path)?)
}

/// Seeded, class-stratified subset of `n` samples.
///
/// Each class gets `floor(n * count_c / N)` samples, the remainder going to the
/// classes with the largest fractional share (lowest class first on ties).
/// Selected samples keep their original relative order.
pub fn subsample(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    let total = ds.len();
    if n > total {
        return Err(Error::InputDomain(format!("cannot take {n} of {total} samples")));
    }
    if n == total {
        return Ok(ds.clone());
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); N_CLASSES];
    for i in 0..total {
        by_class[ds.label(i)].push(i);
    }
    let mut quota: Vec<usize> = by_class.iter().map(|c| c.len() * n / total).collect();
    let mut rest: Vec<(usize, usize)> = by_class.iter().enumerate().map(|(k, c)| ((c.len() * n) % total, k)).collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let missing = n - quota.iter().sum::<usize>();
    for &(_, k) in rest.iter().take(missing) {
        quota[k] += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n);
    for (k, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        picked.extend_from_slice(&members[..quota[k]]);
    }
    picked.sort_unstable();
    Ok(ds.select(&picked))
}
