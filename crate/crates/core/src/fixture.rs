//! Deterministic Q/K/V fixtures and their binary file format.
//!
//! Fixtures are generated from a ChaCha8 stream seeded with a single u64, so
//! the same (grid, seed, distribution) triple reproduces bitwise-identical
//! tensors on any platform.
//!
//! File layout, little-endian, one record per tensor in Q, K, V order:
//! magic "SSTA", u32 version (= 1), u32 tensor tag (0=Q, 1=K, 2=V), five u32
//! dims (heads, frames, height, width, head_dim), then heads*frames*height*
//! width*head_dim IEEE-754 binary32 values in canonical token-major order
//! with head_dim innermost.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

const MAGIC: [u8; 4] = *b"SSTA";
const VERSION: u32 = 1;

/// Value distribution for generated fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureDistribution {
    /// Independent standard-normal values.
    StandardNormal,
    /// Standard-normal head-dim vectors rescaled to unit Euclidean norm.
    UnitSphere,
}

/// One attention problem: Q, K, V in canonical token-major layout sharing a
/// grid. All values are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionInputs {
    pub grid: GridSpec,
    pub q: Vec<f32>,
    pub k: Vec<f32>,
    pub v: Vec<f32>,
}

impl AttentionInputs {
    pub fn new(grid: GridSpec, q: Vec<f32>, k: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        let want = grid.elements();
        for (name, t) in [("q", &q), ("k", &k), ("v", &v)] {
            if t.len() != want {
                return Err(Error::shape(format!(
                    "{name} has {} elements, grid requires {want}",
                    t.len()
                )));
            }
            if let Some(index) = t.iter().position(|x| !x.is_finite()) {
                let context = match name {
                    "q" => "q",
                    "k" => "k",
                    _ => "v",
                };
                return Err(Error::NonFinite { context, index });
            }
        }
        Ok(AttentionInputs { grid, q, k, v })
    }
}

/// Generate a seeded fixture. Identical arguments yield bitwise-identical
/// tensors; Q, K, V are drawn from one sequential ChaCha8 stream.
pub fn generate_fixture(
    grid: &GridSpec,
    seed: u64,
    distribution: FixtureDistribution,
) -> AttentionInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = fill_tensor(grid, &mut rng, distribution);
    let k = fill_tensor(grid, &mut rng, distribution);
    let v = fill_tensor(grid, &mut rng, distribution);
    AttentionInputs {
        grid: *grid,
        q,
        k,
        v,
    }
}

fn fill_tensor(
    grid: &GridSpec,
    rng: &mut ChaCha8Rng,
    distribution: FixtureDistribution,
) -> Vec<f32> {
    let mut data = vec![0f32; grid.elements()];
    for chunk in data.chunks_mut(grid.head_dim) {
        for x in chunk.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        if distribution == FixtureDistribution::UnitSphere {
            let norm = chunk
                .iter()
                .map(|&x| f64::from(x) * f64::from(x))
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                chunk[0] = 1.0;
            } else {
                for x in chunk.iter_mut() {
                    *x = (f64::from(*x) / norm) as f32;
                }
            }
        }
    }
    data
}

/// Write all three tensors of a fixture to one file.
pub fn write_fixture(path: impl AsRef<Path>, inputs: &AttentionInputs) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    for (tag, data) in [(0u32, &inputs.q), (1, &inputs.k), (2, &inputs.v)] {
        write_record(&mut w, tag, &inputs.grid, data).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn write_record(
    w: &mut impl Write,
    tag: u32,
    grid: &GridSpec,
    data: &[f32],
) -> std::io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&tag.to_le_bytes())?;
    for dim in [
        grid.heads,
        grid.frames,
        grid.height,
        grid.width,
        grid.head_dim,
    ] {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    let mut buf = [0u8; 4096];
    for chunk in data.chunks(buf.len() / 4) {
        for (i, &x) in chunk.iter().enumerate() {
            buf[4 * i..4 * i + 4].copy_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf[..4 * chunk.len()])?;
    }
    Ok(())
}

/// Read a fixture file, validating magic, version, tag order, dimension
/// consistency, and payload length. Errors carry the byte offset of the
/// first defect.
pub fn read_fixture(path: impl AsRef<Path>) -> Result<AttentionInputs> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut r = Reader {
        inner: BufReader::new(file),
        offset: 0,
    };

    let mut grid: Option<GridSpec> = None;
    let mut tensors: Vec<Vec<f32>> = Vec::with_capacity(3);
    for expected_tag in 0u32..3 {
        let (record_grid, data) = read_record(&mut r, expected_tag).map_err(|e| match e {
            ReadError::Io(source) => io_err(source),
            ReadError::Format(err) => err,
        })?;
        match grid {
            None => grid = Some(record_grid),
            Some(g) if g != record_grid => {
                return Err(Error::format(
                    r.offset,
                    format!("record {expected_tag} dims disagree with record 0"),
                ));
            }
            Some(_) => {}
        }
        tensors.push(data);
    }
    let mut probe = [0u8; 1];
    match r.inner.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => return Err(Error::format(r.offset, "trailing bytes after V record")),
        Err(source) => return Err(io_err(source)),
    }

    let grid = grid.expect("three records read");
    let v = tensors.pop().unwrap();
    let k = tensors.pop().unwrap();
    let q = tensors.pop().unwrap();
    AttentionInputs::new(grid, q, k, v)
}

struct Reader<R> {
    inner: R,
    offset: u64,
}

enum ReadError {
    Io(std::io::Error),
    Format(Error),
}

impl<R: Read> Reader<R> {
    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> std::result::Result<(), ReadError> {
        let at = self.offset;
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(ReadError::Format(
                Error::format(at, format!("truncated while reading {what}")),
            )),
            Err(e) => Err(ReadError::Io(e)),
        }
    }

    fn read_u32(&mut self, what: &str) -> std::result::Result<u32, ReadError> {
        let mut buf = [0u8; 4];
        self.read_exact(&mut buf, what)?;
        Ok(u32::from_le_bytes(buf))
    }
}

fn read_record<R: Read>(
    r: &mut Reader<R>,
    expected_tag: u32,
) -> std::result::Result<(GridSpec, Vec<f32>), ReadError> {
    let magic_at = r.offset;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, "magic")?;
    if magic != MAGIC {
        return Err(ReadError::Format(Error::format(magic_at, "bad magic")));
    }
    let version_at = r.offset;
    let version = r.read_u32("version")?;
    if version != VERSION {
        return Err(ReadError::Format(Error::format(
            version_at,
            format!("unsupported version {version}, expected {VERSION}"),
        )));
    }
    let tag_at = r.offset;
    let tag = r.read_u32("tensor tag")?;
    if tag != expected_tag {
        return Err(ReadError::Format(Error::format(
            tag_at,
            format!("unexpected tensor tag {tag}, expected {expected_tag}"),
        )));
    }
    let dims_at = r.offset;
    let mut dims = [0u32; 5];
    for d in dims.iter_mut() {
        *d = r.read_u32("dims")?;
    }
    let grid = GridSpec::new(
        dims[0] as usize,
        dims[1] as usize,
        dims[2] as usize,
        dims[3] as usize,
        dims[4] as usize,
    )
    .map_err(|e| ReadError::Format(Error::format(dims_at, format!("invalid dims: {e}"))))?;

    let mut data = vec![0f32; grid.elements()];
    let mut buf = [0u8; 4096];
    let mut filled = 0usize;
    while filled < data.len() {
        let take = (data.len() - filled).min(buf.len() / 4);
        r.read_exact(&mut buf[..4 * take], "payload")?;
        for i in 0..take {
            data[filled + i] = f32::from_le_bytes(buf[4 * i..4 * i + 4].try_into().unwrap());
        }
        filled += take;
    }
    Ok((grid, data))
}
