//! Binary model files and text vector export.
//!
//! Binary layout, little-endian throughout:
//!
//! ```text
//! "XAEM"  version:u32  dim:u32  vocab:u32  min_count:u64
//! epochs_completed:u32  config_hash:u64
//! vocab x { count:u64  len:u32  token bytes }
//! input rows (vocab x dim f32)  output rows (vocab x dim f32)
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EmbeddingModel, TrainingMeta};
use crate::corpus::{VocabEntry, Vocabulary};
use crate::error::{Error, Result};
use crate::normalizer::{split_token, Architecture};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"XAEM";
pub const FORMAT_VERSION: u32 = 1;

/// Longest token accepted when reading; guards allocations on corrupt input.
const MAX_TOKEN_LEN: u32 = 1 << 16;

pub fn save<F: Scalar>(model: &EmbeddingModel<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_model(model, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn write_model<F: Scalar>(m: &EmbeddingModel<F>, w: &mut impl Write) -> io::Result<()> {
    let vocab = m.vocab();
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(m.dim() as u32).to_le_bytes())?;
    w.write_all(&(vocab.len() as u32).to_le_bytes())?;
    w.write_all(&vocab.min_count().to_le_bytes())?;
    w.write_all(&m.meta().epochs_completed.to_le_bytes())?;
    w.write_all(&m.meta().config_hash.to_le_bytes())?;
    for e in vocab.entries() {
        w.write_all(&e.count.to_le_bytes())?;
        w.write_all(&(e.token.len() as u32).to_le_bytes())?;
        w.write_all(e.token.as_bytes())?;
    }
    for &x in m.input().iter().chain(m.output()) {
        let v = x.to_f32().unwrap_or(f32::NAN);
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn corrupt(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::CorruptFile("file is truncated".into())
    } else {
        Error::CorruptFile(e.to_string())
    }
}

struct Reader<R>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.0.read_exact(&mut buf).map_err(corrupt)?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        self.bytes().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.bytes().map(u64::from_le_bytes)
    }
}

pub fn load<F: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingModel<F>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file))
}

fn read_model<F: Scalar>(inner: impl Read) -> Result<EmbeddingModel<F>> {
    let mut r = Reader(inner);
    if &r.bytes::<4>()? != MAGIC {
        return Err(Error::CorruptFile("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::IncompatibleVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let dim = r.u32()? as usize;
    let len = r.u32()? as usize;
    let min_count = r.u64()?;
    let meta = TrainingMeta {
        epochs_completed: r.u32()?,
        config_hash: r.u64()?,
    };
    if dim == 0 || len == 0 {
        return Err(Error::CorruptFile(
            "zero dimension or empty vocabulary".into(),
        ));
    }
    let mut entries = Vec::with_capacity(len.min(1 << 20));
    for _ in 0..len {
        let count = r.u64()?;
        let n = r.u32()?;
        if n > MAX_TOKEN_LEN {
            return Err(Error::CorruptFile(format!("token length {n} out of range")));
        }
        let mut buf = vec![0u8; n as usize];
        r.0.read_exact(&mut buf).map_err(corrupt)?;
        let token =
            String::from_utf8(buf).map_err(|_| Error::CorruptFile("token is not UTF-8".into()))?;
        let arch = split_token(&token)
            .and_then(|(a, _)| Architecture::new(a).ok())
            .ok_or_else(|| {
                Error::CorruptFile(format!("token `{token}` has no architecture prefix"))
            })?;
        entries.push(VocabEntry { token, arch, count });
    }
    let vocab = Vocabulary::from_entries(entries.clone(), min_count)?;
    if vocab.entries() != entries.as_slice() {
        return Err(Error::CorruptFile("vocabulary is not in id order".into()));
    }
    let n = len
        .checked_mul(dim)
        .ok_or_else(|| Error::CorruptFile("matrix size overflows".into()))?;
    let mut matrix = |n: usize| -> Result<Vec<F>> {
        let mut out = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            out.push(F::of(f32::from_le_bytes(r.bytes()?) as f64));
        }
        Ok(out)
    };
    let input = matrix(n)?;
    let output = matrix(n)?;
    let mut probe = [0u8; 1];
    if r.0.read(&mut probe).map_err(corrupt)? != 0 {
        return Err(Error::CorruptFile(
            "trailing bytes after output matrix".into(),
        ));
    }
    EmbeddingModel::from_parts(vocab, dim, input, output, meta)
}

/// Write the input embeddings as text: a `V d` header, then one line per
/// token holding the token and its `d` components.
pub fn export_text<F: Scalar>(model: &EmbeddingModel<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let body = (|| -> io::Result<()> {
        writeln!(w, "{} {}", model.vocab().len(), model.dim())?;
        for id in 0..model.vocab().len() as u32 {
            w.write_all(model.vocab().token(id).as_bytes())?;
            for x in model.input_row(id) {
                // Shortest repr that round-trips through f32.
                write!(w, " {}", x.to_f32().unwrap_or(f32::NAN))?;
            }
            writeln!(w)?;
        }
        w.flush()
    })();
    body.map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Block, BlockPair};

    fn model() -> EmbeddingModel<f32> {
        let pair = BlockPair {
            id: "p".into(),
            first: Block::from_bodies(
                Architecture::new("arm").unwrap(),
                &["add r1,r0,0", "add r1,r0,0", "bl FOO"],
            ),
            second: Block::from_bodies(Architecture::new("x86").unwrap(), &["ret"]),
        };
        let vocab = Vocabulary::build(&[pair], 1).unwrap();
        let mut m = EmbeddingModel::init(vocab, 4, 11);
        m.output_row_mut(1)[2] = -0.75;
        m
    }

    fn bytes(m: &EmbeddingModel<f32>) -> Vec<u8> {
        let mut buf = Vec::new();
        write_model(m, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip() {
        let m = model();
        let back: EmbeddingModel<f32> = read_model(&bytes(&m)[..]).unwrap();
        assert!(back.bit_eq(&m));
    }

    #[test]
    fn truncation_and_version() {
        let buf = bytes(&model());
        for cut in [0, 3, 10, 40, buf.len() - 1] {
            let r: Result<EmbeddingModel<f32>> = read_model(&buf[..cut]);
            assert!(matches!(r, Err(Error::CorruptFile(_))), "cut {cut}");
        }
        let mut v2 = buf.clone();
        v2[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            read_model::<f32>(&v2[..]),
            Err(Error::IncompatibleVersion {
                found: 2,
                expected: 1
            })
        ));
        let mut bad = buf.clone();
        bad[0] = b'Y';
        assert!(matches!(
            read_model::<f32>(&bad[..]),
            Err(Error::CorruptFile(_))
        ));
        let mut long = buf;
        long.push(0);
        assert!(matches!(
            read_model::<f32>(&long[..]),
            Err(Error::CorruptFile(_))
        ));
    }
}
