//! Binary checkpoint format.
//!
//! ```text
//! "SDOC" | version u8 = 1 | V u32 | d_w u32 | d u32
//! section*  (name_len u16, name utf-8, count u64, count × f32)
//! 0u16      end of sections
//! seed u64 | epochs_completed u64 | step u64
//! ```
//!
//! All integers and floats are little-endian. Sections appear in a fixed
//! order: the model arrays in [`param_names`] order, `meta.arch`
//! (`kernel_width, dropout, linear_convs`), then `adam.m.<name>` and
//! `adam.v.<name>` for every array when the optimizer is Adam.

use std::io::{self, Read, Write};
use std::path::Path;

use crate::encoder::{param_names, Architecture, ModelParams};
use crate::error::{Error, Result};
use crate::numcore::NumArray;

pub const MAGIC: &[u8; 4] = b"SDOC";
pub const VERSION: u8 = 1;
const META: &str = "meta.arch";

/// Where a run's random streams stand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct RngState {
    pub seed: u64,
    pub epochs_completed: u64,
}

/// First and second Adam moments, one array per parameter.
pub type AdamMoments = (Vec<NumArray<f32>>, Vec<NumArray<f32>>);

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams<f32>,
    /// Adam moments; `None` for SGD. The Adam step count equals `step`.
    pub adam: Option<AdamMoments>,
    pub rng: RngState,
    pub step: u64,
}

impl Checkpoint {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let arch = &self.model.arch;
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        for n in [self.model.vocab_size(), arch.embedding_dim, arch.output_dim] {
            let n = u32::try_from(n).map_err(|_| Error::invalid(format!("dimension {n} exceeds u32")))?;
            w.write_all(&n.to_le_bytes())?;
        }
        let names = param_names();
        for (name, a) in names.iter().zip(self.model.arrays()) {
            write_section(&mut w, name, a.data())?;
        }
        let meta = [
            arch.kernel_width as f32,
            arch.dropout as f32,
            if arch.linear_convs { 1.0 } else { 0.0 },
        ];
        write_section(&mut w, META, &meta)?;
        if let Some((m, v)) = &self.adam {
            for (prefix, moments) in [("adam.m.", m), ("adam.v.", v)] {
                for (name, a) in names.iter().zip(moments) {
                    write_section(&mut w, &format!("{prefix}{name}"), a.data())?;
                }
            }
        }
        w.write_all(&0u16.to_le_bytes())?;
        for n in [self.rng.seed, self.rng.epochs_completed, self.step] {
            w.write_all(&n.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::BadMagic);
        }
        let version = read_u8(&mut r, "version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let vocab_size = read_u32(&mut r, "header")? as usize;
        let embedding_dim = read_u32(&mut r, "header")? as usize;
        let output_dim = read_u32(&mut r, "header")? as usize;

        let mut sections = Vec::new();
        loop {
            let len = read_u16(&mut r, "section name length")? as usize;
            if len == 0 {
                break;
            }
            let mut name = vec![0u8; len];
            read_exact(&mut r, &mut name, "section name")?;
            let name = String::from_utf8(name).map_err(|_| Error::Malformed("section name is not UTF-8".into()))?;
            let count = read_u64(&mut r, &name)?;
            let mut values = Vec::new();
            (&mut r)
                .take(count.saturating_mul(4))
                .read_to_end(&mut values)
                .map_err(Error::Io)?;
            if (values.len() as u64) < count.saturating_mul(4) {
                return Err(Error::Truncated(name));
            }
            let values: Vec<f32> = values
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect();
            sections.push((name, values));
        }
        let seed = read_u64(&mut r, "rng state")?;
        let epochs_completed = read_u64(&mut r, "rng state")?;
        let step = read_u64(&mut r, "step counter")?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Malformed("trailing bytes after step counter".into()));
        }

        let names = param_names();
        let mut sections = sections.into_iter().peekable();
        let raw: Vec<Vec<f32>> = names
            .iter()
            .map(|n| expect_section(&mut sections, n))
            .collect::<Result<_>>()?;
        let meta = expect_section(&mut sections, META)?;
        let [kernel_width, dropout, linear] = meta[..] else {
            return Err(Error::Malformed(format!("{META} has {} values", meta.len())));
        };
        // name order: embedding, then per encoder conv1.w, conv1.b, ...
        let channel = |i: usize| raw[2 + 2 * i].len();
        let arch = Architecture {
            embedding_dim,
            conv_channels: [channel(0), channel(1), channel(2), channel(3)],
            kernel_width: kernel_width as usize,
            hidden_dim: raw[10].len(),
            output_dim,
            dropout: f64::from(dropout),
            linear_convs: linear != 0.0,
        };
        arch.validate()
            .map_err(|e| Error::Malformed(format!("architecture: {e}")))?;
        let arrays: Vec<NumArray<f32>> = raw.into_iter().map(NumArray::from_vec).collect();
        let model = ModelParams::from_arrays(arch, vocab_size, arrays)
            .map_err(|e| Error::Malformed(e.to_string()))?;

        let adam = if sections.peek().is_some() {
            let mut moments = |prefix: &str| -> Result<Vec<NumArray<f32>>> {
                names
                    .iter()
                    .zip(model.arrays())
                    .map(|(name, p)| {
                        let values = expect_section(&mut sections, &format!("{prefix}{name}"))?;
                        NumArray::new(p.shape().to_vec(), values).map_err(|e| Error::Malformed(e.to_string()))
                    })
                    .collect()
            };
            let m = moments("adam.m.")?;
            let v = moments("adam.v.")?;
            Some((m, v))
        } else {
            None
        };
        if let Some((n, _)) = sections.next() {
            return Err(Error::Malformed(format!("unexpected section {n}")));
        }
        Ok(Checkpoint {
            model,
            adam,
            rng: RngState { seed, epochs_completed },
            step,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write(io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(io::BufReader::new(file))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory cannot fail");
        buf
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    ck.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

fn expect_section(sections: &mut impl Iterator<Item = (String, Vec<f32>)>, name: &str) -> Result<Vec<f32>> {
    match sections.next() {
        Some((n, v)) if n == name => Ok(v),
        Some((n, _)) => Err(Error::Malformed(format!("expected section {name}, found {n}"))),
        None => Err(Error::Malformed(format!("missing section {name}"))),
    }
}

fn write_section<W: Write>(w: &mut W, name: &str, values: &[f32]) -> Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| Error::invalid("section name too long"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Truncated(what.to_string()),
        _ => Error::Io(e),
    })
}

fn read_u8<R: Read>(r: &mut R, what: &str) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b, what)?;
    Ok(b[0])
}

fn read_u16<R: Read>(r: &mut R, what: &str) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b, what)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> Checkpoint {
        let arch = Architecture {
            embedding_dim: 6,
            conv_channels: [3, 4, 5, 6],
            hidden_dim: 7,
            output_dim: 5,
            dropout: 0.25,
            ..Architecture::default()
        };
        let model: ModelParams<f32> = init_model(9, &arch, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let m: Vec<NumArray<f32>> = model.arrays().iter().map(|a| a.cast()).collect();
        let v = m.iter().map(|a| a.cast()).collect();
        Checkpoint {
            model,
            adam: Some((m, v)),
            rng: RngState {
                seed: 7,
                epochs_completed: 3,
            },
            step: 12,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for ck in [small(), Checkpoint { adam: None, ..small() }] {
            let bytes = ck.to_bytes();
            let back = Checkpoint::read(bytes.as_slice()).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn header_layout() {
        let bytes = small().to_bytes();
        assert_eq!(&bytes[..4], b"SDOC");
        assert_eq!(bytes[4], 1);
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 9);
        assert_eq!(u16::from_le_bytes(bytes[17..19].try_into().unwrap()), 9);
        assert_eq!(&bytes[19..28], b"embedding");
    }

    #[test]
    fn corruption_gives_distinct_errors() {
        let bytes = small().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::read(bad.as_slice()), Err(Error::BadMagic)));
        let mut future = bytes.clone();
        future[4] = 2;
        assert!(matches!(Checkpoint::read(future.as_slice()), Err(Error::UnsupportedVersion(2))));
        for cut in [2, 7, 30, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(Checkpoint::read(&bytes[..cut]), Err(Error::Truncated(_))),
                "cut at {cut}"
            );
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Checkpoint::read(extra.as_slice()), Err(Error::Malformed(_))));
    }
}
