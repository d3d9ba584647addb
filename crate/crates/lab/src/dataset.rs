//! Little-endian binary container for channel datasets.
//!
//! Layout: magic `CFDS`, `u32` version, `u32` Q, I, M, `f64` η, `u64`
//! seed, `f64` P_max, area side, shadowing std, minimum distance, `u8`
//! small-scale flag, I × `f64` noise powers, `u64` sample count, then per
//! sample the true and estimated channels (Q·I·M pairs of `f64` re/im,
//! AP-major), Q·I per-link radii and I per-user radii.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use cellfree::sysmodel::{ChannelModel, ChannelPair, SystemConfig};
use cellfree::train::Dataset;
use cellfree::{CTensor3, C64};

pub const MAGIC: [u8; 4] = *b"CFDS";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a cellfree dataset (magic {0:?})")]
    Magic([u8; 4]),
    #[error("unsupported dataset version {0}")]
    Version(u32),
    #[error("corrupt dataset: {0}")]
    Corrupt(String),
}

struct Out<W>(W);

impl<W: Write> Out<W> {
    fn u32(&mut self, x: u32) -> io::Result<()> {
        self.0.write_all(&x.to_le_bytes())
    }
    fn u64(&mut self, x: u64) -> io::Result<()> {
        self.0.write_all(&x.to_le_bytes())
    }
    fn f64(&mut self, x: f64) -> io::Result<()> {
        self.0.write_all(&x.to_le_bytes())
    }
    fn tensor(&mut self, t: &CTensor3) -> io::Result<()> {
        for z in t.as_slice() {
            self.f64(z.re)?;
            self.f64(z.im)?;
        }
        Ok(())
    }
}

struct In<R>(R);

impl<R: Read> In<R> {
    fn bytes<const N: usize>(&mut self) -> io::Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b)?;
        Ok(b)
    }
    fn u32(&mut self) -> io::Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> io::Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> io::Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn floats(&mut self, n: usize) -> io::Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn tensor(&mut self, q: usize, i: usize, m: usize) -> Result<CTensor3, FormatError> {
        let data = (0..q * i * m)
            .map(|_| Ok(C64::new(self.f64()?, self.f64()?)))
            .collect::<io::Result<Vec<_>>>()?;
        CTensor3::from_vec(q, i, m, data).map_err(|e| FormatError::Corrupt(e.to_string()))
    }
}

/// Serializes `data`, recording `seed` as the generating seed.
pub fn write_to<W: Write>(w: W, data: &Dataset, seed: u64) -> Result<(), FormatError> {
    let c = &data.config;
    let mut out = Out(w);
    out.0.write_all(&MAGIC)?;
    out.u32(VERSION)?;
    for n in [c.num_aps, c.num_users, c.num_antennas] {
        out.u32(n as u32)?;
    }
    out.f64(data.error_level)?;
    out.u64(seed)?;
    for x in [c.max_power, c.area_side, c.channel.shadow_std_db, c.channel.min_distance] {
        out.f64(x)?;
    }
    out.0.write_all(&[c.channel.small_scale as u8])?;
    for &s in &c.noise_power {
        out.f64(s)?;
    }
    out.u64(data.samples.len() as u64)?;
    for p in &data.samples {
        out.tensor(&p.true_h)?;
        out.tensor(&p.est_h)?;
        for &e in p.per_link_eps.iter().chain(&p.per_user_eps) {
            out.f64(e)?;
        }
    }
    out.0.flush()?;
    Ok(())
}

/// Reads a dataset and the seed it was generated from.
pub fn read_from<R: Read>(r: R) -> Result<(Dataset, u64), FormatError> {
    let mut inp = In(r);
    let magic: [u8; 4] = inp.bytes()?;
    if magic != MAGIC {
        return Err(FormatError::Magic(magic));
    }
    let version = inp.u32()?;
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let (q, i, m) = (inp.u32()? as usize, inp.u32()? as usize, inp.u32()? as usize);
    let eta = inp.f64()?;
    let seed = inp.u64()?;
    let mut config = SystemConfig::new(q, i, m);
    config.max_power = inp.f64()?;
    config.area_side = inp.f64()?;
    config.channel = ChannelModel {
        shadow_std_db: inp.f64()?,
        min_distance: inp.f64()?,
        small_scale: inp.bytes::<1>()?[0] != 0,
    };
    config.noise_power = inp.floats(i)?;
    config.rng_seed = seed;
    config.validate().map_err(|e| FormatError::Corrupt(e.to_string()))?;
    let count = inp.u64()?;
    let mut samples = Vec::new();
    for _ in 0..count {
        let true_h = inp.tensor(q, i, m)?;
        let est_h = inp.tensor(q, i, m)?;
        let per_link_eps = inp.floats(q * i)?;
        let per_user_eps = inp.floats(i)?;
        samples.push(ChannelPair {
            true_h,
            est_h,
            per_link_eps,
            per_user_eps,
            error_level: eta,
        });
    }
    let mut rest = [0u8; 1];
    if inp.0.read(&mut rest)? != 0 {
        return Err(FormatError::Corrupt("trailing bytes after the last sample".into()));
    }
    Ok((
        Dataset {
            config,
            error_level: eta,
            samples,
        },
        seed,
    ))
}

pub fn save(path: &Path, data: &Dataset, seed: u64) -> Result<(), FormatError> {
    write_to(BufWriter::new(File::create(path)?), data, seed)
}

pub fn load(path: &Path) -> Result<(Dataset, u64), FormatError> {
    read_from(BufReader::new(File::open(path)?))
}
