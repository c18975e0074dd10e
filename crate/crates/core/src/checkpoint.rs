//! Binary container for network parameters and training state.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "ERPP"  u32 version  u32 section_count
//! section_count x { u16 name_len, name (utf-8), u64 offset, u64 length }
//! payloads, back to back, in table order
//! ```
//!
//! Offsets are absolute. Payloads are built with [`Writer`] and read back
//! with [`Reader`]; floating-point values are stored as raw IEEE-754 bits so
//! a round trip is exact.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp, OutputActivation};
use crate::seeding::RngState;

pub const MAGIC: &[u8; 4] = b"ERPP";
pub const FORMAT_VERSION: u32 = 1;

const WHAT: &str = "checkpoint";
const MAX_NAME_LEN: usize = 256;

fn bad(reason: impl Into<String>) -> Error {
    Error::format(WHAT, reason)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    sections: Vec<(String, Vec<u8>)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a section. Names must be unique.
    pub fn insert(&mut self, name: &str, payload: Vec<u8>) -> Result<()> {
        if name.is_empty() || name.len() > MAX_NAME_LEN {
            return Err(Error::contract(format!("bad section name {name:?}")));
        }
        if self.contains(name) {
            return Err(Error::contract(format!("duplicate section {name:?}")));
        }
        self.sections.push((name.to_owned(), payload));
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.sections.iter().any(|(n, _)| n == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.sections.iter().map(|(n, _)| n.as_str())
    }

    pub fn section(&self, name: &str) -> Result<&[u8]> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p.as_slice())
            .ok_or_else(|| bad(format!("missing section {name:?}")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let table_len: usize = self.sections.iter().map(|(n, _)| 2 + n.len() + 16).sum();
        let mut offset = (12 + table_len) as u64;
        let mut w = Writer::new();
        w.bytes(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u32(self.sections.len() as u32);
        for (name, payload) in &self.sections {
            w.u16(name.len() as u16);
            w.bytes(name.as_bytes());
            w.u64(offset);
            w.u64(payload.len() as u64);
            offset += payload.len() as u64;
        }
        for (_, payload) in &self.sections {
            w.bytes(payload);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let count = r.u32()? as usize;
        // each table entry takes at least 18 bytes
        if count > r.remaining() / 18 {
            return Err(bad("section count exceeds file size"));
        }
        let mut table = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u16()? as usize;
            if len == 0 || len > MAX_NAME_LEN {
                return Err(bad("bad section name length"));
            }
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| bad("section name is not utf-8"))?
                .to_owned();
            table.push((name, r.u64()?, r.u64()?));
        }
        let mut expected = r.position() as u64;
        let mut out = Container::new();
        for (name, offset, length) in table {
            if offset != expected {
                return Err(bad(format!("section {name:?} is not contiguous")));
            }
            let end = offset
                .checked_add(length)
                .filter(|&e| e <= bytes.len() as u64)
                .ok_or_else(|| bad(format!("section {name:?} runs past end of file")))?;
            let payload = bytes[offset as usize..end as usize].to_vec();
            out.insert(&name, payload).map_err(|_| bad(format!("duplicate section {name:?}")))?;
            expected = end;
        }
        if expected != bytes.len() as u64 {
            return Err(bad("trailing bytes after last section"));
        }
        Ok(out)
    }

    /// Writes to a temporary file next to `path`, then renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile {
                path: path.to_path_buf(),
            });
        }
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::decode(&bytes)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let ctx = |e| Error::io(format!("writing {}", path.display()), e);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(ctx)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    let mut f = fs::File::create(tmp).map_err(ctx)?;
    f.write_all(bytes).map_err(ctx)?;
    f.sync_all().map_err(ctx)?;
    drop(f);
    fs::rename(tmp, path).map_err(ctx)
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn bool(&mut self, v: bool) {
        self.u8(u8::from(v));
    }

    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u128(&mut self, v: u128) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }

    /// Length-prefixed vector.
    pub fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(bad("unexpected end of data"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(bad(format!("invalid boolean byte {v}"))),
        }
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    /// A count that must be backed by at least `unit` bytes per element.
    pub fn count(&mut self, unit: usize) -> Result<usize> {
        let n = self.u64()?;
        let n = usize::try_from(n).map_err(|_| bad("count overflows"))?;
        if n.checked_mul(unit.max(1)).is_none_or(|b| b > self.remaining()) {
            return Err(bad(format!("count {n} exceeds remaining data")));
        }
        Ok(n)
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.count(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn finish(self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(bad(format!("{} unread bytes in section", self.remaining())));
        }
        Ok(())
    }
}

pub fn write_mlp(w: &mut Writer, net: &Mlp) {
    w.u8(net.output_activation().tag());
    w.u64(net.sizes().len() as u64);
    for &s in net.sizes() {
        w.u64(s as u64);
    }
    w.f64s(net.params());
}

pub fn read_mlp(r: &mut Reader) -> Result<Mlp> {
    let output = OutputActivation::from_tag(r.u8()?).ok_or_else(|| bad("unknown output activation"))?;
    let n = r.count(8)?;
    let mut sizes = Vec::with_capacity(n);
    for _ in 0..n {
        let s = usize::try_from(r.u64()?).map_err(|_| bad("layer size overflows"))?;
        sizes.push(s);
    }
    let params = r.f64s()?;
    Mlp::from_params(&sizes, params, output).map_err(|e| bad(e.to_string()))
}

pub fn write_adam(w: &mut Writer, adam: &Adam) {
    w.f64(adam.learning_rate);
    w.f64(adam.beta1);
    w.f64(adam.beta2);
    w.f64(adam.epsilon);
    w.u64(adam.step);
    w.f64s(&adam.first_moment);
    w.f64s(&adam.second_moment);
}

pub fn read_adam(r: &mut Reader) -> Result<Adam> {
    let adam = Adam {
        learning_rate: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        epsilon: r.f64()?,
        step: r.u64()?,
        first_moment: r.f64s()?,
        second_moment: r.f64s()?,
    };
    if adam.first_moment.len() != adam.second_moment.len() {
        return Err(bad("optimizer moment lengths differ"));
    }
    let hyper_ok = adam.learning_rate.is_finite()
        && adam.learning_rate > 0.0
        && (0.0..1.0).contains(&adam.beta1)
        && (0.0..1.0).contains(&adam.beta2)
        && adam.epsilon.is_finite()
        && adam.epsilon > 0.0;
    if !hyper_ok {
        return Err(bad("optimizer hyperparameters out of range"));
    }
    if adam.first_moment.iter().any(|m| !m.is_finite())
        || adam.second_moment.iter().any(|v| !(v.is_finite() && *v >= 0.0))
    {
        return Err(bad("optimizer moments must be finite"));
    }
    Ok(adam)
}

pub fn write_rng(w: &mut Writer, s: &RngState) {
    w.bytes(&s.seed);
    w.u64(s.stream);
    w.u128(s.word_pos);
}

pub fn read_rng(r: &mut Reader) -> Result<RngState> {
    Ok(RngState {
        seed: r.array()?,
        stream: r.u64()?,
        word_pos: r.u128()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetRole;
    use crate::seeding::rng_for;
    use rand::Rng;

    fn sample() -> Container {
        let mut rng = rng_for(3, &[]);
        let net = NetRole::Value.build(5, 1, &mut rng).unwrap();
        let mut w = Writer::new();
        write_mlp(&mut w, &net);
        let mut c = Container::new();
        c.insert("value", w.finish()).unwrap();
        let mut w = Writer::new();
        let mut adam = Adam::new(4, 5e-4);
        adam.step(&mut [0.0; 4], &[0.1, -0.2, 0.3, 0.0]).unwrap();
        write_adam(&mut w, &adam);
        let _: u64 = rng.random();
        write_rng(&mut w, &RngState::capture(&rng));
        c.insert("state", w.finish()).unwrap();
        c
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = c.encode();
        assert_eq!(&bytes[..4], MAGIC);
        let d = Container::decode(&bytes).unwrap();
        assert_eq!(c, d);
        assert_eq!(d.encode(), bytes);

        let mut r = Reader::new(d.section("value").unwrap());
        let net = read_mlp(&mut r).unwrap();
        r.finish().unwrap();
        assert_eq!(net.sizes(), &[5, 64, 64, 1]);
        let mut r = Reader::new(d.section("state").unwrap());
        let adam = read_adam(&mut r).unwrap();
        assert_eq!(adam.step, 1);
        read_rng(&mut r).unwrap();
        r.finish().unwrap();
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().encode();
        assert!(Container::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(Container::decode(&b).is_err());
        let mut b = bytes.clone();
        b.push(0);
        assert!(Container::decode(&b).is_err());
        let mut b = bytes;
        b[4] = 9;
        assert!(Container::decode(&b).is_err());
        assert!(Container::decode(&[]).is_err());
    }

    #[test]
    fn huge_counts_do_not_allocate() {
        let mut w = Writer::new();
        w.u8(0);
        w.u64(u64::MAX);
        let bytes = w.finish();
        assert!(read_mlp(&mut Reader::new(&bytes)).is_err());
    }

    #[test]
    fn atomic_save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/a.ckpt");
        let c = sample();
        c.save(&path).unwrap();
        assert_eq!(Container::load(&path).unwrap(), c);
        assert!(matches!(
            Container::load(&dir.path().join("nope")),
            Err(Error::MissingFile { .. })
        ));
    }
}
