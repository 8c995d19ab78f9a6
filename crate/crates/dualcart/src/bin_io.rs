//! Little-endian primitives shared by the snapshot and cache formats.

use std::io::{self, Read, Write};

pub fn put_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn put_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn put_i64(w: &mut impl Write, v: i64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn put_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

pub fn put_u32s(w: &mut impl Write, v: &[u32]) -> io::Result<()> {
    put_u64(w, v.len() as u64)?;
    for &x in v {
        put_u32(w, x)?;
    }
    Ok(())
}

pub fn put_u64s(w: &mut impl Write, v: &[u64]) -> io::Result<()> {
    put_u64(w, v.len() as u64)?;
    for &x in v {
        put_u64(w, x)?;
    }
    Ok(())
}

pub fn get_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn get_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn get_i64(r: &mut impl Read) -> io::Result<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(i64::from_le_bytes(b))
}

pub fn get_f32(r: &mut impl Read) -> io::Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn bad(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

/// Guards length prefixes against absurd allocations from corrupt input.
fn checked_len(n: u64, limit: u64) -> io::Result<usize> {
    if n > limit {
        Err(bad("length prefix too large"))
    } else {
        Ok(n as usize)
    }
}

pub fn get_str(r: &mut impl Read) -> io::Result<String> {
    let n = checked_len(get_u32(r)? as u64, 1 << 20)?;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| bad("string is not UTF-8"))
}

pub fn get_u32s(r: &mut impl Read) -> io::Result<Vec<u32>> {
    let n = checked_len(get_u64(r)?, 1 << 34)?;
    (0..n).map(|_| get_u32(r)).collect()
}

pub fn get_u64s(r: &mut impl Read) -> io::Result<Vec<u64>> {
    let n = checked_len(get_u64(r)?, 1 << 34)?;
    (0..n).map(|_| get_u64(r)).collect()
}

/// FNV-1a, 64 bit.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = Fnv1a::default();
    h.update(bytes);
    h.0
}

/// Streaming FNV-1a; also a `Write` sink so files can be hashed as they
/// are written.
#[derive(Clone, Copy, Debug)]
pub struct Fnv1a(pub u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv1a {
    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

/// Forwards writes to `inner` and hashes them.
pub struct HashingWriter<W> {
    pub inner: W,
    pub hash: Fnv1a,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hash.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_known_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn primitives_round_trip() {
        let mut buf = Vec::new();
        put_str(&mut buf, "héllo").unwrap();
        put_u32s(&mut buf, &[1, 2, 3]).unwrap();
        put_i64(&mut buf, -5).unwrap();
        let mut r = buf.as_slice();
        assert_eq!(get_str(&mut r).unwrap(), "héllo");
        assert_eq!(get_u32s(&mut r).unwrap(), vec![1, 2, 3]);
        assert_eq!(get_i64(&mut r).unwrap(), -5);
        assert!(r.is_empty());
    }
}
