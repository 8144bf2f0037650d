//! Little-endian primitives and checksummed record framing.
//!
//! A frame is `u32 body length | u8 kind | body | u32 CRC32(kind ++ body)`.
//! Strings are `u32` length-prefixed UTF-8, arrays `u32` count-prefixed.

use crate::error::{Error, Result};
use crate::model::{Attribute, Kind, PayloadSchema, PayloadValue, Value};
use crate::partition::{Axis, PartitionPolicy};

pub const FRAME_OVERHEAD: usize = 4 + 1 + 4;

#[derive(Debug, Default, Clone)]
pub struct Enc {
    pub buf: Vec<u8>,
}

impl Enc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
        self
    }

    pub fn str(&mut self, v: &str) -> &mut Self {
        self.bytes(v.as_bytes())
    }

    pub fn raw(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn schema(&mut self, s: &PayloadSchema) -> &mut Self {
        self.u32(s.len() as u32);
        for a in s.attributes() {
            self.str(&a.name).u8(a.kind.code());
        }
        self
    }

    pub fn policy(&mut self, p: &PartitionPolicy) -> &mut Self {
        self.u8(p.axis.code()).u64(p.chunk)
    }

    pub fn payload(&mut self, p: &PayloadValue) -> &mut Self {
        self.u32(p.0.len() as u32);
        for v in &p.0 {
            self.u8(v.kind().code());
            match v {
                Value::Bool(b) => {
                    self.u8(*b as u8);
                }
                Value::Int32(x) => {
                    self.u32(*x as u32);
                }
                Value::Int64(x) => {
                    self.u64(*x as u64);
                }
                Value::Float32(x) => {
                    self.u32(x.to_bits());
                }
                Value::Float64(x) => {
                    self.u64(x.to_bits());
                }
                Value::String(s) => {
                    self.str(s);
                }
                Value::Blob(b) => {
                    self.bytes(b);
                }
                Value::ArrayInt32(xs) => {
                    self.u32(xs.len() as u32);
                    xs.iter().for_each(|x| {
                        self.u32(*x as u32);
                    });
                }
                Value::ArrayInt64(xs) => {
                    self.u32(xs.len() as u32);
                    xs.iter().for_each(|x| {
                        self.u64(*x as u64);
                    });
                }
                Value::ArrayFloat32(xs) => {
                    self.u32(xs.len() as u32);
                    xs.iter().for_each(|x| {
                        self.u32(x.to_bits());
                    });
                }
                Value::ArrayFloat64(xs) => {
                    self.u32(xs.len() as u32);
                    xs.iter().for_each(|x| {
                        self.u64(x.to_bits());
                    });
                }
            }
        }
        self
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::corrupt(format!("truncated: need {n} bytes at {}", self.pos)));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn str(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| Error::corrupt("invalid utf-8"))
    }

    fn count(&mut self, elem: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(elem) > self.remaining() {
            return Err(Error::corrupt("array count exceeds data"));
        }
        Ok(n)
    }

    pub fn schema(&mut self) -> Result<PayloadSchema> {
        let n = self.count(5)?;
        let mut attrs = Vec::with_capacity(n);
        for _ in 0..n {
            let name = self.str()?;
            let kind = Kind::from_code(self.u8()?).ok_or_else(|| Error::corrupt("unknown kind code"))?;
            attrs.push(Attribute { name, kind });
        }
        PayloadSchema::new(attrs).map_err(|e| Error::corrupt(e.to_string()))
    }

    pub fn policy(&mut self) -> Result<PartitionPolicy> {
        let axis = Axis::from_code(self.u8()?).ok_or_else(|| Error::corrupt("unknown axis"))?;
        let chunk = self.u64()?;
        Ok(PartitionPolicy { axis, chunk })
    }

    pub fn payload(&mut self) -> Result<PayloadValue> {
        let n = self.count(1)?;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let kind = Kind::from_code(self.u8()?).ok_or_else(|| Error::corrupt("unknown kind code"))?;
            values.push(match kind {
                Kind::Bool => Value::Bool(self.u8()? != 0),
                Kind::Int32 => Value::Int32(self.u32()? as i32),
                Kind::Int64 => Value::Int64(self.u64()? as i64),
                Kind::Float32 => Value::Float32(f32::from_bits(self.u32()?)),
                Kind::Float64 => Value::Float64(f64::from_bits(self.u64()?)),
                Kind::String => Value::String(self.str()?),
                Kind::Blob => Value::Blob(self.bytes()?.to_vec()),
                Kind::ArrayInt32 => {
                    let n = self.count(4)?;
                    Value::ArrayInt32((0..n).map(|_| self.u32().map(|x| x as i32)).collect::<Result<_>>()?)
                }
                Kind::ArrayInt64 => {
                    let n = self.count(8)?;
                    Value::ArrayInt64((0..n).map(|_| self.u64().map(|x| x as i64)).collect::<Result<_>>()?)
                }
                Kind::ArrayFloat32 => {
                    let n = self.count(4)?;
                    Value::ArrayFloat32((0..n).map(|_| self.u32().map(f32::from_bits)).collect::<Result<_>>()?)
                }
                Kind::ArrayFloat64 => {
                    let n = self.count(8)?;
                    Value::ArrayFloat64((0..n).map(|_| self.u64().map(f64::from_bits)).collect::<Result<_>>()?)
                }
            });
        }
        Ok(PayloadValue(values))
    }
}

pub fn crc(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

pub fn frame(kind: u8, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + FRAME_OVERHEAD);
    frame_into(&mut out, kind, body);
    out
}

pub fn frame_into(out: &mut Vec<u8>, kind: u8, body: &[u8]) {
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.push(kind);
    out.extend_from_slice(body);
    let mut h = crc32fast::Hasher::new();
    h.update(&[kind]);
    h.update(body);
    out.extend_from_slice(&h.finalize().to_le_bytes());
}

/// Appends one frame whose body `body` encodes straight into `out`.
pub fn frame_with(out: &mut Vec<u8>, kind: u8, body: impl FnOnce(&mut Enc)) {
    let start = out.len();
    let mut e = Enc { buf: std::mem::take(out) };
    e.u32(0).u8(kind);
    body(&mut e);
    let mut buf = e.buf;
    let len = (buf.len() - start - 5) as u32;
    buf[start..start + 4].copy_from_slice(&len.to_le_bytes());
    let sum = crc(&buf[start + 4..]);
    buf.extend_from_slice(&sum.to_le_bytes());
    *out = buf;
}

#[derive(Debug, PartialEq, Eq)]
pub enum Frame<'a> {
    Record { kind: u8, body: &'a [u8], next: usize },
    /// Ran out of bytes mid-frame.
    Torn,
    /// Complete frame whose checksum does not match.
    Bad,
    End,
}

pub fn read_frame(buf: &[u8], pos: usize) -> Frame<'_> {
    if pos == buf.len() {
        return Frame::End;
    }
    let rest = &buf[pos..];
    if rest.len() < FRAME_OVERHEAD {
        return Frame::Torn;
    }
    let len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
    if rest.len() - FRAME_OVERHEAD < len {
        return Frame::Torn;
    }
    let kind = rest[4];
    let body = &rest[5..5 + len];
    let stored = u32::from_le_bytes(rest[5 + len..9 + len].try_into().unwrap());
    let mut h = crc32fast::Hasher::new();
    h.update(&[kind]);
    h.update(body);
    if h.finalize() != stored {
        return Frame::Bad;
    }
    Frame::Record { kind, body, next: pos + FRAME_OVERHEAD + len }
}
