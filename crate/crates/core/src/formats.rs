//! Binary persistence: event logs (`EVT1`), frame corpora (`FRM1`) and
//! classifier parameters (`CNN1`). Everything is little-endian.

use std::io::{self, Read, Write};

use crate::classifier::{Architecture, CnnParams};
use crate::error::{Error, Result};
use crate::event::{Event, Polarity};
use crate::scalar::Real;

pub const EVT_MAGIC: &[u8; 4] = b"EVT1";
pub const FRM_MAGIC: &[u8; 4] = b"FRM1";
pub const CNN_MAGIC: &[u8; 4] = b"CNN1";

/// Bytes per `EVT1` record: x, y, polarity, t_us.
pub const EVT_RECORD_LEN: usize = 2 + 2 + 1 + 8;

fn malformed(format: &'static str, reason: impl Into<String>) -> Error {
    Error::Format { format, reason: reason.into() }
}

fn read_magic<R: Read>(r: &mut R, magic: &[u8; 4], format: &'static str) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| truncated(e, format, "magic"))?;
    if &buf != magic {
        return Err(malformed(format, format!("bad magic {buf:?}")));
    }
    Ok(())
}

fn truncated(e: io::Error, format: &'static str, what: &str) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        malformed(format, format!("truncated {what}"))
    } else {
        Error::Io(e)
    }
}

fn read_array<const N: usize, R: Read>(r: &mut R, format: &'static str, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| truncated(e, format, what))?;
    Ok(buf)
}

/// Streams events into an `EVT1` log, enforcing time order and bounds.
pub struct EventWriter<W: Write> {
    inner: W,
    width: u16,
    height: u16,
    last_t: u64,
    written: u64,
}

impl<W: Write> EventWriter<W> {
    pub fn new(mut inner: W, width: u16, height: u16) -> Result<Self> {
        inner.write_all(EVT_MAGIC)?;
        inner.write_all(&width.to_le_bytes())?;
        inner.write_all(&height.to_le_bytes())?;
        Ok(Self { inner, width, height, last_t: 0, written: 0 })
    }

    pub fn write(&mut self, events: &[Event]) -> Result<()> {
        let mut buf = Vec::with_capacity(events.len() * EVT_RECORD_LEN);
        for ev in events {
            if ev.x >= self.width || ev.y >= self.height {
                return Err(crate::error::contract(format!(
                    "event at ({}, {}) outside {}x{} sensor",
                    ev.x, ev.y, self.width, self.height
                )));
            }
            if ev.t_us < self.last_t {
                return Err(crate::error::contract(format!(
                    "event at {} us written after {} us",
                    ev.t_us, self.last_t
                )));
            }
            self.last_t = ev.t_us;
            buf.extend_from_slice(&ev.x.to_le_bytes());
            buf.extend_from_slice(&ev.y.to_le_bytes());
            buf.push(ev.polarity.sign() as u8);
            buf.extend_from_slice(&ev.t_us.to_le_bytes());
        }
        self.inner.write_all(&buf)?;
        self.written += events.len() as u64;
        Ok(())
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// A decoded `EVT1` log.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub width: u16,
    pub height: u16,
    pub events: Vec<Event>,
}

pub fn write_events<W: Write>(w: W, width: u16, height: u16, events: &[Event]) -> Result<W> {
    let mut writer = EventWriter::new(w, width, height)?;
    writer.write(events)?;
    writer.finish()
}

pub fn read_events<R: Read>(mut r: R) -> Result<EventLog> {
    const F: &str = "EVT1";
    read_magic(&mut r, EVT_MAGIC, F)?;
    let width = u16::from_le_bytes(read_array(&mut r, F, "header")?);
    let height = u16::from_le_bytes(read_array(&mut r, F, "header")?);
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() % EVT_RECORD_LEN != 0 {
        return Err(malformed(F, format!("{} trailing bytes", body.len() % EVT_RECORD_LEN)));
    }
    let mut events = Vec::with_capacity(body.len() / EVT_RECORD_LEN);
    let mut last_t = 0;
    for (i, rec) in body.chunks_exact(EVT_RECORD_LEN).enumerate() {
        let x = u16::from_le_bytes([rec[0], rec[1]]);
        let y = u16::from_le_bytes([rec[2], rec[3]]);
        let polarity = Polarity::from_sign(rec[4] as i8)
            .ok_or_else(|| malformed(F, format!("record {i}: polarity {}", rec[4] as i8)))?;
        let t_us = u64::from_le_bytes(rec[5..13].try_into().expect("8-byte slice"));
        if x >= width || y >= height {
            return Err(malformed(F, format!("record {i}: ({x}, {y}) outside {width}x{height}")));
        }
        if t_us < last_t {
            return Err(malformed(F, format!("record {i}: time goes backwards")));
        }
        last_t = t_us;
        events.push(Event { x, y, t_us, polarity });
    }
    Ok(EventLog { width, height, events })
}

/// Streams a fixed number of frames into an `FRM1` corpus.
pub struct FrameWriter<W: Write> {
    inner: W,
    frame_len: usize,
    declared: u32,
    written: u32,
}

impl<W: Write> FrameWriter<W> {
    pub fn new(mut inner: W, width: u16, height: u16, count: u32) -> Result<Self> {
        inner.write_all(FRM_MAGIC)?;
        inner.write_all(&width.to_le_bytes())?;
        inner.write_all(&height.to_le_bytes())?;
        inner.write_all(&count.to_le_bytes())?;
        Ok(Self { inner, frame_len: usize::from(width) * usize::from(height), declared: count, written: 0 })
    }

    pub fn write<T: Real>(&mut self, frame: &[T]) -> Result<()> {
        crate::error::ensure!(
            frame.len() == self.frame_len,
            "frame has {} values, expected {}",
            frame.len(),
            self.frame_len
        );
        crate::error::ensure!(self.written < self.declared, "more than the declared {} frames", self.declared);
        let mut buf = Vec::with_capacity(frame.len() * 4);
        for v in frame {
            buf.extend_from_slice(&v.to_le_f32_bytes());
        }
        self.inner.write_all(&buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        crate::error::ensure!(
            self.written == self.declared,
            "declared {} frames but wrote {}",
            self.declared,
            self.written
        );
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// A decoded `FRM1` corpus; frames are stored back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub width: u16,
    pub height: u16,
    pub data: Vec<f32>,
}

impl FrameSet {
    pub fn frame_len(&self) -> usize {
        usize::from(self.width) * usize::from(self.height)
    }

    pub fn len(&self) -> usize {
        if self.frame_len() == 0 {
            0
        } else {
            self.data.len() / self.frame_len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame(&self, index: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[index * n..(index + 1) * n]
    }
}

pub fn read_frames<R: Read>(mut r: R) -> Result<FrameSet> {
    const F: &str = "FRM1";
    read_magic(&mut r, FRM_MAGIC, F)?;
    let width = u16::from_le_bytes(read_array(&mut r, F, "header")?);
    let height = u16::from_le_bytes(read_array(&mut r, F, "header")?);
    let count = u32::from_le_bytes(read_array(&mut r, F, "header")?);
    let expected = usize::from(width) * usize::from(height) * count as usize * 4;
    let mut body = Vec::with_capacity(expected);
    r.read_to_end(&mut body)?;
    if body.len() != expected {
        return Err(malformed(F, format!("{count} frames need {expected} bytes, found {}", body.len())));
    }
    let data = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk"))).collect();
    Ok(FrameSet { width, height, data })
}

/// Writes the shape table (`u32` tensor count, then per tensor `u32` rank
/// and `u32` dims) followed by every tensor as `f32`.
pub fn write_params<T: Real, W: Write>(mut w: W, params: &CnnParams<T>) -> Result<W> {
    let shapes = params.tensor_shapes();
    let mut buf = Vec::new();
    buf.extend_from_slice(CNN_MAGIC);
    buf.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for shape in &shapes {
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for tensor in params.tensors() {
        for v in tensor {
            buf.extend_from_slice(&v.to_le_f32_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(w)
}

/// Recovers the layer sizes a shape table describes.
fn architecture_from_shapes(shapes: &[Vec<usize>]) -> Result<Architecture> {
    const F: &str = "CNN1";
    if shapes.len() != 12 {
        return Err(malformed(F, format!("expected 12 tensors, found {}", shapes.len())));
    }
    let conv = |i: usize| match shapes[2 * i].as_slice() {
        &[o, c, 3, 3] => Ok((c, o)),
        s => Err(malformed(F, format!("conv{} weight shape {s:?}", i + 1))),
    };
    let dense = |i: usize| match shapes[6 + 2 * i].as_slice() {
        &[o, n] => Ok((n, o)),
        s => Err(malformed(F, format!("fc{} weight shape {s:?}", i + 1))),
    };
    let (c0, c1) = conv(0)?;
    let (_, c2) = conv(1)?;
    let (_, c3) = conv(2)?;
    let (flat, h0) = dense(0)?;
    let (_, h1) = dense(1)?;
    let cells = if c3 == 0 { 0 } else { flat / c3 };
    let pooled = (cells as f64).sqrt().round() as usize;
    let arch = Architecture { input_side: pooled * 8, channels: [c0, c1, c2, c3], hidden: [h0, h1] };
    arch.validate().map_err(|e| malformed(F, e.to_string()))?;
    Ok(arch)
}

pub fn read_params<T: Real, R: Read>(mut r: R) -> Result<CnnParams<T>> {
    const F: &str = "CNN1";
    read_magic(&mut r, CNN_MAGIC, F)?;
    let count = u32::from_le_bytes(read_array(&mut r, F, "shape table")?) as usize;
    if count > 64 {
        return Err(malformed(F, format!("implausible tensor count {count}")));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = u32::from_le_bytes(read_array(&mut r, F, "shape table")?) as usize;
        if rank > 8 {
            return Err(malformed(F, format!("implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(read_array(&mut r, F, "shape table")?) as usize);
        }
        shapes.push(shape);
    }
    let arch = architecture_from_shapes(&shapes)?;
    let mut params = CnnParams::<T>::zeros(arch)?;
    if params.tensor_shapes() != shapes {
        return Err(malformed(F, "shape table is not a consistent network"));
    }
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != params.param_count() * 4 {
        return Err(malformed(F, format!("expected {} parameter bytes, found {}", params.param_count() * 4, body.len())));
    }
    let mut values = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")));
    for tensor in params.tensors_mut() {
        for (slot, v) in tensor.iter_mut().zip(&mut values) {
            *slot = T::from_f64_lossy(f64::from(v));
        }
    }
    Ok(params)
}
