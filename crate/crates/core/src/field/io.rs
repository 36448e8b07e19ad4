//! Binary and CSV export of field maps and per-element signals.
//!
//! Binary layout, all little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4 | magic `IBFD` |
//! | u32 | format version (1) |
//! | u32 | kind: 0 intensity map, 1 time series |
//! | 3 × u32 | sample counts nx, ny, nz |
//! | 6 × f32 | min x, y, z then max x, y, z (mm) |
//! | u32, f32, f32 | time series only: samples per point, sample rate (MHz), start time (µs) |
//! | f32 … | data, x fastest; time series store each point's samples contiguously |

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::engine::{FieldData, PressureField};
use crate::geometry::Point3;
use crate::grid::SampleGrid;
use crate::signal::{ExcitationSet, Waveform};

const MAGIC: &[u8; 4] = b"IBFD";
const VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidParameter(format!("i/o: {e}"))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

/// Common window covering every waveform, on the absolute sample grid.
fn common_window(waves: &[Waveform]) -> (i64, usize) {
    let lo = waves.iter().filter(|w| !w.is_empty()).map(|w| w.start_index()).min().unwrap_or(0);
    let hi = waves.iter().map(|w| w.start_index() + w.len() as i64).max().unwrap_or(lo).max(lo);
    (lo, (hi - lo) as usize)
}

fn padded(w: &Waveform, lo: i64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let off = (w.start_index() - lo).max(0) as usize;
    for (o, s) in out[off.min(n)..].iter_mut().zip(w.samples()) {
        *o = *s;
    }
    out
}

pub fn encode_field(field: &PressureField) -> Vec<u8> {
    let g = &field.grid;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, if field.is_intensity() { 0 } else { 1 });
    for c in g.counts {
        put_u32(&mut out, c as u32);
    }
    for v in [g.min.x, g.min.y, g.min.z, g.max.x, g.max.y, g.max.z] {
        put_f32(&mut out, v);
    }
    match &field.data {
        FieldData::Intensity(v) => v.iter().for_each(|x| put_f32(&mut out, *x)),
        FieldData::TimeSeries(ws) => {
            let (lo, n) = common_window(ws);
            let fs = ws.first().map_or(1.0, |w| w.sample_rate());
            put_u32(&mut out, n as u32);
            put_f32(&mut out, fs);
            put_f32(&mut out, lo as f64 / fs);
            for w in ws {
                padded(w, lo, n).iter().for_each(|x| put_f32(&mut out, *x));
            }
        }
    }
    out
}

pub fn write_field(field: &PressureField, mut w: impl Write) -> Result<()> {
    w.write_all(&encode_field(field)).map_err(io_err)
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.0.len() < n {
            return Err(Error::Shape("truncated field file".into()));
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64)
    }
}

pub fn decode_field(bytes: &[u8]) -> Result<PressureField> {
    let mut c = Cursor(bytes);
    if c.take(4)? != MAGIC {
        return Err(Error::Shape("not a field file".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Shape(format!("unsupported field file version {version}")));
    }
    let kind = c.u32()?;
    let counts = [c.u32()? as usize, c.u32()? as usize, c.u32()? as usize];
    let v: Vec<f64> = (0..6).map(|_| c.f32()).collect::<Result<_>>()?;
    let grid = SampleGrid::new(Point3::new(v[0], v[1], v[2]), Point3::new(v[3], v[4], v[5]), counts)?;
    let data = match kind {
        0 => FieldData::Intensity((0..grid.len()).map(|_| c.f32()).collect::<Result<_>>()?),
        1 => {
            let n = c.u32()? as usize;
            let fs = c.f32()?;
            let t0 = c.f32()?;
            let mut ws = Vec::with_capacity(grid.len());
            for _ in 0..grid.len() {
                let s = (0..n).map(|_| c.f32()).collect::<Result<Vec<_>>>()?;
                ws.push(Waveform::new(s, fs, t0)?);
            }
            FieldData::TimeSeries(ws)
        }
        k => return Err(Error::Shape(format!("unknown field kind {k}"))),
    };
    if !c.0.is_empty() {
        return Err(Error::Shape("trailing bytes in field file".into()));
    }
    PressureField::new(grid, data)
}

pub fn read_field(mut r: impl Read) -> Result<PressureField> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(io_err)?;
    decode_field(&buf)
}

/// CSV `x_mm,y_mm,z_mm,intensity_mw_cm2`, keeping every `stride`-th sample
/// along each axis. Time-series fields export their mean-square pressure.
pub fn write_field_csv(field: &PressureField, stride: usize, mut w: impl Write) -> Result<()> {
    let stride = stride.max(1);
    let g = &field.grid;
    let value = |i: usize| match &field.data {
        FieldData::Intensity(v) => v[i],
        FieldData::TimeSeries(ws) => {
            let s = ws[i].samples();
            if s.is_empty() {
                0.0
            } else {
                s.iter().map(|x| x * x).sum::<f64>() / s.len() as f64
            }
        }
    };
    let header = if field.is_intensity() { "intensity_mw_cm2" } else { "mean_square_pa2" };
    writeln!(w, "x_mm,y_mm,z_mm,{header}").map_err(io_err)?;
    for iz in (0..g.counts[2]).step_by(stride) {
        for iy in (0..g.counts[1]).step_by(stride) {
            for ix in (0..g.counts[0]).step_by(stride) {
                let p = g.point(ix, iy, iz);
                let i = g.index(ix, iy, iz);
                writeln!(w, "{:.4},{:.4},{:.4},{:.6e}", p.x, p.y, p.z, value(i)).map_err(io_err)?;
            }
        }
    }
    Ok(())
}

/// CSV with a time column and one column per element, over a common window.
pub fn write_signals_csv(set: &ExcitationSet, mut w: impl Write) -> Result<()> {
    let (lo, n) = common_window(set.waveforms());
    let fs = set.sample_rate().unwrap_or(1.0);
    let cols: Vec<Vec<f64>> = set.waveforms().iter().map(|x| padded(x, lo, n)).collect();
    let names: Vec<String> = (0..cols.len()).map(|i| format!("e{i}")).collect();
    writeln!(w, "time_us,{}", names.join(",")).map_err(io_err)?;
    for j in 0..n {
        let row: Vec<String> = cols.iter().map(|c| format!("{:.6e}", c[j])).collect();
        writeln!(w, "{:.5},{}", (lo + j as i64) as f64 / fs, row.join(",")).map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intensity_roundtrip() {
        let g = SampleGrid::new(Point3::new(-1.0, 0.0, 10.0), Point3::new(1.0, 0.0, 12.0), [3, 1, 2]).unwrap();
        let f = PressureField::new(g, FieldData::Intensity(vec![0.0, 1.0, 2.0, 3.0, 4.5, 5.25])).unwrap();
        let back = decode_field(&encode_field(&f)).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn time_series_roundtrip_pads_to_common_window() {
        let g = SampleGrid::new(Point3::new(0.0, 0.0, 1.0), Point3::new(1.0, 0.0, 1.0), [2, 1, 1]).unwrap();
        let a = Waveform::on_grid(vec![1.0, 2.0], 4.0, 1).unwrap();
        let b = Waveform::on_grid(vec![3.0], 4.0, 3).unwrap();
        let f = PressureField::new(g, FieldData::TimeSeries(vec![a, b])).unwrap();
        let back = decode_field(&encode_field(&f)).unwrap();
        match back.data {
            FieldData::TimeSeries(ws) => {
                assert_eq!(ws[0].samples(), &[1.0, 2.0, 0.0]);
                assert_eq!(ws[1].samples(), &[0.0, 0.0, 3.0]);
                assert_eq!(ws[1].start_index(), 1);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode_field(b"nope").is_err());
        let g = SampleGrid::new(Point3::new(0.0, 0.0, 1.0), Point3::new(0.0, 0.0, 1.0), [1, 1, 1]).unwrap();
        let mut bytes = encode_field(&PressureField::new(g, FieldData::Intensity(vec![1.0])).unwrap());
        bytes.pop();
        assert!(decode_field(&bytes).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let g = SampleGrid::new(Point3::new(0.0, 0.0, 1.0), Point3::new(1.0, 0.0, 1.0), [2, 1, 1]).unwrap();
        let f = PressureField::new(g, FieldData::Intensity(vec![1.0, 2.0])).unwrap();
        let mut out = Vec::new();
        write_field_csv(&f, 1, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(s.lines().count(), 3);
        assert!(s.starts_with("x_mm,y_mm,z_mm,intensity_mw_cm2"));
    }
}
