//! Portable FloatMap output, the float-exact record of a render, plus a
//! tone-mapped PNG companion for eyeballing.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::integrator::Film;
use crate::math::Rgb;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PfmError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("payload ends early: expected {expected} floats, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("png encode: {0}")]
    Png(#[from] image::ImageError),
}

/// Color PFM: `PF`, dimensions, negative scale for little-endian, then
/// rows bottom to top, pixels left to right, three f32 each.
pub fn write_pfm<W: Write>(mut w: W, width: u32, height: u32, data: &[Rgb]) -> io::Result<()> {
    assert_eq!(data.len(), (width * height) as usize);
    write!(w, "PF\n{} {}\n-1.0\n", width, height)?;
    for y in (0..height).rev() {
        for x in 0..width {
            let c = data[(y * width + x) as usize];
            for v in [c.x, c.y, c.z] {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn save_pfm(path: &Path, film: &Film) -> Result<(), PfmError> {
    let out = BufWriter::new(File::create(path)?);
    write_pfm(out, film.width(), film.height(), &film.means())?;
    Ok(())
}

/// Reads both little- and big-endian color PFMs. Returns row-major data,
/// top row first.
pub fn read_pfm<R: Read>(r: R) -> Result<(u32, u32, Vec<Rgb>), PfmError> {
    let mut r = BufReader::new(r);

    fn token<R: Read>(r: &mut R) -> Result<String, PfmError> {
        let mut s = String::new();
        let mut b = [0u8; 1];
        loop {
            if r.read(&mut b)? == 0 {
                if s.is_empty() {
                    return Err(PfmError::Header("unexpected end of header".into()));
                }
                return Ok(s);
            }
            if b[0].is_ascii_whitespace() {
                if s.is_empty() {
                    continue;
                }
                return Ok(s);
            }
            s.push(b[0] as char);
        }
    }

    let magic = token(&mut r)?;
    if magic != "PF" {
        return Err(PfmError::Header(format!("bad magic `{magic}`")));
    }
    let parse = |t: &str, what: &str| {
        t.parse::<u32>().map_err(|_| PfmError::Header(format!("bad {what} `{t}`")))
    };
    let width = parse(&token(&mut r)?, "width")?;
    let height = parse(&token(&mut r)?, "height")?;
    let scale_tok = token(&mut r)?;
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| PfmError::Header(format!("bad scale `{scale_tok}`")))?;
    let little = scale < 0.0;

    let count = (width * height * 3) as usize;
    let mut bytes = vec![0u8; count * 4];
    let mut got = 0;
    while got < bytes.len() {
        let n = r.read(&mut bytes[got..])?;
        if n == 0 {
            return Err(PfmError::Truncated { expected: count, got: got / 4 });
        }
        got += n;
    }

    let float = |i: usize| {
        let raw: [u8; 4] = bytes[4 * i..4 * i + 4].try_into().unwrap();
        if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        }
    };
    let mut data = vec![Rgb::zeros(); (width * height) as usize];
    for row in 0..height {
        let y = height - 1 - row;
        for x in 0..width {
            let i = ((row * width + x) * 3) as usize;
            data[(y * width + x) as usize] =
                Rgb::new(float(i) as f64, float(i + 1) as f64, float(i + 2) as f64);
        }
    }
    Ok((width, height, data))
}

pub fn load_pfm(path: &Path) -> Result<(u32, u32, Vec<Rgb>), PfmError> {
    read_pfm(File::open(path)?)
}

/// Gamma 1/2.2 after clamping to [0,1]; ties round to even.
pub fn tonemap_channel(v: f64) -> u8 {
    let c = v.clamp(0.0, 1.0).powf(1.0 / 2.2) * 255.0;
    c.round_ties_even() as u8
}

pub fn save_png(path: &Path, film: &Film) -> Result<(), PfmError> {
    let (w, h) = (film.width(), film.height());
    let mut buf = image::RgbImage::new(w, h);
    let means = film.means();
    for (i, px) in buf.pixels_mut().enumerate() {
        let c = means[i];
        *px = image::Rgb([tonemap_channel(c.x), tonemap_channel(c.y), tonemap_channel(c.z)]);
    }
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_payload_layout_is_exact() {
        let mut out = Vec::new();
        write_pfm(&mut out, 1, 1, &[Rgb::new(1.0, 1.0, 1.0)]).unwrap();
        let header = b"PF\n1 1\n-1.0\n";
        assert_eq!(&out[..header.len()], header);
        assert_eq!(out.len(), header.len() + 12);
        for ch in 0..3 {
            let i = header.len() + 4 * ch;
            assert_eq!(&out[i..i + 4], &1.0f32.to_le_bytes());
        }
    }

    #[test]
    fn rows_are_written_bottom_to_top() {
        // 1x2 image: top pixel red, bottom pixel green. The payload must
        // start with the bottom row.
        let data = [Rgb::new(1.0, 0.0, 0.0), Rgb::new(0.0, 1.0, 0.0)];
        let mut out = Vec::new();
        write_pfm(&mut out, 1, 2, &data).unwrap();
        let body = &out[b"PF\n1 2\n-1.0\n".len()..];
        assert_eq!(&body[0..4], &0.0f32.to_le_bytes());
        assert_eq!(&body[4..8], &1.0f32.to_le_bytes());
        assert_eq!(&body[12..16], &1.0f32.to_le_bytes());
    }

    #[test]
    fn round_trip_preserves_f32_values() {
        let data: Vec<Rgb> = (0..12)
            .map(|i| {
                let v = (i as f64 + 0.125) * 0.37;
                Rgb::new(v, v * 0.5, v * 0.25)
            })
            .collect();
        let mut out = Vec::new();
        write_pfm(&mut out, 4, 3, &data).unwrap();
        let (w, h, back) = read_pfm(&out[..]).unwrap();
        assert_eq!((w, h), (4, 3));
        for (a, b) in data.iter().zip(&back) {
            assert_eq!(a.x as f32, b.x as f32);
            assert_eq!(a.y as f32, b.y as f32);
            assert_eq!(a.z as f32, b.z as f32);
        }
    }

    #[test]
    fn big_endian_scale_is_honored_on_read() {
        let mut buf = b"PF\n1 1\n1.0\n".to_vec();
        for v in [0.25f32, 0.5, 0.75] {
            buf.extend_from_slice(&v.to_be_bytes());
        }
        let (_, _, data) = read_pfm(&buf[..]).unwrap();
        assert_eq!(data[0], Rgb::new(0.25, 0.5, 0.75));
    }

    #[test]
    fn truncated_payload_is_reported() {
        let mut out = Vec::new();
        write_pfm(&mut out, 2, 2, &vec![Rgb::new(0.5, 0.5, 0.5); 4]).unwrap();
        out.truncate(out.len() - 5);
        match read_pfm(&out[..]) {
            Err(PfmError::Truncated { expected: 12, .. }) => {}
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn tonemap_is_gamma_with_even_ties() {
        assert_eq!(tonemap_channel(0.0), 0);
        assert_eq!(tonemap_channel(1.0), 255);
        assert_eq!(tonemap_channel(2.0), 255);
        assert_eq!(tonemap_channel(-1.0), 0);
        // 0.5^(1/2.2)*255 = 186.08...
        assert_eq!(tonemap_channel(0.5), 186);
        // A genuine tie: find v with v^(1/2.2)*255 == k + 0.5 exactly in
        // f64 arithmetic is brittle; instead check the policy directly.
        assert_eq!(186.5f64.round_ties_even(), 186.0);
        assert_eq!(187.5f64.round_ties_even(), 188.0);
    }
}
