//! Dense row-major 2D grids used for image intensities, depths and masks.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

/// Row-major 2D array with `f64`-indexed bilinear sampling for scalar grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid data length mismatch");
        Self { width, height, data }
    }
}

impl<T> Grid<T> {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn iter_coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        (0..self.data.len()).map(move |i| (i % w, i / w))
    }
}

impl Grid<f64> {
    /// Bilinear sample at fractional pixel coordinates.
    ///
    /// Returns `None` when the 2x2 support cell is not fully inside the grid.
    pub fn bilinear(&self, x: f64, y: f64) -> Option<f64> {
        self.bilinear_with_weights(x, y).map(|(v, _)| v)
    }

    /// Bilinear sample plus the sum of squared interpolation weights,
    /// used to propagate per-pixel noise through the interpolation.
    pub fn bilinear_with_weights(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
            return None;
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let (ix, iy) = (x0 as usize, y0 as usize);
        if ix + 1 >= self.width || iy + 1 >= self.height {
            return None;
        }
        let fx = x - x0;
        let fy = y - y0;
        let c00 = *self.get(ix, iy);
        let c10 = *self.get(ix + 1, iy);
        let c01 = *self.get(ix, iy + 1);
        let c11 = *self.get(ix + 1, iy + 1);
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w10 = fx * (1.0 - fy);
        let w01 = (1.0 - fx) * fy;
        let w11 = fx * fy;
        let v = c00 * w00 + c10 * w10 + c01 * w01 + c11 * w11;
        let w2 = w00 * w00 + w10 * w10 + w01 * w01 + w11 * w11;
        Some((v, w2))
    }

    /// Exact spatial gradient of the bilinear interpolant at `(x, y)`,
    /// in intensity units per pixel.
    pub fn bilinear_gradient(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
            return None;
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let (ix, iy) = (x0 as usize, y0 as usize);
        if ix + 1 >= self.width || iy + 1 >= self.height {
            return None;
        }
        let fx = x - x0;
        let fy = y - y0;
        let c00 = *self.get(ix, iy);
        let c10 = *self.get(ix + 1, iy);
        let c01 = *self.get(ix, iy + 1);
        let c11 = *self.get(ix + 1, iy + 1);
        let gx = (c10 - c00) * (1.0 - fy) + (c11 - c01) * fy;
        let gy = (c01 - c00) * (1.0 - fx) + (c11 - c10) * fx;
        Some((gx, gy))
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Write as binary portable graymap (P5), clamping to [0, 255].
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "P5\n{} {}\n255", self.width, self.height)?;
        let bytes: Vec<u8> = self.data.iter().map(|&v| v.clamp(0.0, 255.0).round() as u8).collect();
        w.write_all(&bytes)
    }

    /// Read a portable graymap in either ASCII (P2) or binary (P5) form.
    pub fn read_pgm<R: Read>(r: R) -> io::Result<Self> {
        let mut reader = BufReader::new(r);
        let mut header = Vec::new();
        // Header: magic, width, height, maxval; comments start with '#'.
        let mut tokens: Vec<String> = Vec::new();
        while tokens.len() < 4 {
            let mut line = String::new();
            if reader.read_line(&mut line)? == 0 {
                return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated pgm header"));
            }
            let text = line.split('#').next().unwrap_or("");
            tokens.extend(text.split_whitespace().map(str::to_owned));
            header.extend_from_slice(line.as_bytes());
        }
        let magic = tokens[0].clone();
        let width: usize = tokens[1].parse().map_err(bad_header)?;
        let height: usize = tokens[2].parse().map_err(bad_header)?;
        let maxval: f64 = tokens[3].parse().map_err(bad_header)?;
        if maxval <= 0.0 {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "pgm maxval must be positive"));
        }
        let n = width * height;
        let data = match magic.as_str() {
            "P2" => {
                let mut text = String::new();
                reader.read_to_string(&mut text)?;
                let vals: Vec<f64> = text
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(bad_header))
                    .collect::<Result<_, _>>()?;
                if vals.len() != n {
                    return Err(io::Error::new(io::ErrorKind::InvalidData, "pgm pixel count mismatch"));
                }
                vals
            }
            "P5" => {
                let mut bytes = vec![0u8; n];
                reader.read_exact(&mut bytes)?;
                bytes.into_iter().map(f64::from).collect()
            }
            _ => return Err(io::Error::new(io::ErrorKind::InvalidData, "expected P2 or P5 graymap")),
        };
        let scale = 255.0 / maxval;
        let data = data.into_iter().map(|v| v * scale).collect();
        Ok(Self { width, height, data })
    }

    /// Write as whitespace-separated ASCII reals, one row per line.
    pub fn write_ascii<W: Write>(&self, mut w: W) -> io::Result<()> {
        for y in 0..self.height {
            let row: Vec<String> =
                (0..self.width).map(|x| format!("{}", self.get(x, y))).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    /// Read an ASCII grid with the given dimensions.
    pub fn read_ascii<R: Read>(r: R, width: usize, height: usize) -> io::Result<Self> {
        let mut text = String::new();
        BufReader::new(r).read_to_string(&mut text)?;
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(bad_header))
            .collect::<Result<_, _>>()?;
        if vals.len() != width * height {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "ascii grid size mismatch"));
        }
        Ok(Self { width, height, data: vals })
    }

    pub fn write_pgm_file(&self, path: &Path) -> io::Result<()> {
        self.write_pgm(std::fs::File::create(path)?)
    }

    pub fn read_pgm_file(path: &Path) -> io::Result<Self> {
        Self::read_pgm(std::fs::File::open(path)?)
    }
}

fn bad_header<E: std::fmt::Display>(e: E) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e.to_string())
}

impl Grid<bool> {
    /// Write as portable bitmap (P1); `true` pixels are written as 1.
    pub fn write_pbm<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "P1\n{} {}", self.width, self.height)?;
        for y in 0..self.height {
            let row: Vec<&str> =
                (0..self.width).map(|x| if *self.get(x, y) { "1" } else { "0" }).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_matches_corners_and_center() {
        let g = Grid::from_vec(2, 2, vec![0.0, 10.0, 20.0, 30.0]);
        assert_eq!(g.bilinear(0.0, 0.0), Some(0.0));
        assert_eq!(g.bilinear(0.5, 0.5), Some(15.0));
        assert!(g.bilinear(1.5, 0.5).is_none());
    }

    #[test]
    fn bilinear_gradient_is_exact_within_cell() {
        let g = Grid::from_vec(2, 2, vec![1.0, 3.0, 2.0, 7.0]);
        let (gx, gy) = g.bilinear_gradient(0.25, 0.5).unwrap();
        // d/dx at fy=0.5: (3-1)*0.5 + (7-2)*0.5 = 3.5
        assert!((gx - 3.5).abs() < 1e-12);
        // d/dy at fx=0.25: (2-1)*0.75 + (7-3)*0.25 = 1.75
        assert!((gy - 1.75).abs() < 1e-12);
    }

    #[test]
    fn pgm_roundtrip_binary() {
        let g = Grid::from_vec(3, 2, vec![0.0, 50.0, 100.0, 150.0, 200.0, 255.0]);
        let mut buf = Vec::new();
        g.write_pgm(&mut buf).unwrap();
        let back = Grid::read_pgm(&buf[..]).unwrap();
        assert_eq!(back.width(), 3);
        assert_eq!(back.height(), 2);
        for (a, b) in g.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 0.5);
        }
    }

    #[test]
    fn ascii_roundtrip() {
        let g = Grid::from_vec(2, 2, vec![0.5, 1.25, -3.0, 4.0]);
        let mut buf = Vec::new();
        g.write_ascii(&mut buf).unwrap();
        let back = Grid::read_ascii(&buf[..], 2, 2).unwrap();
        assert_eq!(g, back);
    }
}
