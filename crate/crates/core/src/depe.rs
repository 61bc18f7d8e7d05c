//! Bicubic resizing of learned 2D position-embedding grids.
//!
//! The operator is separable: an output cell is
//! `sum_{p,q} Wy[i,p] * Wx[j,q] * in[p,q]`, where each weight row has four
//! taps of the Keys cubic kernel with edge-clamped indices.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DepeError {
    #[error("grid must be at least 2x2, got {height}x{width}")]
    DegenerateGrid { height: usize, width: usize },
    #[error("grid must be square, got {height}x{width}")]
    NonSquareGrid { height: usize, width: usize },
    #[error("grid shape {height}x{width}x{dim} does not match {len} values")]
    ShapeMismatch {
        height: usize,
        width: usize,
        dim: usize,
        len: usize,
    },
    #[error("grid contains a non-finite value")]
    NonFinite,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {msg}")]
    Meta { path: PathBuf, msg: String },
}

/// `height x width` cells of `dim` channels, stored row-major with channels
/// innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingGrid<T = f64> {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub values: Vec<T>,
    /// Not part of the spatial grid; copied through unchanged.
    pub class_token: Option<Vec<T>>,
}

impl<T: Scalar> EmbeddingGrid<T> {
    pub fn new(
        height: usize,
        width: usize,
        dim: usize,
        values: Vec<T>,
        class_token: Option<Vec<T>>,
    ) -> Result<Self, DepeError> {
        let g = Self {
            height,
            width,
            dim,
            values,
            class_token,
        };
        g.check()?;
        Ok(g)
    }

    pub fn from_fn(height: usize, width: usize, dim: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(height * width * dim);
        for y in 0..height {
            for x in 0..width {
                for c in 0..dim {
                    values.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            dim,
            values,
            class_token: None,
        }
    }

    pub fn check(&self) -> Result<(), DepeError> {
        if self.height < 2 || self.width < 2 {
            return Err(DepeError::DegenerateGrid {
                height: self.height,
                width: self.width,
            });
        }
        if self.values.len() != self.height * self.width * self.dim
            || self.class_token.as_ref().is_some_and(|c| c.len() != self.dim)
        {
            return Err(DepeError::ShapeMismatch {
                height: self.height,
                width: self.width,
                dim: self.dim,
                len: self.values.len(),
            });
        }
        let cls = self.class_token.iter().flatten();
        if self.values.iter().chain(cls).any(|v| !v.is_finite()) {
            return Err(DepeError::NonFinite);
        }
        Ok(())
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.values[(y * self.width + x) * self.dim + c]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: T) {
        self.values[(y * self.width + x) * self.dim + c] = v;
    }

    pub fn channel_mean(&self, c: usize) -> T {
        let n = self.height * self.width;
        let sum: T = (0..n).map(|i| self.values[i * self.dim + c]).sum();
        sum / T::from_usize_lossy(n)
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingGrid<U> {
        let conv = |v: &T| U::lit(v.as_f64());
        EmbeddingGrid {
            height: self.height,
            width: self.width,
            dim: self.dim,
            values: self.values.iter().map(conv).collect(),
            class_token: self.class_token.as_ref().map(|c| c.iter().map(conv).collect()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResizeParams {
    /// Keys kernel parameter; -0.5 is Catmull-Rom.
    pub a: f64,
    /// Map the corner cell centers onto each other; otherwise half-pixel
    /// centers.
    pub align_corners: bool,
}

impl Default for ResizeParams {
    fn default() -> Self {
        Self {
            a: -0.5,
            align_corners: true,
        }
    }
}

/// Keys cubic convolution kernel.
pub fn keys_kernel<T: Scalar>(s: T, a: T) -> T {
    let s = s.abs();
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    if s <= T::one() {
        ((a + two) * s - (a + three)) * s * s + T::one()
    } else if s < two {
        ((s - T::lit(5.0)) * s + T::lit(8.0)) * s * a - T::lit(4.0) * a
    } else {
        T::zero()
    }
}

/// Source coordinate of output index `i` when resizing `n` cells to `m`.
pub fn source_coord<T: Scalar>(i: usize, n: usize, m: usize, align_corners: bool) -> T {
    if align_corners {
        if m == 1 {
            T::zero()
        } else {
            T::from_usize_lossy(i * (n - 1)) / T::from_usize_lossy(m - 1)
        }
    } else {
        (T::from_usize_lossy(i) + T::lit(0.5)) * T::from_usize_lossy(n) / T::from_usize_lossy(m) - T::lit(0.5)
    }
}

/// Whether every tap with nonzero weight at `src` is inside `0..n`, so
/// edge clamping has no effect.
pub fn is_interior<T: Scalar>(src: T, n: usize) -> bool {
    src >= T::one() && src <= T::from_usize_lossy(n) - T::lit(2.0)
}

/// The four (clamped index, weight) taps for every output index.
pub fn axis_taps<T: Scalar>(n: usize, m: usize, params: &ResizeParams) -> Vec<[(usize, T); 4]> {
    let a = T::lit(params.a);
    (0..m)
        .map(|i| {
            let src: T = source_coord(i, n, m, params.align_corners);
            let f = src.floor();
            let t = src - f;
            let base = f.to_i64().expect("finite coordinate");
            let clamp = |k: i64| k.clamp(0, n as i64 - 1) as usize;
            [
                (clamp(base - 1), keys_kernel(t + T::one(), a)),
                (clamp(base), keys_kernel(t, a)),
                (clamp(base + 1), keys_kernel(T::one() - t, a)),
                (clamp(base + 2), keys_kernel(T::lit(2.0) - t, a)),
            ]
        })
        .collect()
}

/// Dense `m x n` weight matrix for one axis.
pub fn axis_weights<T: Scalar>(n: usize, m: usize, params: &ResizeParams) -> Vec<Vec<T>> {
    axis_taps::<T>(n, m, params)
        .into_iter()
        .map(|taps| {
            let mut row = vec![T::zero(); n];
            for (k, w) in taps {
                row[k] = row[k] + w;
            }
            row
        })
        .collect()
}

/// Per-channel bicubic resize to `new_h x new_w`.
pub fn bicubic_resize<T: Scalar>(
    grid: &EmbeddingGrid<T>,
    new_h: usize,
    new_w: usize,
    params: &ResizeParams,
) -> Result<EmbeddingGrid<T>, DepeError> {
    grid.check()?;
    if new_h < 2 || new_w < 2 {
        return Err(DepeError::DegenerateGrid {
            height: new_h,
            width: new_w,
        });
    }
    if new_h == grid.height && new_w == grid.width {
        return Ok(grid.clone());
    }
    let (h, w, d) = (grid.height, grid.width, grid.dim);
    let tx = axis_taps::<T>(w, new_w, params);
    let ty = axis_taps::<T>(h, new_h, params);

    let mut tmp = vec![T::zero(); h * new_w * d];
    for y in 0..h {
        let src_row = &grid.values[y * w * d..(y + 1) * w * d];
        for (x, taps) in tx.iter().enumerate() {
            let dst = &mut tmp[(y * new_w + x) * d..(y * new_w + x + 1) * d];
            for &(k, wt) in taps {
                let src = &src_row[k * d..(k + 1) * d];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o = *o + wt * *s;
                }
            }
        }
    }

    let row = new_w * d;
    let mut out = vec![T::zero(); new_h * row];
    for (y, taps) in ty.iter().enumerate() {
        let dst = &mut out[y * row..(y + 1) * row];
        for &(k, wt) in taps {
            let src = &tmp[k * row..(k + 1) * row];
            for (o, s) in dst.iter_mut().zip(src) {
                *o = *o + wt * *s;
            }
        }
    }

    let out = EmbeddingGrid {
        height: new_h,
        width: new_w,
        dim: d,
        values: out,
        class_token: grid.class_token.clone(),
    };
    if out.values.iter().any(|v| !v.is_finite()) {
        return Err(DepeError::NonFinite);
    }
    Ok(out)
}

/// Doubles the side of a square grid.
pub fn expand_depe<T: Scalar>(grid: &EmbeddingGrid<T>, params: &ResizeParams) -> Result<EmbeddingGrid<T>, DepeError> {
    if grid.height != grid.width {
        return Err(DepeError::NonSquareGrid {
            height: grid.height,
            width: grid.width,
        });
    }
    bicubic_resize(grid, grid.height * 2, grid.width * 2, params)
}

/// Output response (`new_h x new_w`, row-major) to a unit change of input
/// cell `(y, x)` in any channel.
pub fn weight_field<T: Scalar>(
    height: usize,
    width: usize,
    new_h: usize,
    new_w: usize,
    cell: (usize, usize),
    params: &ResizeParams,
) -> Vec<T> {
    let wy = axis_weights::<T>(height, new_h, params);
    let wx = axis_weights::<T>(width, new_w, params);
    let mut out = Vec::with_capacity(new_h * new_w);
    for ry in &wy {
        for rx in &wx {
            out.push(ry[cell.0] * rx[cell.1]);
        }
    }
    out
}

/// Largest gap between central finite differences of the resize with
/// respect to input `(cell, channel)` and the analytic weight field.
pub fn finite_diff_check<T: Scalar>(
    grid: &EmbeddingGrid<T>,
    new_size: (usize, usize),
    channel: usize,
    cell: (usize, usize),
    eps: T,
    params: &ResizeParams,
) -> Result<T, DepeError> {
    let (new_h, new_w) = new_size;
    let base = grid.get(cell.0, cell.1, channel);
    let mut plus = grid.clone();
    plus.set(cell.0, cell.1, channel, base + eps);
    let mut minus = grid.clone();
    minus.set(cell.0, cell.1, channel, base - eps);
    let up = bicubic_resize(&plus, new_h, new_w, params)?;
    let down = bicubic_resize(&minus, new_h, new_w, params)?;
    let field = weight_field::<T>(grid.height, grid.width, new_h, new_w, cell, params);
    let two_eps = eps + eps;
    let mut worst = T::zero();
    for (i, w) in field.iter().enumerate() {
        let idx = i * grid.dim + channel;
        let numeric = (up.values[idx] - down.values[idx]) / two_eps;
        worst = worst.max((numeric - *w).abs());
    }
    Ok(worst)
}

/// JSON sidecar describing a flat little-endian f32 grid file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub layout: String,
    pub dtype: String,
    /// When set, the first `dim` floats of the file are the class token.
    #[serde(default)]
    pub class_token: bool,
}

pub const LAYOUT_HWC: &str = "hwc";
pub const DTYPE_F32LE: &str = "f32-le";

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DepeError + '_ {
    move |source| DepeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_grid(bin: &Path, meta: &Path) -> Result<EmbeddingGrid<f32>, DepeError> {
    let text = fs::read_to_string(meta).map_err(io_err(meta))?;
    let m: GridMeta = serde_json::from_str(&text).map_err(|e| DepeError::Meta {
        path: meta.to_path_buf(),
        msg: e.to_string(),
    })?;
    if m.layout != LAYOUT_HWC || m.dtype != DTYPE_F32LE {
        return Err(DepeError::Meta {
            path: meta.to_path_buf(),
            msg: format!("unsupported layout/dtype {}/{}", m.layout, m.dtype),
        });
    }
    let bytes = fs::read(bin).map_err(io_err(bin))?;
    if bytes.len() % 4 != 0 {
        return Err(DepeError::Meta {
            path: bin.to_path_buf(),
            msg: "file length is not a multiple of 4".into(),
        });
    }
    let mut floats: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let cls_len = if m.class_token { m.dim } else { 0 };
    if floats.len() != m.height * m.width * m.dim + cls_len {
        return Err(DepeError::ShapeMismatch {
            height: m.height,
            width: m.width,
            dim: m.dim,
            len: floats.len().saturating_sub(cls_len),
        });
    }
    let class_token = m.class_token.then(|| floats.drain(..m.dim).collect());
    EmbeddingGrid::new(m.height, m.width, m.dim, floats, class_token)
}

pub fn save_grid<T: Scalar>(grid: &EmbeddingGrid<T>, bin: &Path, meta: &Path) -> Result<(), DepeError> {
    let mut bytes = Vec::with_capacity((grid.values.len() + grid.dim) * 4);
    for v in grid.class_token.iter().flatten().chain(&grid.values) {
        bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    fs::write(bin, bytes).map_err(io_err(bin))?;
    let m = GridMeta {
        height: grid.height,
        width: grid.width,
        dim: grid.dim,
        layout: LAYOUT_HWC.into(),
        dtype: DTYPE_F32LE.into(),
        class_token: grid.class_token.is_some(),
    };
    let text = serde_json::to_string_pretty(&m).expect("meta serializes");
    fs::write(meta, text + "\n").map_err(io_err(meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        assert_eq!(keys_kernel(0.0, -0.5), 1.0);
        assert_eq!(keys_kernel(1.0, -0.5), 0.0);
        assert_eq!(keys_kernel(2.0, -0.5), 0.0);
        assert!((keys_kernel(0.5f64, -0.5) - 0.5625).abs() < 1e-15);
        assert!((keys_kernel(1.5f64, -0.5) + 0.0625).abs() < 1e-15);
    }

    #[test]
    fn constant_grid_stays_constant() {
        let g = EmbeddingGrid::from_fn(5, 7, 3, |_, _, _| 2.5f64);
        let r = bicubic_resize(&g, 11, 9, &ResizeParams::default()).unwrap();
        assert!(r.values.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn linear_field_is_reproduced() {
        let g = EmbeddingGrid::from_fn(8, 8, 1, |y, x, _| 2.0 * x as f64 + 3.0 * y as f64);
        let r = bicubic_resize(&g, 16, 16, &ResizeParams::default()).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let sx: f64 = source_coord(x, 8, 16, true);
                let sy: f64 = source_coord(y, 8, 16, true);
                if !is_interior(sx, 8) || !is_interior(sy, 8) {
                    continue;
                }
                assert!((r.get(y, x, 0) - (2.0 * sx + 3.0 * sy)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identity_size_is_bit_equal() {
        let g = EmbeddingGrid::from_fn(4, 4, 2, |y, x, c| (y * 31 + x * 7 + c) as f64 * 0.1);
        assert_eq!(bicubic_resize(&g, 4, 4, &ResizeParams::default()).unwrap(), g);
    }

    #[test]
    fn rejects_bad_shapes() {
        let g = EmbeddingGrid::from_fn(1, 4, 1, |_, _, _| 0.0f64);
        assert!(matches!(
            bicubic_resize(&g, 4, 4, &ResizeParams::default()),
            Err(DepeError::DegenerateGrid { .. })
        ));
        let g = EmbeddingGrid::from_fn(3, 4, 1, |_, _, _| 0.0f64);
        assert!(matches!(
            expand_depe(&g, &ResizeParams::default()),
            Err(DepeError::NonSquareGrid { .. })
        ));
    }

    #[test]
    fn weight_rows_sum_to_one() {
        for align in [true, false] {
            let p = ResizeParams { a: -0.5, align_corners: align };
            for row in axis_weights::<f64>(7, 13, &p) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut g = EmbeddingGrid::from_fn(3, 3, 2, |y, x, c| (y + x + c) as f32);
        g.class_token = Some(vec![9.0, 8.0]);
        let (bin, meta) = (dir.path().join("g.bin"), dir.path().join("g.json"));
        save_grid(&g, &bin, &meta).unwrap();
        assert_eq!(load_grid(&bin, &meta).unwrap(), g);
        assert_eq!(fs::metadata(&bin).unwrap().len(), (9 * 2 + 2) * 4);
    }
}
