//! Binary masks and depth maps.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::types::{Box2D, Point2D};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("image decode error on {path}: {message}")]
    Decode { path: String, message: String },
    #[error("depth map {path} holds {got} bytes, expected {expected}")]
    DepthSize {
        path: String,
        got: usize,
        expected: usize,
    },
}

/// Binary mask; a pixel is inside when nonzero in the source image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; (width as usize) * (height as usize)],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// Pixels whose centers lie inside the box.
    pub fn from_box(width: u32, height: u32, b: &Box2D) -> Self {
        Self::from_fn(width, height, |x, y| {
            let (px, py) = (x as f64, y as f64);
            px >= b.x1 && px < b.x2 && py >= b.y1 && py < b.y2
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.data[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        if x < self.width && y < self.height {
            self.data[(y * self.width + x) as usize] = v;
        }
    }

    /// Inside test at the rounded pixel; out-of-image points are outside.
    pub fn contains<T: Scalar>(&self, p: &Point2D<T>) -> bool {
        let r = p.rounded();
        if !r.is_finite() || r.x < T::zero() || r.y < T::zero() {
            return false;
        }
        match (r.x.to_u32(), r.y.to_u32()) {
            (Some(x), Some(y)) => self.get(x, y),
            _ => false,
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Inside pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| **v)
            .map(move |(i, _)| ((i as u32) % self.width, (i as u32) / self.width))
    }

    /// Euclidean distance from `p` to the nearest inside pixel, `None` if empty.
    pub fn distance_to<T: Scalar>(&self, p: &Point2D<T>) -> Option<T> {
        self.pixels()
            .map(|(x, y)| {
                let q = Point2D::new(T::from_u32(x).unwrap(), T::from_u32(y).unwrap());
                p.distance(&q)
            })
            .min_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
    }

    /// Tight pixel bounding box of the inside region.
    pub fn bbox(&self) -> Option<Box2D> {
        let mut it = self.pixels();
        let (x0, y0) = it.next()?;
        let (mut x1, mut y1, mut x2, mut y2) = (x0, y0, x0, y0);
        for (x, y) in it {
            x1 = x1.min(x);
            y1 = y1.min(y);
            x2 = x2.max(x);
            y2 = y2.max(y);
        }
        Box2D::new(x1 as f64, y1 as f64, x2 as f64 + 1.0, y2 as f64 + 1.0)
    }

    pub fn intersect(&self, other: &Mask) -> Mask {
        Mask::from_fn(self.width, self.height, |x, y| self.get(x, y) && other.get(x, y))
    }

    pub fn load_png(path: &Path) -> Result<Self, RasterError> {
        let img = image::open(path).map_err(|e| RasterError::Decode {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let luma = img.to_luma8();
        let (w, h) = luma.dimensions();
        Ok(Self {
            width: w,
            height: h,
            data: luma.pixels().map(|p| p.0[0] != 0).collect(),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        let buf = image::GrayImage::from_fn(self.width, self.height, |x, y| {
            image::Luma([if self.get(x, y) { 255 } else { 0 }])
        });
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| RasterError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| RasterError::Decode {
                path: path.display().to_string(),
                message: e.to_string(),
            })
    }
}

/// Row-major depth map in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Option<Self> {
        (data.len() == (width as usize) * (height as usize)).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> f32) -> Self {
        let mut data = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> Option<f32> {
        (x < self.width && y < self.height).then(|| self.data[(y * self.width + x) as usize])
    }

    /// Nearest-pixel lookup; `None` outside the map.
    pub fn sample<T: Scalar>(&self, p: &Point2D<T>) -> Option<f32> {
        let r = p.rounded();
        if !r.is_finite() || r.x < T::zero() || r.y < T::zero() {
            return None;
        }
        self.get(r.x.to_u32()?, r.y.to_u32()?)
    }

    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|d| d * factor).collect(),
        }
    }

    pub fn load(path: &Path, width: u32, height: u32) -> Result<Self, RasterError> {
        let bytes = fs::read(path).map_err(|source| RasterError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let expected = (width as usize) * (height as usize) * 4;
        if bytes.len() != expected {
            return Err(RasterError::DepthSize {
                path: path.display().to_string(),
                got: bytes.len(),
                expected,
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), RasterError> {
        let bytes: Vec<u8> = self.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| RasterError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
        fs::write(path, bytes).map_err(|source| RasterError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
