//! Row-major image rasters addressed by `(p, q)` = (row, column).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RasterError {
    #[error("raster data has {got} cells, expected {width}×{height}")]
    Size { width: usize, height: usize, got: usize },
    #[error("raster dimensions differ: {0}×{1} vs {2}×{3}")]
    Mismatch(usize, usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Depths in mm; NaN marks an invalid pixel.
pub type DepthMap = Raster<f64>;
pub type Mask = Raster<bool>;
pub type CountMap = Raster<u32>;

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Raster {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self, RasterError> {
        if data.len() != width * height {
            return Err(RasterError::Size {
                width,
                height,
                got: data.len(),
            });
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for p in 0..height {
            for q in 0..width {
                data.push(f(p, q));
            }
        }
        Raster {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> Result<(), RasterError> {
        if self.width != other.width || self.height != other.height {
            return Err(RasterError::Mismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn contains(&self, p: usize, q: usize) -> bool {
        p < self.height && q < self.width
    }

    pub fn get(&self, p: usize, q: usize) -> Option<&T> {
        self.contains(p, q).then(|| &self.data[p * self.width + q])
    }

    /// Panics when `(p, q)` is outside the raster.
    pub fn at(&self, p: usize, q: usize) -> &T {
        assert!(self.contains(p, q), "pixel ({p}, {q}) outside {}×{}", self.width, self.height);
        &self.data[p * self.width + q]
    }

    pub fn at_mut(&mut self, p: usize, q: usize) -> &mut T {
        assert!(self.contains(p, q), "pixel ({p}, {q}) outside {}×{}", self.width, self.height);
        &mut self.data[p * self.width + q]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// `(p, q, value)` in row-major order.
    pub fn iter_pixels(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let w = self.width;
        self.data.iter().enumerate().map(move |(i, v)| (i / w, i % w, v))
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl Raster<f64> {
    pub fn invalid(width: usize, height: usize) -> Self {
        Raster::filled(width, height, f64::NAN)
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| !v.is_nan()).count()
    }

    /// Min and max over non-NaN cells.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.data
            .iter()
            .filter(|v| !v.is_nan())
            .fold(None, |acc, &v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }
}

impl Raster<bool> {
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_addressing() {
        let r = Raster::from_fn(3, 2, |p, q| p * 10 + q);
        assert_eq!(r.data(), &[0, 1, 2, 10, 11, 12]);
        assert_eq!(*r.at(1, 2), 12);
        assert_eq!(r.get(2, 0), None);
        let px: Vec<_> = r.iter_pixels().map(|(p, q, _)| (p, q)).collect();
        assert_eq!(px[4], (1, 1));
    }

    #[test]
    fn size_checks() {
        assert!(Raster::from_vec(2, 2, vec![0.0; 3]).is_err());
        let a = Raster::filled(2, 2, 0u32);
        let b = Raster::filled(2, 3, 0u32);
        assert!(a.same_shape(&b).is_err());
    }

    #[test]
    fn valid_statistics() {
        let r = Raster::from_vec(2, 2, vec![1.0, f64::NAN, -3.0, 2.0]).unwrap();
        assert_eq!(r.valid_count(), 3);
        assert_eq!(r.valid_range(), Some((-3.0, 2.0)));
        assert_eq!(DepthMap::invalid(2, 1).valid_range(), None);
    }
}
