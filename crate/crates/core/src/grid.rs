//! Row-major pixel grids: binary masks, probability maps and gradient maps.

use crate::error::{Error, Result};

/// Values of a [`ProbMap`] may exceed `[0, 1]` by at most this much.
pub const PROB_TOLERANCE: f64 = 1e-9;

fn check_shape(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 || height.checked_mul(width) != Some(len) {
        return Err(Error::InvalidShape { height, width, len });
    }
    Ok(())
}

/// A 2D grid of `{0, 1}` pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        check_shape(height, width, pixels.len())?;
        if let Some((index, &value)) = pixels.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::InvalidPixel { index, value });
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// All-background mask. Panics on a zero dimension.
    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "mask dimensions must be positive");
        Self {
            height,
            width,
            pixels: vec![0; height * width],
        }
    }

    /// Builds a mask from rows of `'#'` (foreground) and any other character.
    pub fn from_ascii(rows: &[&str]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let pixels: Vec<u8> = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| u8::from(c == '#')))
            .collect();
        Self::new(height, width, pixels)
    }

    /// Builds a mask from foreground coordinates `(row, col)`.
    pub fn from_points(height: usize, width: usize, points: &[(usize, usize)]) -> Self {
        let mut m = Self::zeros(height, width);
        for &(r, c) in points {
            m.set(r, c, true);
        }
        m
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.iter().all(|&v| v == 0)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.pixels[row * self.width + col] != 0
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.pixels[row * self.width + col] = u8::from(on);
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&v| v != 0).count()
    }

    pub fn to_probmap(&self) -> ProbMap {
        ProbMap {
            height: self.height,
            width: self.width,
            values: self.pixels.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    /// Copy with `pad` background rows/columns added on every side.
    pub fn padded(&self, top: usize, bottom: usize, left: usize, right: usize) -> Self {
        let mut out = Self::zeros(self.height + top + bottom, self.width + left + right);
        for r in 0..self.height {
            for c in 0..self.width {
                out.set(r + top, c + left, self.get(r, c));
            }
        }
        out
    }

    /// Rotation by 90 degrees clockwise.
    pub fn rotate90(&self) -> Self {
        let mut out = Self::zeros(self.width, self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                out.set(c, self.height - 1 - r, self.get(r, c));
            }
        }
        out
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = Self::zeros(self.height, self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                out.set(r, self.width - 1 - c, self.get(r, c));
            }
        }
        out
    }

    pub fn flip_vertical(&self) -> Self {
        let mut out = Self::zeros(self.height, self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                out.set(self.height - 1 - r, c, self.get(r, c));
            }
        }
        out
    }

    /// Copies `other` into this mask with its top-left corner at `(row, col)`.
    pub fn blit(&mut self, other: &BinaryMask, row: usize, col: usize) {
        for r in 0..other.height {
            for c in 0..other.width {
                if other.get(r, c) {
                    self.set(row + r, col + c, true);
                }
            }
        }
    }

    pub(crate) fn ensure_same_shape(&self, other: (usize, usize)) -> Result<()> {
        if self.shape() != other {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                found: other,
            });
        }
        Ok(())
    }
}

/// A 2D grid of probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ProbMap {
    /// Validates shape and range; values within [`PROB_TOLERANCE`] of the unit
    /// interval are accepted unchanged.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(height, width, values.len())?;
        for (index, &value) in values.iter().enumerate() {
            if !(-PROB_TOLERANCE..=1.0 + PROB_TOLERANCE).contains(&value) {
                return Err(Error::ValueOutOfRange { index, value });
            }
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height.saturating_mul(width)])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Copy with one value replaced; the caller keeps it inside `[0, 1]`.
    /// Used by finite-difference checks, which step slightly past the range.
    pub fn with_value(&self, index: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.values[index] = value;
        out
    }

    /// Pixels with value `>= threshold` become foreground.
    pub fn threshold(&self, threshold: f64) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            pixels: self
                .values
                .iter()
                .map(|&v| u8::from(v >= threshold))
                .collect(),
        }
    }
}

/// Gradient of a scalar loss with respect to every pixel of a [`ProbMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl GradMap {
    pub(crate) fn from_raw(height: usize, width: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(height * width, values.len());
        Self {
            height,
            width,
            values,
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_raw(height, width, vec![0.0; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= factor);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_pixels() {
        assert!(matches!(
            BinaryMask::new(2, 2, vec![0; 3]),
            Err(Error::InvalidShape { .. })
        ));
        assert!(matches!(
            BinaryMask::new(0, 2, vec![]),
            Err(Error::InvalidShape { .. })
        ));
        assert_eq!(
            BinaryMask::new(1, 2, vec![0, 2]),
            Err(Error::InvalidPixel { index: 1, value: 2 })
        );
    }

    #[test]
    fn probmap_range_tolerance() {
        assert!(ProbMap::new(1, 2, vec![0.0, 1.0 + 5e-10]).is_ok());
        assert!(matches!(
            ProbMap::new(1, 2, vec![0.0, 1.0 + 1e-8]),
            Err(Error::ValueOutOfRange { index: 1, .. })
        ));
        assert!(ProbMap::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn rotate_and_flip_shapes() {
        let m = BinaryMask::from_ascii(&["##.", "..."]).unwrap();
        let r = m.rotate90();
        assert_eq!(r.shape(), (3, 2));
        assert!(r.get(0, 1) && r.get(1, 1));
        assert_eq!(m.flip_horizontal().flip_horizontal(), m);
        assert_eq!(r.rotate90().rotate90().rotate90(), m);
    }

    #[test]
    fn threshold_is_inclusive() {
        let p = ProbMap::new(1, 3, vec![0.49, 0.5, 0.9]).unwrap();
        assert_eq!(p.threshold(0.5).pixels(), &[0, 1, 1]);
    }
}
