use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A named, contiguous slice of the flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat view over every trainable parameter of a network.
///
/// Segments are stored in order and tile `flat` exactly, so two sets built for
/// the same network share a layout and can be combined coordinate by
/// coordinate (current weights, the previous-task snapshot, the running
/// average, optimizer moments and gradients all use this type).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    segments: Vec<Segment>,
    flat: Vec<T>,
}

impl<T: Scalar> ParameterSet<T> {
    /// Builds a set from `(name, shape)` pairs, assigning consecutive offsets.
    pub fn zeros<S: Into<String>>(layout: impl IntoIterator<Item = (S, Vec<usize>)>) -> Self {
        let mut segments = Vec::new();
        let mut offset = 0;
        for (name, shape) in layout {
            let seg = Segment {
                name: name.into(),
                shape,
                offset,
            };
            offset += seg.len();
            segments.push(seg);
        }
        Self {
            segments,
            flat: vec![T::zero(); offset],
        }
    }

    pub fn from_parts(segments: Vec<Segment>, flat: Vec<T>) -> Result<Self> {
        let mut expected = 0;
        for seg in &segments {
            if seg.offset != expected {
                return Err(Error::Shape(format!(
                    "segment {} starts at {}, expected {expected}",
                    seg.name, seg.offset
                )));
            }
            expected += seg.len();
        }
        if expected != flat.len() {
            return Err(Error::Shape(format!(
                "segments cover {expected} values but buffer has {}",
                flat.len()
            )));
        }
        Ok(Self { segments, flat })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            segments: self.segments.clone(),
            flat: vec![T::zero(); self.flat.len()],
        }
    }

    /// Same layout, new values.
    pub fn with_values(&self, flat: Vec<T>) -> Result<Self> {
        if flat.len() != self.flat.len() {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                self.flat.len(),
                flat.len()
            )));
        }
        Ok(Self {
            segments: self.segments.clone(),
            flat,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn segment_values(&self, seg: &Segment) -> &[T] {
        &self.flat[seg.range()]
    }

    pub fn segment_values_mut(&mut self, idx: usize) -> &mut [T] {
        let r = self.segments[idx].range();
        &mut self.flat[r]
    }

    /// Index of the segment owning flat coordinate `i`.
    pub fn segment_of(&self, i: usize) -> Option<usize> {
        self.segments.iter().position(|s| s.range().contains(&i))
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.flat
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.flat
    }

    pub fn into_values(self) -> Vec<T> {
        self.flat
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.segments == other.segments
    }

    pub fn check_layout(&self, other: &Self) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "parameter layouts differ ({} vs {} values)",
                self.flat.len(),
                other.flat.len()
            )))
        }
    }

    pub fn max_abs(&self) -> T {
        self.flat.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// Converts every value to another scalar type, keeping the layout.
    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        ParameterSet {
            segments: self.segments.clone(),
            flat: self
                .flat
                .iter()
                .map(|x| U::from_f64(x.to_f64_lossy()).unwrap_or_else(U::nan))
                .collect(),
        }
    }
}
