//! Dihedral-group transforms of 2D maps and test-time averaging of
//! predictions over the orbit.
//!
//! Averaging happens in parameter space. The eight predictions are summed in
//! sorted order, so the average is bit-identical for every element of the
//! same orbit.

use ndarray::Array2;
use thiserror::Error;

use crate::Vec2;

#[derive(Debug, Error)]
pub enum D4Error {
    #[error("mask shape {mask:?} does not match data shape {data:?}")]
    MaskShape { data: (usize, usize), mask: (usize, usize) },
    #[error("map must have at least one row and one column")]
    EmptyMap,
    #[error("predictor rejected the {element:?} transform of shape {shape:?}: {message}")]
    PredictorShapeRejection { element: D4Element, shape: (usize, usize), message: String },
}

/// A 2D field with an optional validity mask (`true` = valid pixel).
#[derive(Debug, Clone, PartialEq)]
pub struct Map2D {
    pub data: Array2<f64>,
    pub mask: Option<Array2<bool>>,
}

impl Map2D {
    pub fn new(data: Array2<f64>, mask: Option<Array2<bool>>) -> Result<Self, D4Error> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(D4Error::EmptyMap);
        }
        if let Some(m) = &mask {
            if m.dim() != data.dim() {
                return Err(D4Error::MaskShape { data: data.dim(), mask: m.dim() });
            }
        }
        Ok(Self { data, mask })
    }

    pub fn unmasked(data: Array2<f64>) -> Self {
        Self { data, mask: None }
    }

    /// `(rows, cols)`.
    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn valid_count(&self) -> usize {
        match &self.mask {
            Some(m) => m.iter().filter(|v| **v).count(),
            None => self.data.len(),
        }
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[(i, j)])
    }
}

/// The eight symmetries of the square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum D4Element {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
    Transpose,
    AntiTranspose,
}

impl D4Element {
    pub const ALL: [D4Element; 8] = [
        D4Element::Identity,
        D4Element::Rot90,
        D4Element::Rot180,
        D4Element::Rot270,
        D4Element::FlipH,
        D4Element::FlipV,
        D4Element::Transpose,
        D4Element::AntiTranspose,
    ];

    /// The subgroup that keeps rectangular shapes unchanged.
    pub const RECTANGLE: [D4Element; 4] =
        [D4Element::Identity, D4Element::Rot180, D4Element::FlipH, D4Element::FlipV];

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Rot90 => "rot90",
            Self::Rot180 => "rot180",
            Self::Rot270 => "rot270",
            Self::FlipH => "flip_h",
            Self::FlipV => "flip_v",
            Self::Transpose => "transpose",
            Self::AntiTranspose => "anti_transpose",
        }
    }

    /// Whether the element swaps rows and columns.
    pub fn swaps_axes(self) -> bool {
        matches!(self, Self::Rot90 | Self::Rot270 | Self::Transpose | Self::AntiTranspose)
    }

    /// Source pixel of output pixel `(i, j)` for an input of shape `(h, w)`.
    fn source(self, i: usize, j: usize, h: usize, w: usize) -> (usize, usize) {
        match self {
            Self::Identity => (i, j),
            Self::Rot90 => (j, w - 1 - i),
            Self::Rot180 => (h - 1 - i, w - 1 - j),
            Self::Rot270 => (h - 1 - j, i),
            Self::FlipH => (i, w - 1 - j),
            Self::FlipV => (h - 1 - i, j),
            Self::Transpose => (j, i),
            Self::AntiTranspose => (h - 1 - j, w - 1 - i),
        }
    }

    fn apply_array<T: Clone>(self, a: &Array2<T>) -> Array2<T> {
        let (h, w) = a.dim();
        let out_shape = if self.swaps_axes() { (w, h) } else { (h, w) };
        Array2::from_shape_fn(out_shape, |(i, j)| a[self.source(i, j, h, w)].clone())
    }

    pub fn apply(self, map: &Map2D) -> Map2D {
        Map2D { data: self.apply_array(&map.data), mask: map.mask.as_ref().map(|m| self.apply_array(m)) }
    }
}

/// Which symmetry group to average over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Symmetry {
    /// All eight elements; four of them transpose non-square maps.
    #[default]
    Full,
    /// The order-4 subgroup that preserves the map shape.
    RectanglePreserving,
}

impl Symmetry {
    pub fn elements(self) -> &'static [D4Element] {
        match self {
            Self::Full => &D4Element::ALL,
            Self::RectanglePreserving => &D4Element::RECTANGLE,
        }
    }
}

/// The eight images of `map` in [`D4Element::ALL`] order.
pub fn d4_orbit(map: &Map2D) -> Vec<Map2D> {
    orbit(map, Symmetry::Full)
}

pub fn orbit(map: &Map2D, symmetry: Symmetry) -> Vec<Map2D> {
    symmetry.elements().iter().map(|e| e.apply(map)).collect()
}

/// Mean of `predict` over the orbit of `map`.
pub fn tta_average<F, E>(predict: F, map: &Map2D) -> Result<Vec2, D4Error>
where
    F: Fn(&Map2D) -> Result<Vec2, E>,
    E: std::fmt::Display,
{
    tta_average_with(predict, map, Symmetry::Full)
}

pub fn tta_average_with<F, E>(predict: F, map: &Map2D, symmetry: Symmetry) -> Result<Vec2, D4Error>
where
    F: Fn(&Map2D) -> Result<Vec2, E>,
    E: std::fmt::Display,
{
    let mut preds = symmetry
        .elements()
        .iter()
        .map(|&element| {
            let image = element.apply(map);
            predict(&image).map_err(|e| D4Error::PredictorShapeRejection {
                element,
                shape: image.shape(),
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<Vec2>, _>>()?;
    preds.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let n = preds.len() as f64;
    let xs: Vec<f64> = preds.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = preds.iter().map(|p| p.y).collect();
    Ok(Vec2::new(tree_sum(&xs) / n, tree_sum(&ys) / n))
}

// Balanced summation: 2^k equal values sum exactly.
fn tree_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => tree_sum(&v[..n / 2]) + tree_sum(&v[n / 2..]),
    }
}
