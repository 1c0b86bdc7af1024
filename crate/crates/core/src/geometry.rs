//! Normalized bounding boxes and the 0..=999 grid used by the markup format.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest value a quantized coordinate may take.
pub const QUANT_MAX: u16 = 999;

/// Number of quantization bins per axis.
const QUANT_BINS: f64 = 1000.0;

// Absorbs representation error such as 0.29 * 1000 = 289.99999999999994.
const QUANT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("coordinate {0} is outside [0, 1]")]
    OutOfUnitRange(f64),
    #[error("coordinate {0} is not finite")]
    NotFinite(f64),
    #[error("quantized coordinate {0} is out of range (0..=999)")]
    QuantOutOfRange(i64),
    #[error("box corners are inverted: ({0}, {1}) > ({2}, {3})")]
    Inverted(String, String, String, String),
}

/// Axis-aligned rectangle in page-normalized coordinates.
///
/// `0 <= x1 <= x2 <= 1` and `0 <= y1 <= y2 <= 1` always hold. Zero-area boxes
/// are valid and score an IoU of zero against everything.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        for c in [x1, y1, x2, y2] {
            if !c.is_finite() {
                return Err(GeometryError::NotFinite(c));
            }
            if !(0.0..=1.0).contains(&c) {
                return Err(GeometryError::OutOfUnitRange(c));
            }
        }
        if x1 > x2 || y1 > y2 {
            return Err(GeometryError::Inverted(
                x1.to_string(),
                y1.to_string(),
                x2.to_string(),
                y2.to_string(),
            ));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Normalizes a half-open pixel rectangle by the canvas size.
    pub fn from_pixels(px1: u32, py1: u32, px2: u32, py2: u32, width: u32, height: u32) -> Result<Self, GeometryError> {
        let w = f64::from(width);
        let h = f64::from(height);
        Self::new(
            f64::from(px1) / w,
            f64::from(py1) / h,
            f64::from(px2) / w,
            f64::from(py2) / h,
        )
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Inclusive point containment.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }

    pub fn contains(&self, other: &BBox) -> bool {
        other.x1 >= self.x1 && other.x2 <= self.x2 && other.y1 >= self.y1 && other.y2 <= self.y2
    }

    /// Smallest box covering both.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Length of the shared x-interval, zero when disjoint.
    pub fn horizontal_overlap(&self, other: &BBox) -> f64 {
        (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0)
    }

    pub fn center_distance(&self, other: &BBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        (ax - bx).hypot(ay - by)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        iou(self, other)
    }

    pub fn quantize(&self) -> QuantBox {
        quantize(self)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Union of a non-empty sequence of boxes.
    pub fn union_all<'a, I: IntoIterator<Item = &'a BBox>>(boxes: I) -> Option<BBox> {
        boxes.into_iter().fold(None, |acc: Option<BBox>, b| match acc {
            None => Some(*b),
            Some(a) => Some(a.union(b)),
        })
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// Intersection over union. Returns 0 when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Box on the 0..=999 integer grid used in serialized markup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[u16; 4]")]
pub struct QuantBox {
    qx1: u16,
    qy1: u16,
    qx2: u16,
    qy2: u16,
}

impl QuantBox {
    pub fn new(qx1: i64, qy1: i64, qx2: i64, qy2: i64) -> Result<Self, GeometryError> {
        for c in [qx1, qy1, qx2, qy2] {
            if !(0..=i64::from(QUANT_MAX)).contains(&c) {
                return Err(GeometryError::QuantOutOfRange(c));
            }
        }
        if qx1 > qx2 || qy1 > qy2 {
            return Err(GeometryError::Inverted(
                qx1.to_string(),
                qy1.to_string(),
                qx2.to_string(),
                qy2.to_string(),
            ));
        }
        // Range checked above.
        Ok(Self {
            qx1: qx1 as u16,
            qy1: qy1 as u16,
            qx2: qx2 as u16,
            qy2: qy2 as u16,
        })
    }

    pub fn coords(&self) -> [u16; 4] {
        [self.qx1, self.qy1, self.qx2, self.qy2]
    }

    pub fn dequantize(&self) -> BBox {
        dequantize(self)
    }
}

impl TryFrom<[i64; 4]> for QuantBox {
    type Error = GeometryError;

    fn try_from(v: [i64; 4]) -> Result<Self, Self::Error> {
        QuantBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<QuantBox> for [u16; 4] {
    fn from(q: QuantBox) -> Self {
        q.coords()
    }
}

impl fmt::Display for QuantBox {
    /// Canonical markup body: `qx1,qy1,qx2,qy2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.qx1, self.qy1, self.qx2, self.qy2)
    }
}

fn quantize_coord(c: f64) -> u16 {
    let bin = (c * QUANT_BINS + QUANT_EPS).floor();
    bin.clamp(0.0, f64::from(QUANT_MAX)) as u16
}

fn dequantize_coord(d: u16) -> f64 {
    (f64::from(d) + 0.5) / QUANT_BINS
}

/// Floor-then-clamp quantization onto the 0..=999 grid.
pub fn quantize(b: &BBox) -> QuantBox {
    QuantBox {
        qx1: quantize_coord(b.x1),
        qy1: quantize_coord(b.y1),
        qx2: quantize_coord(b.x2),
        qy2: quantize_coord(b.y2),
    }
}

/// Maps each grid value to its bin center, so `quantize(dequantize(q)) == q`.
pub fn dequantize(q: &QuantBox) -> BBox {
    BBox {
        x1: dequantize_coord(q.qx1),
        y1: dequantize_coord(q.qy1),
        x2: dequantize_coord(q.qx2),
        y2: dequantize_coord(q.qy2),
    }
}
