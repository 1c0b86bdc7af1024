//! Bounding-box recovery by re-rendering: render a scene, render it again with
//! one layer hidden, and bound the pixels that changed.
//!
//! Scenes are drawn by a small deterministic compositor. Text layers use a
//! fixed 5x7 dot-matrix per character so tests get pixel-exact ground truth
//! without any font machinery.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::text::stable_hash;

pub const GLYPH_W: u32 = 5;
pub const GLYPH_H: u32 = 7;
/// Horizontal advance per character, in glyph cells.
pub const GLYPH_ADVANCE: u32 = GLYPH_W + 1;

/// Per-channel tolerance for externally rendered image pairs.
pub const DEFAULT_TOLERANCE: u8 = 2;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("canvas must be at least 1x1, got {0}x{1}")]
    EmptyCanvas(u32, u32),
    #[error("pixel buffer holds {got} bytes, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("raster dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("duplicate layer id {0:?}")]
    DuplicateLayer(String),
    #[error("layer {0:?}: opacity {1} outside [0, 1]")]
    BadOpacity(String, f64),
    #[error("layer {0:?}: glyph scale must be >= 1")]
    BadScale(String),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

/// Row-major RGBA8 image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Raster {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyCanvas(width, height));
        }
        let expected = width as usize * height as usize * 4;
        if pixels.len() != expected {
            return Err(RasterError::BufferSize {
                expected,
                got: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgba: [u8; 4]) -> Result<Self, RasterError> {
        let n = width as usize * height as usize;
        Self::new(width, height, rgba.iter().copied().cycle().take(n * 4).collect())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = (y as usize * self.width as usize + x as usize) * 4;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2], self.pixels[i + 3]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgba: [u8; 4]) {
        let i = (y as usize * self.width as usize + x as usize) * 4;
        self.pixels[i..i + 4].copy_from_slice(&rgba);
    }

    pub fn read_png(path: &Path) -> Result<Self, RasterError> {
        let img = image::open(path)?.to_rgba8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw())
    }

    pub fn write_png(&self, path: &Path) -> Result<(), RasterError> {
        image::save_buffer(path, &self.pixels, self.width, self.height, image::ExtendedColorType::Rgba8)?;
        Ok(())
    }
}

/// Half-open pixel rectangle `[px1, px2) x [py1, py2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub px1: u32,
    pub py1: u32,
    pub px2: u32,
    pub py2: u32,
}

impl PixelBox {
    pub fn normalize(&self, width: u32, height: u32) -> BBox {
        BBox::from_pixels(self.px1, self.py1, self.px2, self.py2, width, height)
            .expect("pixel box lies inside its canvas")
    }

    pub fn is_empty(&self) -> bool {
        self.px1 >= self.px2 || self.py1 >= self.py2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
    pub background: [u8; 4],
}

fn default_scale() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Rect {
        x: u32,
        y: u32,
        w: u32,
        h: u32,
    },
    /// Dot-matrix string; each glyph cell is `scale` x `scale` pixels.
    Text {
        x: u32,
        y: u32,
        text: String,
        #[serde(default = "default_scale")]
        scale: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub id: String,
    pub shape: Shape,
    pub fill: [u8; 4],
    #[serde(default = "one")]
    pub opacity: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub canvas: Canvas,
    pub layers: Vec<Layer>,
}

impl Scene {
    pub fn validate(&self) -> Result<(), RasterError> {
        if self.canvas.width == 0 || self.canvas.height == 0 {
            return Err(RasterError::EmptyCanvas(self.canvas.width, self.canvas.height));
        }
        let mut seen = HashSet::new();
        for layer in &self.layers {
            if !seen.insert(layer.id.as_str()) {
                return Err(RasterError::DuplicateLayer(layer.id.clone()));
            }
            if !(0.0..=1.0).contains(&layer.opacity) {
                return Err(RasterError::BadOpacity(layer.id.clone(), layer.opacity));
            }
            if let Shape::Text { scale: 0, .. } = layer.shape {
                return Err(RasterError::BadScale(layer.id.clone()));
            }
        }
        Ok(())
    }
}

/// 5x7 bitmap for a character: seven rows, low five bits used, bit 4 leftmost.
/// Whitespace is blank; every other character lights at least one dot.
pub fn glyph(c: char) -> [u8; 7] {
    if c.is_whitespace() {
        return [0; 7];
    }
    let h = stable_hash(&[c.to_string()]);
    let mut rows = [0u8; 7];
    for (r, row) in rows.iter_mut().enumerate() {
        *row = ((h >> (r * 5)) & 0x1f) as u8;
    }
    if rows.iter().all(|&r| r == 0) {
        rows[3] = 0b00100;
    }
    rows
}

impl Layer {
    /// Pixels covered by the shape, clipped to the canvas.
    pub fn coverage(&self, canvas: &Canvas) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        match &self.shape {
            Shape::Rect { x, y, w, h } => {
                let x2 = x.saturating_add(*w).min(canvas.width);
                let y2 = y.saturating_add(*h).min(canvas.height);
                for py in *y..y2 {
                    for px in *x..x2 {
                        out.push((px, py));
                    }
                }
            }
            Shape::Text { x, y, text, scale } => {
                for (k, c) in text.chars().enumerate() {
                    let ox = u64::from(*x) + k as u64 * u64::from(GLYPH_ADVANCE * scale);
                    for (r, row) in glyph(c).iter().enumerate() {
                        for col in 0..GLYPH_W {
                            if row & (1 << (GLYPH_W - 1 - col)) == 0 {
                                continue;
                            }
                            for dy in 0..*scale {
                                for dx in 0..*scale {
                                    let px = ox + u64::from(col * scale + dx);
                                    let py = u64::from(*y) + r as u64 * u64::from(*scale) + u64::from(dy);
                                    if px < u64::from(canvas.width) && py < u64::from(canvas.height) {
                                        out.push((px as u32, py as u32));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Tight bounds of [`Layer::coverage`].
    pub fn extent(&self, canvas: &Canvas) -> Option<PixelBox> {
        bounds_of(self.coverage(canvas))
    }

    fn effective_alpha(&self) -> f64 {
        f64::from(self.fill[3]) / 255.0 * self.opacity
    }
}

fn bounds_of<I: IntoIterator<Item = (u32, u32)>>(pts: I) -> Option<PixelBox> {
    let mut b: Option<PixelBox> = None;
    for (x, y) in pts {
        b = Some(match b {
            None => PixelBox {
                px1: x,
                py1: y,
                px2: x + 1,
                py2: y + 1,
            },
            Some(p) => PixelBox {
                px1: p.px1.min(x),
                py1: p.py1.min(y),
                px2: p.px2.max(x + 1),
                py2: p.py2.max(y + 1),
            },
        });
    }
    b
}

/// Composites layers in order with straight-alpha source-over and rounds to
/// 8 bits once at the end.
pub fn render_scene(scene: &Scene) -> Result<Raster, RasterError> {
    scene.validate()?;
    let Canvas {
        width,
        height,
        background,
    } = scene.canvas;
    let n = width as usize * height as usize;
    let bg = background.map(|c| f64::from(c) / 255.0);
    let mut acc: Vec<[f64; 4]> = vec![bg; n];

    for layer in &scene.layers {
        let a_s = layer.effective_alpha();
        if a_s <= 0.0 {
            continue;
        }
        let src = layer.fill.map(|c| f64::from(c) / 255.0);
        for (x, y) in layer.coverage(&scene.canvas) {
            let dst = &mut acc[y as usize * width as usize + x as usize];
            let a_d = dst[3];
            let a_o = a_s + a_d * (1.0 - a_s);
            for ch in 0..3 {
                dst[ch] = if a_o > 0.0 {
                    (src[ch] * a_s + dst[ch] * a_d * (1.0 - a_s)) / a_o
                } else {
                    0.0
                };
            }
            dst[3] = a_o;
        }
    }

    let pixels = acc
        .iter()
        .flat_map(|p| p.map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8))
        .collect();
    Raster::new(width, height, pixels)
}

/// Tight box around every pixel where some channel differs by more than `tol`.
pub fn diff_bbox(base: &Raster, variant: &Raster, tol: u8) -> Result<Option<PixelBox>, RasterError> {
    if base.width != variant.width || base.height != variant.height {
        return Err(RasterError::DimensionMismatch(
            base.width,
            base.height,
            variant.width,
            variant.height,
        ));
    }
    let w = base.width as usize;
    let changed = base
        .pixels
        .chunks_exact(4)
        .zip(variant.pixels.chunks_exact(4))
        .enumerate()
        .filter(|(_, (a, b))| a.iter().zip(b.iter()).any(|(p, q)| p.abs_diff(*q) > tol))
        .map(|(i, _)| ((i % w) as u32, (i / w) as u32));
    Ok(bounds_of(changed))
}

/// How a layer is hidden for the variant render.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Toggle {
    /// Opacity set to zero.
    #[default]
    Opacity,
    /// RGB replaced by its complement; can alias with the background.
    Color,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LayerOutcome {
    Found { pixels: PixelBox, bbox: BBox },
    /// The toggle changed no pixel: the layer is occluded or transparent.
    InvisibleLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBox {
    pub id: String,
    #[serde(flatten)]
    pub outcome: LayerOutcome,
}

/// Recovers each layer's box from a baseline render and a per-layer variant.
/// Output follows scene layer order.
pub fn extract_block_boxes(scene: &Scene, toggle: Toggle, tol: u8) -> Result<Vec<LayerBox>, RasterError> {
    let base = render_scene(scene)?;
    let mut out = Vec::with_capacity(scene.layers.len());
    for (i, layer) in scene.layers.iter().enumerate() {
        let mut variant_scene = scene.clone();
        let target = &mut variant_scene.layers[i];
        match toggle {
            Toggle::Opacity => target.opacity = 0.0,
            Toggle::Color => {
                for c in &mut target.fill[..3] {
                    *c = 255 - *c;
                }
            }
        }
        let variant = render_scene(&variant_scene)?;
        let outcome = match diff_bbox(&base, &variant, tol)? {
            Some(pixels) => LayerOutcome::Found {
                pixels,
                bbox: pixels.normalize(scene.canvas.width, scene.canvas.height),
            },
            None => LayerOutcome::InvisibleLayer,
        };
        out.push(LayerBox {
            id: layer.id.clone(),
            outcome,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const WHITE: [u8; 4] = [255, 255, 255, 255];

    fn rect(id: &str, x: u32, y: u32, w: u32, h: u32, fill: [u8; 4]) -> Layer {
        Layer {
            id: id.into(),
            shape: Shape::Rect { x, y, w, h },
            fill,
            opacity: 1.0,
        }
    }

    fn scene(w: u32, h: u32, layers: Vec<Layer>) -> Scene {
        Scene {
            canvas: Canvas {
                width: w,
                height: h,
                background: WHITE,
            },
            layers,
        }
    }

    #[test]
    fn empty_scene_is_background() {
        let r = render_scene(&scene(4, 3, vec![])).unwrap();
        assert_eq!(r, Raster::filled(4, 3, WHITE).unwrap());
    }

    #[test]
    fn zero_canvas_rejected() {
        assert!(matches!(render_scene(&scene(0, 3, vec![])), Err(RasterError::EmptyCanvas(0, 3))));
    }

    #[test]
    fn opaque_rect_fills_exact_pixels() {
        let red = [200, 10, 10, 255];
        let r = render_scene(&scene(20, 12, vec![rect("a", 3, 4, 10, 5, red)])).unwrap();
        let mut count = 0;
        for y in 0..12 {
            for x in 0..20 {
                let inside = (3..13).contains(&x) && (4..9).contains(&y);
                assert_eq!(r.pixel(x, y), if inside { red } else { WHITE });
                count += usize::from(inside);
            }
        }
        assert_eq!(count, 50);
    }

    /// Reference straight-alpha source-over for a single pixel.
    fn blend(dst: [f64; 4], src: [f64; 4]) -> [f64; 4] {
        let a = src[3] + dst[3] * (1.0 - src[3]);
        let mut out = [0.0, 0.0, 0.0, a];
        for c in 0..3 {
            out[c] = (src[c] * src[3] + dst[c] * dst[3] * (1.0 - src[3])) / a;
        }
        out
    }

    #[test]
    fn translucent_layers_blend() {
        let mut l1 = rect("a", 0, 0, 3, 1, [255, 0, 0, 255]);
        l1.opacity = 0.5;
        let l2 = rect("b", 1, 0, 3, 1, [0, 0, 255, 128]);
        let r = render_scene(&scene(4, 1, vec![l1, l2])).unwrap();
        let bg = [1.0, 1.0, 1.0, 1.0];
        let p1 = [1.0, 0.0, 0.0, 0.5];
        let p2 = [0.0, 0.0, 1.0, 128.0 / 255.0];
        let expect = [blend(bg, p1), blend(blend(bg, p1), p2), blend(blend(bg, p1), p2), blend(bg, p2)];
        for (x, e) in expect.iter().enumerate() {
            let want = e.map(|c| (c * 255.0).round() as u8);
            assert_eq!(r.pixel(x as u32, 0), want, "pixel {x}");
        }
    }

    #[test]
    fn diff_examples() {
        let a = Raster::filled(10, 5, WHITE).unwrap();
        assert_eq!(diff_bbox(&a, &a, 0).unwrap(), None);
        let mut b = a.clone();
        b.set_pixel(7, 2, [0, 0, 0, 255]);
        let want = PixelBox {
            px1: 7,
            py1: 2,
            px2: 8,
            py2: 3,
        };
        assert_eq!(diff_bbox(&a, &b, 0).unwrap(), Some(want));
        assert_eq!(diff_bbox(&b, &a, 0).unwrap(), Some(want));
        let c = Raster::filled(10, 6, WHITE).unwrap();
        assert!(matches!(diff_bbox(&a, &c, 0), Err(RasterError::DimensionMismatch(..))));
    }

    #[test]
    fn tolerance_absorbs_small_changes() {
        let a = Raster::filled(3, 3, [100, 100, 100, 255]).unwrap();
        let mut b = a.clone();
        b.set_pixel(1, 1, [102, 99, 100, 255]);
        assert_eq!(diff_bbox(&a, &b, DEFAULT_TOLERANCE).unwrap(), None);
        assert!(diff_bbox(&a, &b, 1).unwrap().is_some());
    }

    #[test]
    fn single_rect_normalized() {
        let s = scene(100, 50, vec![rect("t", 3, 4, 10, 5, [0, 0, 0, 255])]);
        let out = extract_block_boxes(&s, Toggle::Opacity, 0).unwrap();
        let LayerOutcome::Found { pixels, bbox } = &out[0].outcome else {
            panic!("expected a box")
        };
        assert_eq!(
            *pixels,
            PixelBox {
                px1: 3,
                py1: 4,
                px2: 13,
                py2: 9
            }
        );
        // 3/100, 4/50, 13/100, 9/50
        assert_eq!(bbox.to_array(), [0.03, 0.08, 0.13, 0.18]);
    }

    #[test]
    fn disjoint_layers_and_glyph_text() {
        let text = Layer {
            id: "title".into(),
            shape: Shape::Text {
                x: 40,
                y: 10,
                text: "Hi 5".into(),
                scale: 2,
            },
            fill: [20, 20, 20, 255],
            opacity: 1.0,
        };
        let s = scene(100, 50, vec![rect("a", 1, 1, 5, 5, [0, 200, 0, 255]), text.clone()]);
        let out = extract_block_boxes(&s, Toggle::Opacity, 0).unwrap();
        assert_eq!(out[0].outcome, found(&s, 0));
        assert_eq!(out[1].outcome, found(&s, 1));
        let ext = text.extent(&s.canvas).unwrap();
        assert!(ext.px1 >= 40 && ext.py1 >= 10 && ext.py2 <= 10 + 14);
    }

    fn found(s: &Scene, i: usize) -> LayerOutcome {
        let p = s.layers[i].extent(&s.canvas).unwrap();
        LayerOutcome::Found {
            pixels: p,
            bbox: p.normalize(s.canvas.width, s.canvas.height),
        }
    }

    #[test]
    fn occluded_layer_is_invisible() {
        let s = scene(
            30,
            30,
            vec![rect("under", 5, 5, 4, 4, [0, 0, 0, 255]), rect("cover", 0, 0, 20, 20, [9, 9, 9, 255])],
        );
        let out = extract_block_boxes(&s, Toggle::Opacity, 0).unwrap();
        assert_eq!(out[0].outcome, LayerOutcome::InvisibleLayer);
        assert!(matches!(out[1].outcome, LayerOutcome::Found { .. }));
    }

    #[test]
    fn transparent_layer_is_invisible() {
        let mut l = rect("ghost", 5, 5, 4, 4, [0, 0, 0, 255]);
        l.opacity = 0.0;
        let out = extract_block_boxes(&scene(30, 30, vec![l]), Toggle::Opacity, 0).unwrap();
        assert_eq!(out[0].outcome, LayerOutcome::InvisibleLayer);
    }

    #[test]
    fn color_toggle_matches_opacity_on_contrasting_fill() {
        let s = scene(30, 30, vec![rect("a", 2, 3, 6, 7, [0, 0, 0, 255])]);
        let a = extract_block_boxes(&s, Toggle::Opacity, 0).unwrap();
        let b = extract_block_boxes(&s, Toggle::Color, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scene_validation() {
        let s = scene(10, 10, vec![rect("a", 0, 0, 1, 1, WHITE), rect("a", 2, 2, 1, 1, WHITE)]);
        assert!(matches!(s.validate(), Err(RasterError::DuplicateLayer(_))));
        let mut l = rect("b", 0, 0, 1, 1, WHITE);
        l.opacity = 1.5;
        assert!(matches!(scene(10, 10, vec![l]).validate(), Err(RasterError::BadOpacity(..))));
    }

    #[test]
    fn png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let s = scene(17, 9, vec![rect("a", 2, 3, 6, 4, [10, 20, 30, 200])]);
        let r = render_scene(&s).unwrap();
        let p = dir.path().join("r.png");
        r.write_png(&p).unwrap();
        assert_eq!(Raster::read_png(&p).unwrap(), r);
    }

    #[test]
    fn glyphs_are_stable_and_nonblank() {
        assert_eq!(glyph(' '), [0; 7]);
        for c in "AZaz09.,$%".chars() {
            assert!(glyph(c).iter().any(|&r| r != 0));
            assert_eq!(glyph(c), glyph(c));
        }
    }
}
