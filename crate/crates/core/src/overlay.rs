//! Green/red overlays of the most and least influential objects.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Finding;

pub const GREEN: [u8; 3] = [0, 255, 0];
pub const RED: [u8; 3] = [255, 0, 0];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbFrame {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl RgbFrame {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::Validation(format!(
                "{}x{} RGB frame needs {} bytes, got {}",
                height,
                width,
                height * width * 3,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let p = (y * self.width + x) * 3;
        [self.data[p], self.data[p + 1], self.data[p + 2]]
    }
}

/// `round(0.5 * a + 0.5 * b)`, halves rounded up.
fn blend(a: u8, b: u8) -> u8 {
    ((u16::from(a) + u16::from(b) + 1) / 2) as u8
}

/// Blend `top` object pixels with green and `bottom` ones with red. An ID in
/// both lists is drawn green and reported.
pub fn render_overlay(
    frame: &RgbFrame,
    labels: &[u16],
    top: &[u16],
    bottom: &[u16],
) -> Result<(RgbFrame, Vec<Finding>)> {
    if labels.len() != frame.height * frame.width {
        return Err(Error::Validation(format!(
            "segmentation has {} labels for a {}x{} frame",
            labels.len(),
            frame.height,
            frame.width
        )));
    }
    let top: BTreeSet<u16> = top.iter().copied().collect();
    let bottom: BTreeSet<u16> = bottom.iter().copied().collect();
    let mut findings = Vec::new();
    let both: Vec<u16> = top.intersection(&bottom).copied().collect();
    if !both.is_empty() {
        findings.push(Finding::new(
            "overlay",
            format!("objects {both:?} are both top and bottom; drawn as top"),
        ));
    }

    let mut out = frame.clone();
    for (i, &id) in labels.iter().enumerate() {
        let color = if top.contains(&id) {
            GREEN
        } else if bottom.contains(&id) {
            RED
        } else {
            continue;
        };
        for ch in 0..3 {
            let p = i * 3 + ch;
            out.data[p] = blend(frame.data[p], color[ch]);
        }
    }
    Ok((out, findings))
}

pub fn save_png(path: impl AsRef<Path>, frame: &RgbFrame) -> Result<()> {
    let path = path.as_ref();
    let img = image::RgbImage::from_raw(frame.width as u32, frame.height as u32, frame.data.clone())
        .ok_or_else(|| Error::Validation("frame buffer does not match its dimensions".into()))?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

pub fn load_png(path: impl AsRef<Path>) -> Result<RgbFrame> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?.to_rgb8();
    let (w, h) = img.dimensions();
    RgbFrame::new(h as usize, w as usize, img.into_raw())
}
