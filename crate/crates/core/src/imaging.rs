//! Image crops and palette statistics.

use std::collections::BTreeMap;

use image::RgbImage;

use crate::geometry::OrientedBox2;

/// Axis-aligned crop of the box's envelope, clamped to the image.
pub fn crop_box(image: &RgbImage, b: &OrientedBox2) -> RgbImage {
    let (x0, y0, x1, y1) = b.crop_rect(image.width() as usize, image.height() as usize);
    image::imageops::crop_imm(image, x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32).to_image()
}

/// Most frequent color among pixels that exactly match a palette entry.
/// Ties resolve to the smallest color; `None` if no pixel matches.
pub fn dominant_palette_color(image: &RgbImage, palette: &[[u8; 3]]) -> Option<[u8; 3]> {
    let mut counts: BTreeMap<[u8; 3], usize> = palette.iter().map(|c| (*c, 0)).collect();
    for px in image.pixels() {
        if let Some(c) = counts.get_mut(&px.0) {
            *c += 1;
        }
    }
    let mut best: Option<([u8; 3], usize)> = None;
    for (color, n) in counts {
        if n > 0 && best.is_none_or(|(_, bn)| n > bn) {
            best = Some((color, n));
        }
    }
    best.map(|(c, _)| c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn dominant_color_ignores_unlisted_pixels() {
        let mut img = RgbImage::from_pixel(10, 10, Rgb([128, 128, 128]));
        for x in 0..3 {
            img.put_pixel(x, 0, Rgb([255, 0, 0]));
        }
        img.put_pixel(9, 9, Rgb([0, 0, 255]));
        let palette = [[0, 0, 255], [255, 0, 0]];
        assert_eq!(dominant_palette_color(&img, &palette), Some([255, 0, 0]));
        assert_eq!(dominant_palette_color(&img, &[[1, 2, 3]]), None);
    }

    #[test]
    fn crop_is_clamped() {
        let img = RgbImage::new(20, 10);
        let b = OrientedBox2 {
            center: (18.0, 5.0),
            half_extents: (5.0, 2.0),
            angle: 0.0,
        };
        let c = crop_box(&img, &b);
        assert_eq!((c.width(), c.height()), (7, 4));
    }
}
