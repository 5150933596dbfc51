//! Side-by-side match overlay as a standalone SVG.

use std::fmt::Write;

use pats_core::Image;

use crate::matches::MatchRecord;

const GRAY_LEVELS: f64 = 64.0;

/// Hue in degrees derived from the match's index.
pub fn hue(index: usize) -> u32 {
    let mut z = (index as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ((z ^ (z >> 31)) % 360) as u32
}

/// Draws `image` as runs of equal quantized gray, offset by `dx`.
fn raster(out: &mut String, image: &Image, dx: usize) {
    let _ = writeln!(out, "<g transform=\"translate({dx} 0)\" shape-rendering=\"crispEdges\">");
    for y in 0..image.height() {
        let mut x = 0;
        while x < image.width() {
            let level = (image.luma(x, y) * (GRAY_LEVELS - 1.0)).round();
            let mut end = x + 1;
            while end < image.width() && (image.luma(end, y) * (GRAY_LEVELS - 1.0)).round() == level {
                end += 1;
            }
            let g = (level / (GRAY_LEVELS - 1.0) * 255.0).round() as u8;
            let _ = writeln!(
                out,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{}\" height=\"1\" fill=\"#{g:02x}{g:02x}{g:02x}\"/>",
                end - x
            );
            x = end;
        }
    }
    out.push_str("</g>\n");
}

pub fn overlay(source: &Image, target: &Image, matches: &[MatchRecord]) -> String {
    let gap = 8;
    let width = source.width() + gap + target.width();
    let height = source.height().max(target.height());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(out, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");
    raster(&mut out, source, 0);
    raster(&mut out, target, source.width() + gap);
    out.push_str("<g stroke-width=\"0.6\" stroke-opacity=\"0.8\" fill=\"none\">\n");
    let shift = (source.width() + gap) as f64;
    for (k, m) in matches.iter().enumerate() {
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"hsl({},85%,50%)\"/>",
            m.src[0],
            m.src[1],
            m.dst[0] + shift,
            m.dst[1],
            hue(k)
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}
