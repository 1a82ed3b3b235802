//! Built-in scenario sets for the double-slit and four-letter aperture runs.

use ndarray::Array2;

use super::{MaskSource, Methods, Scenario, SlitSpec};
use crate::error::{Error, Result};
use crate::gics::GicsParams;
use crate::optics::{ObjectMask, OpticalConfig};

const RECIPES: [&str; 3] = ["fig2", "fig3", "fig4"];

const SLIT_LCS: [f64; 3] = [276.7e-6, 135.5e-6, 68.8e-6];
const APERTURE_LCS: [f64; 3] = [272.2e-6, 193.5e-6, 109.6e-6];
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

pub fn recipe_names() -> &'static [&'static str] {
    &RECIPES
}

fn build(
    prefix: &str,
    lcs: &[f64],
    mask_source: MaskSource,
    m: usize,
    gics_m: Option<usize>,
) -> Result<Vec<Scenario>> {
    lcs.iter()
        .map(|&lc| {
            Ok(Scenario {
                name: format!("{prefix}_lc{:.1}um", lc * 1e6),
                config: OpticalConfig::bench_default(lc)?,
                mask_source: mask_source.clone(),
                m,
                gics_m,
                methods: Methods::BOTH,
                gics: GicsParams::default(),
                seeds: SEEDS.to_vec(),
                noise_sigma: 0.0,
            })
        })
        .collect()
}

/// One scenario per coherence length of the named set.
pub fn recipe(name: &str) -> Result<Vec<Scenario>> {
    let slit = MaskSource::DoubleSlit(SlitSpec::default());
    match name {
        "fig2" => build("fig2", &SLIT_LCS, slit, 300, None),
        "fig3" => build("fig3", &SLIT_LCS, slit, 500, None),
        "fig4" => build("fig4", &APERTURE_LCS, MaskSource::Siom, 2000, Some(1000)),
        other => Err(Error::Config(format!(
            "unknown recipe {other:?}; known: {}",
            RECIPES.join(", ")
        ))),
    }
}

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;

const GLYPHS: [[&str; GLYPH_H]; 4] = [
    [
        ".####", "#....", "#....", ".###.", "....#", "....#", "####.",
    ],
    [
        "#####", "..#..", "..#..", "..#..", "..#..", "..#..", "#####",
    ],
    [
        ".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###.",
    ],
    [
        "#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#",
    ],
];

/// Binary "SIOM" lettering centered on the grid, about three quarters of the
/// field wide.
pub fn siom_mask(config: &OpticalConfig) -> Result<ObjectMask> {
    let n = config.grid_n;
    let text_w = GLYPHS.len() * GLYPH_W + GLYPHS.len() - 1;
    let scale = (3 * n / 4) / text_w;
    if scale == 0 {
        return Err(Error::Mask(format!(
            "grid of {n} pixels is too small for the lettered aperture"
        )));
    }
    let x0 = (n - text_w * scale) / 2;
    let y0 = (n - GLYPH_H * scale) / 2;
    let mut values = Array2::zeros((n, n));
    for (g, glyph) in GLYPHS.iter().enumerate() {
        let gx = x0 + g * (GLYPH_W + 1) * scale;
        for (r, row) in glyph.iter().enumerate() {
            for (c, ch) in row.bytes().enumerate() {
                if ch == b'#' {
                    let (top, left) = (y0 + r * scale, gx + c * scale);
                    values
                        .slice_mut(ndarray::s![top..top + scale, left..left + scale])
                        .fill(1.0);
                }
            }
        }
    }
    ObjectMask::new(values, config.pixel_pitch)
}
