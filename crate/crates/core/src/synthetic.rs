//! Procedural stand-ins for annotated endoscopy frames.
//!
//! The layout mimics a top-down laryngeal view: a dark glottal opening that
//! widens towards the bottom border, vocal folds flanking it, surrounding
//! tissue, and void in the upper corners where the endoscope image ends.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{CellGrid, GridGeometry, SemClass};

/// Builds a background label map for `geometry`. Shapes are laid out on a
/// 512x512 reference frame and scaled to the actual size.
pub fn synthetic_background(geometry: &GridGeometry, seed: u64) -> CellGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let apex: f64 = rng.random_range(96.0..=160.0);
    let mid: f64 = rng.random_range(236.0..=276.0);
    let slope: f64 = rng.random_range(0.22..=0.30);
    let fold: f64 = rng.random_range(150.0..=180.0);
    let (sx, sy) = (geometry.height as f64 / 512.0, geometry.width as f64 / 512.0);

    CellGrid::from_fn(*geometry, |x, y| {
        // reference-frame coordinates of the cell center
        let (u, v) = ((x as f64 + 0.5) / sx, (y as f64 + 0.5) / sy);
        let off = (v - mid).abs();
        if u < 256.0 && ((u - 256.0).powi(2) + (v - 256.0).powi(2)).sqrt() > 260.0 {
            SemClass::Void
        } else if u >= apex {
            let half = 6.0 + (u - apex) * slope;
            if off <= half {
                SemClass::GlottalSpace
            } else if off <= half + fold {
                SemClass::VocalFolds
            } else {
                SemClass::OtherTissue
            }
        } else if u >= apex - 40.0 && off <= fold {
            SemClass::VocalFolds
        } else {
            SemClass::OtherTissue
        }
    })
}
