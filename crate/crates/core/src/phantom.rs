//! Analytic phantoms and calibrated Gaussian noise.
//!
//! Every phantom is rasterized by 4×4 supersampling of each pixel and
//! clamped to `[0, 1]`. Shapes are given in coordinates scaled to the unit
//! square `[-1, 1]²` and stretched onto the grid's bounding box.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarImage};
use crate::tomo::Sinogram;

/// `(intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)`.
pub type Ellipse = (f64, f64, f64, f64, f64, f64);

/// Modified Shepp-Logan table (higher-contrast variant of the original).
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Index into [`SHEPP_LOGAN`] of the ellipse dropped by the missing-object variant.
pub const MISSING_ELLIPSE: usize = 4;

/// Bright ellipse added by the extra-object variant, in the lower right of the brain.
pub const EXTRA_ELLIPSE: Ellipse = (0.7, 0.1, 0.13, 0.3, -0.4, 25.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Template,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SheppLoganVariant {
    /// Ellipse [`MISSING_ELLIPSE`] removed.
    MissingObject,
    /// [`EXTRA_ELLIPSE`] added.
    ExtraObject,
    /// The phantom seen through the smooth warp [`warp_point`].
    Deformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "variant", rename_all = "kebab-case")]
pub enum PhantomKind {
    SheppLogan,
    SheppLoganVariant(SheppLoganVariant),
    SingleStar(Role),
    SixStars(Role),
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use PhantomKind::*;
        Ok(match s {
            "shepp-logan" => SheppLogan,
            "shepp-logan-missing" => SheppLoganVariant(self::SheppLoganVariant::MissingObject),
            "shepp-logan-extra" => SheppLoganVariant(self::SheppLoganVariant::ExtraObject),
            "shepp-logan-deformed" => SheppLoganVariant(self::SheppLoganVariant::Deformed),
            "single-star-template" => SingleStar(Role::Template),
            "single-star-target" => SingleStar(Role::Target),
            "six-stars-template" => SixStars(Role::Template),
            "six-stars-target" => SixStars(Role::Target),
            other => return Err(Error::Config(format!("unknown phantom kind '{other}'"))),
        })
    }
}

impl std::fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        use PhantomKind::*;
        let idx = match self {
            SheppLogan => 0,
            SheppLoganVariant(self::SheppLoganVariant::MissingObject) => 1,
            SheppLoganVariant(self::SheppLoganVariant::ExtraObject) => 2,
            SheppLoganVariant(self::SheppLoganVariant::Deformed) => 3,
            SingleStar(Role::Template) => 4,
            SingleStar(Role::Target) => 5,
            SixStars(Role::Template) => 6,
            SixStars(Role::Target) => 7,
        };
        f.write_str(Self::NAMES[idx])
    }
}

impl PhantomKind {
    pub const NAMES: [&'static str; 8] = [
        "shepp-logan",
        "shepp-logan-missing",
        "shepp-logan-extra",
        "shepp-logan-deformed",
        "single-star-template",
        "single-star-target",
        "six-stars-template",
        "six-stars-target",
    ];
}

fn inside_ellipse(e: &Ellipse, x: f64, y: f64) -> bool {
    let (_, a, b, x0, y0, deg) = *e;
    let (s, c) = deg.to_radians().sin_cos();
    let (dx, dy) = (x - x0, y - y0);
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    (u / a).powi(2) + (v / b).powi(2) <= 1.0
}

fn ellipse_sum(table: &[Ellipse], x: f64, y: f64) -> f64 {
    table.iter().filter(|e| inside_ellipse(e, x, y)).map(|e| e.0).sum()
}

/// Smooth, invertible warp of `[-1, 1]²` used for the deformed variant.
pub fn warp_point(x: f64, y: f64) -> (f64, f64) {
    let bump = (1.0 - x * x).max(0.0) * (1.0 - y * y).max(0.0);
    (
        x + 0.06 * bump * (2.5 * y).sin() - 0.04 * bump,
        y + 0.05 * bump * (2.0 * x + 0.5).sin() + 0.03 * bump,
    )
}

/// Closed star polygon with `points` tips.
pub fn star_polygon(center: (f64, f64), outer: f64, inner: f64, points: usize, rotation: f64) -> Vec<(f64, f64)> {
    (0..2 * points)
        .map(|k| {
            let r = if k % 2 == 0 { outer } else { inner };
            let a = rotation + std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / points as f64;
            (center.0 + r * a.cos(), center.1 + r * a.sin())
        })
        .collect()
}

/// Even-odd point-in-polygon test.
fn inside_polygon(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// `(grey value, polygon)` pairs of the star scenes.
pub fn star_scene(kind: PhantomKind) -> Vec<(f64, Vec<(f64, f64)>)> {
    match kind {
        PhantomKind::SingleStar(Role::Template) => vec![(1.0, star_polygon((0.0, 0.0), 0.42, 0.3, 5, 0.0))],
        PhantomKind::SingleStar(Role::Target) => vec![(1.0, star_polygon((0.05, -0.04), 0.55, 0.33, 5, 0.25))],
        PhantomKind::SixStars(role) => {
            let (outer, inner, twist, shift) = match role {
                Role::Template => (0.15, 0.1, 0.0, 0.0),
                Role::Target => (0.19, 0.08, 0.35, 0.04),
            };
            (0..6)
                .map(|k| {
                    let a = k as f64 * std::f64::consts::PI / 3.0 + 0.3;
                    let r = 0.55 + if k % 2 == 0 { shift } else { -shift };
                    let grey = if k % 2 == 0 { 1.0 } else { 0.7 };
                    (
                        grey,
                        star_polygon((r * a.cos(), r * a.sin()), outer, inner, 3, twist + 0.4 * k as f64),
                    )
                })
                .collect()
        }
        _ => Vec::new(),
    }
}

fn scene_value(scene: &[(f64, Vec<(f64, f64)>)], x: f64, y: f64) -> f64 {
    scene
        .iter()
        .filter(|(_, p)| inside_polygon(p, x, y))
        .map(|(g, _)| *g)
        .fold(0.0, f64::max)
}

fn unit_value(kind: PhantomKind, x: f64, y: f64) -> f64 {
    match kind {
        PhantomKind::SheppLogan => ellipse_sum(&SHEPP_LOGAN, x, y),
        PhantomKind::SheppLoganVariant(v) => match v {
            SheppLoganVariant::MissingObject => {
                ellipse_sum(&SHEPP_LOGAN, x, y)
                    - if inside_ellipse(&SHEPP_LOGAN[MISSING_ELLIPSE], x, y) {
                        SHEPP_LOGAN[MISSING_ELLIPSE].0
                    } else {
                        0.0
                    }
            }
            SheppLoganVariant::ExtraObject => {
                ellipse_sum(&SHEPP_LOGAN, x, y)
                    + if inside_ellipse(&EXTRA_ELLIPSE, x, y) {
                        EXTRA_ELLIPSE.0
                    } else {
                        0.0
                    }
            }
            SheppLoganVariant::Deformed => {
                let (u, v) = warp_point(x, y);
                ellipse_sum(&SHEPP_LOGAN, u, v)
            }
        },
        PhantomKind::SingleStar(_) | PhantomKind::SixStars(_) => scene_value(&star_scene(kind), x, y),
    }
}

const SUPERSAMPLE: usize = 4;

/// Rasterizes a phantom on `grid`.
pub fn make_phantom(kind: PhantomKind, grid: &Grid2D) -> ScalarImage {
    match kind {
        PhantomKind::SingleStar(_) | PhantomKind::SixStars(_) => {
            let scene = star_scene(kind);
            rasterize(grid, |x, y| scene_value(&scene, x, y))
        }
        _ => rasterize(grid, |x, y| unit_value(kind, x, y)),
    }
}

/// Rasterizes polygons with grey values given in unit-square coordinates; overlaps take the maximum.
pub fn rasterize_polygons(scene: &[(f64, Vec<(f64, f64)>)], grid: &Grid2D) -> ScalarImage {
    rasterize(grid, |x, y| scene_value(scene, x, y))
}

fn rasterize(grid: &Grid2D, unit_value: impl Fn(f64, f64) -> f64) -> ScalarImage {
    let (cx, cy) = (0.5 * (grid.x_min + grid.x_max), 0.5 * (grid.y_min + grid.y_max));
    let (sx, sy) = (0.5 * (grid.x_max - grid.x_min), 0.5 * (grid.y_max - grid.y_min));
    let (hx, hy) = (grid.hx(), grid.hy());
    let s = SUPERSAMPLE as f64;
    ScalarImage::from_fn(*grid, |x, y| {
        let mut acc = 0.0;
        for a in 0..SUPERSAMPLE {
            for b in 0..SUPERSAMPLE {
                let px = x + ((a as f64 + 0.5) / s - 0.5) * hx;
                let py = y + ((b as f64 + 0.5) / s - 0.5) * hy;
                acc += unit_value((px - cx) / sx, (py - cy) / sy);
            }
        }
        (acc / (s * s)).clamp(0.0, 1.0)
    })
}

/// Requested noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Target SNR in dB; `f64::INFINITY` means no noise.
    pub target_snr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(target_snr_db: f64, seed: u64) -> Self {
        Self { target_snr_db, seed }
    }

    pub fn noiseless() -> Self {
        Self {
            target_snr_db: f64::INFINITY,
            seed: 0,
        }
    }
}

fn centered_energy(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum()
}

/// Adds white Gaussian noise scaled so the realized SNR equals the target.
///
/// Noise is drawn from a ChaCha8 stream seeded with `spec.seed`.
pub fn add_noise(sino: &Sinogram, spec: &NoiseSpec) -> Result<Sinogram> {
    if spec.target_snr_db == f64::INFINITY {
        return Ok(sino.clone());
    }
    if !spec.target_snr_db.is_finite() {
        return Err(Error::Config(format!(
            "noise.snr_db must be finite or +inf, got {}",
            spec.target_snr_db
        )));
    }
    let signal = centered_energy(sino.values());
    if !(signal > 0.0) {
        return Err(Error::UndefinedSnr("sinogram has zero variance".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise: Vec<f64> = (0..sino.values().len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let raw = centered_energy(&noise);
    let scale = (signal / (raw * 10f64.powf(spec.target_snr_db / 10.0))).sqrt();
    let mut out = sino.clone();
    for (o, n) in out.values_mut().iter_mut().zip(&noise) {
        *o += scale * n;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::measure_snr;
    use crate::tomo::{ray_transform, SinogramGeometry};

    fn unit_box_of(e: &Ellipse) -> (f64, f64, f64, f64) {
        let r = e.1.max(e.2);
        (e.3 - r, e.3 + r, e.4 - r, e.4 + r)
    }

    #[test]
    fn shepp_logan_sanity() {
        let g = Grid2D::square(256, 16.0).unwrap();
        let img = make_phantom(PhantomKind::SheppLogan, &g);
        assert!(img.min() >= 0.0 && img.max() <= 1.0);
        let nonzero = img.values().iter().filter(|v| **v > 0.0).count() as f64 / g.len() as f64;
        assert!(nonzero > 0.05 && nonzero < 0.8, "{nonzero}");
        assert_eq!(img, make_phantom(PhantomKind::SheppLogan, &g));
    }

    #[test]
    fn variants_differ_inside_one_box() {
        let g = Grid2D::square(128, 16.0).unwrap();
        let base = make_phantom(PhantomKind::SheppLogan, &g);
        // Supersampling can touch a pixel whose centre is up to half a pixel outside.
        let slack = 0.5 * g.hx() / 16.0 * 2.0;
        for (v, e) in [
            (SheppLoganVariant::MissingObject, SHEPP_LOGAN[MISSING_ELLIPSE]),
            (SheppLoganVariant::ExtraObject, EXTRA_ELLIPSE),
        ] {
            let img = make_phantom(PhantomKind::SheppLoganVariant(v), &g);
            let (x0, x1, y0, y1) = unit_box_of(&e);
            let mut changed = 0;
            for (k, x, y) in g.centers() {
                if img.values()[k] != base.values()[k] {
                    changed += 1;
                    let (u, w) = (x / 16.0, y / 16.0);
                    assert!(
                        u >= x0 - slack && u <= x1 + slack && w >= y0 - slack && w <= y1 + slack,
                        "{v:?} at ({u}, {w})"
                    );
                }
            }
            assert!(changed > 0);
        }
    }

    #[test]
    fn rasterization_is_resolution_consistent() {
        let fine = Grid2D::square(512, 16.0).unwrap();
        let coarse = Grid2D::square(256, 16.0).unwrap();
        for kind in [PhantomKind::SheppLogan, PhantomKind::SixStars(Role::Target)] {
            let hi = make_phantom(kind, &fine);
            let lo = make_phantom(kind, &coarse);
            let mut err = 0.0;
            for j in 0..256 {
                for i in 0..256 {
                    let avg = (hi.at(2 * i, 2 * j)
                        + hi.at(2 * i + 1, 2 * j)
                        + hi.at(2 * i, 2 * j + 1)
                        + hi.at(2 * i + 1, 2 * j + 1))
                        / 4.0;
                    err += (avg - lo.at(i, j)).abs();
                }
            }
            assert!(err / coarse.len() as f64 <= 0.02);
        }
    }

    #[test]
    fn star_scenes_are_in_range_and_distinct() {
        let g = Grid2D::square(64, 16.0).unwrap();
        for role in [Role::Template, Role::Target] {
            for kind in [PhantomKind::SingleStar(role), PhantomKind::SixStars(role)] {
                let img = make_phantom(kind, &g);
                assert!(img.min() >= 0.0 && img.max() <= 1.0 && img.max() > 0.5);
            }
        }
        assert_ne!(
            make_phantom(PhantomKind::SingleStar(Role::Template), &g),
            make_phantom(PhantomKind::SingleStar(Role::Target), &g)
        );
        assert_eq!(star_scene(PhantomKind::SixStars(Role::Target)).len(), 6);
    }

    #[test]
    fn names_round_trip() {
        for name in PhantomKind::NAMES {
            assert_eq!(name.parse::<PhantomKind>().unwrap().to_string(), name);
        }
        assert!("star".parse::<PhantomKind>().is_err());
    }

    fn suite_sinogram() -> Sinogram {
        let g = Grid2D::square(64, 16.0).unwrap();
        let geom = SinogramGeometry::for_grid(&g, 10, 92).unwrap();
        ray_transform(&make_phantom(PhantomKind::SingleStar(Role::Target), &g), &geom)
    }

    #[test]
    fn noise_hits_the_requested_snr() {
        let clean = suite_sinogram();
        for target in [4.75, 4.87, 6.46, 7.06] {
            let noisy = add_noise(&clean, &NoiseSpec::new(target, 42)).unwrap();
            let snr = measure_snr(&clean, &noisy).unwrap();
            assert!((snr - target).abs() <= 0.01, "{target} -> {snr}");
        }
    }

    #[test]
    fn noise_is_seeded() {
        let clean = suite_sinogram();
        let a = add_noise(&clean, &NoiseSpec::new(5.0, 1)).unwrap();
        assert_eq!(a, add_noise(&clean, &NoiseSpec::new(5.0, 1)).unwrap());
        let b = add_noise(&clean, &NoiseSpec::new(5.0, 2)).unwrap();
        assert_ne!(a, b);
        assert!((measure_snr(&clean, &b).unwrap() - 5.0).abs() < 1e-9);
        assert_eq!(add_noise(&clean, &NoiseSpec::noiseless()).unwrap(), clean);
    }

    #[test]
    fn flat_sinogram_has_undefined_snr() {
        let clean = suite_sinogram().map(|_| 3.0);
        assert!(matches!(
            add_noise(&clean, &NoiseSpec::new(5.0, 1)),
            Err(Error::UndefinedSnr(_))
        ));
    }
}
