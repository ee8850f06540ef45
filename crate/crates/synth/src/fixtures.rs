//! Fixture scenes and provider mappings shared by tests, examples and the CLI.

use qsr_core::captions::CaptionFixture;
use qsr_core::embedding::Vocabulary;
use qsr_core::eval::Suite;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::recipe::{CameraRing, NoiseSpec, ObjectSpec, Room, SceneRecipe, Shape};

pub const LIVING_ROOM_RECIPE: &str = include_str!("../../../fixtures/living_room.recipe.json");
pub const VOCABULARY: &str = include_str!("../../../fixtures/vocabulary.json");
pub const CAPTIONS: &str = include_str!("../../../fixtures/captions.json");
pub const LIVING_ROOM_SUITE: &str = include_str!("../../../fixtures/living_room_suite.json");
pub const NEGATION_SUITE: &str = include_str!("../../../fixtures/negation_suite.json");

/// Living room with a table, a vase the segmenter calls a bowl, two chairs,
/// a sofa, a plant, a shelf and a book on the shelf.
pub fn living_room() -> SceneRecipe {
    SceneRecipe::from_json(LIVING_ROOM_RECIPE).expect("bundled recipe is valid")
}

pub fn vocabulary() -> Vocabulary {
    serde_json::from_str(VOCABULARY).expect("bundled vocabulary parses")
}

pub fn captions() -> CaptionFixture {
    serde_json::from_str(CAPTIONS).expect("bundled captions parse")
}

pub fn living_room_suite() -> Suite {
    serde_json::from_str(LIVING_ROOM_SUITE).expect("bundled suite parses")
}

pub fn negation_suite() -> Suite {
    serde_json::from_str(NEGATION_SUITE).expect("bundled suite parses")
}

const CLASSES: [&str; 9] = ["chair", "table", "cabinet", "lamp", "box", "stool", "bin", "plant", "sofa"];
const COLORS: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

/// Planar gap kept between object footprints in [`random_recipe`], meters.
pub const MIN_SEPARATION: f64 = 0.2;
/// Lowest object bottom in [`random_recipe`], meters above the floor.
pub const MIN_ELEVATION: f64 = 0.15;

fn footprint_gap(a: &Shape, b: &Shape) -> f64 {
    let ((alo, ahi), (blo, bhi)) = (a.bounds(), b.bounds());
    let gap = |k: usize| (blo[k] - ahi[k]).max(alo[k] - bhi[k]).max(0.0);
    gap(0).hypot(gap(1))
}

/// A random room of 3 to 8 primitives watched by 8 to 16 cameras.
///
/// Objects float at least [`MIN_ELEVATION`] above the floor and keep
/// [`MIN_SEPARATION`] between footprints, so every object is its own
/// connected, well-sampled surface and no surface is closer to another than
/// the clustering radius. Deterministic per seed.
pub fn random_recipe(seed: u64, noise: NoiseSpec) -> SceneRecipe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_objects = rng.random_range(3..=8usize);
    let n_cameras = rng.random_range(8..=16usize);
    let inner = 1.75;
    let mut objects: Vec<ObjectSpec> = Vec::new();
    let mut attempts = 0;
    while objects.len() < n_objects {
        attempts += 1;
        assert!(attempts < 100_000, "could not place {n_objects} objects");
        let base = rng.random_range(MIN_ELEVATION..0.5);
        let (x, y) = (rng.random_range(-inner..inner), rng.random_range(-inner..inner));
        let shape = match rng.random_range(0..4) {
            0 | 1 => {
                let size = [
                    rng.random_range(0.25..0.7),
                    rng.random_range(0.25..0.7),
                    rng.random_range(0.25..0.7),
                ];
                Shape::Box {
                    center: [x, y, base + size[2] / 2.0],
                    size,
                }
            }
            2 => {
                let radius = rng.random_range(0.15..0.35);
                Shape::Sphere {
                    center: [x, y, base + radius],
                    radius,
                }
            }
            _ => {
                let (radius, height) = (rng.random_range(0.12..0.3), rng.random_range(0.25..0.8));
                Shape::Cylinder {
                    center: [x, y, base + height / 2.0],
                    radius,
                    height,
                }
            }
        };
        let (lo, hi) = shape.bounds();
        let corners = [(lo[0], lo[1]), (lo[0], hi[1]), (hi[0], lo[1]), (hi[0], hi[1])];
        if corners.iter().any(|(cx, cy)| cx.hypot(*cy) > inner) {
            continue;
        }
        if objects.iter().any(|o| footprint_gap(&o.shape, &shape) < MIN_SEPARATION) {
            continue;
        }
        let i = objects.len();
        objects.push(ObjectSpec {
            class: CLASSES[rng.random_range(0..CLASSES.len())].to_string(),
            panoptic_class: None,
            shape,
            color: COLORS[i % COLORS.len()],
            density: None,
        });
    }
    SceneRecipe {
        scene_id: format!("random-{seed}"),
        room: Room {
            min: [-3.0, -3.0, 0.0],
            max: [3.0, 3.0, 2.6],
        },
        resolution: [320, 240],
        fov_deg: 70.0,
        object_density: 4000.0,
        room_density: 400.0,
        objects,
        cameras: CameraRing {
            count: n_cameras,
            radius: 2.6,
            height: rng.random_range(1.6..2.0),
            center: [0.0, 0.0],
            look_at: [0.0, 0.0, 0.4],
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        },
        noise,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_fixtures_load() {
        assert_eq!(living_room().objects.len(), 8);
        assert!(!vocabulary().groups.is_empty());
        assert_eq!(captions().by_color.len(), 7);
        let reg = living_room_suite().registry();
        living_room_suite().validate(&reg).unwrap();
        assert_eq!(living_room_suite().queries.len(), 20);
        negation_suite().validate(&negation_suite().registry()).unwrap();
    }

    #[test]
    fn random_recipes_are_valid_and_separated() {
        for seed in 0..40 {
            let r = random_recipe(seed, NoiseSpec::default());
            r.validate().unwrap();
            assert!((3..=8).contains(&r.objects.len()));
            assert!((8..=16).contains(&r.cameras.count));
            for (i, a) in r.objects.iter().enumerate() {
                assert!(a.shape.bounds().0[2] >= MIN_ELEVATION);
                for b in &r.objects[i + 1..] {
                    assert!(footprint_gap(&a.shape, &b.shape) >= MIN_SEPARATION);
                }
            }
            assert_eq!(r, random_recipe(seed, NoiseSpec::default()));
        }
    }
}
