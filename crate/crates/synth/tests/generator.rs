use qsr_core::geometry::{centroid_of, visible_projection, DepthTolerance, Point3};
use qsr_synth::fixtures::{living_room, random_recipe};
use qsr_synth::{generate_scene, NoiseSpec, SynthError};

#[test]
fn zero_objects_is_a_recipe_error() {
    let mut r = random_recipe(1, NoiseSpec::default());
    r.objects.clear();
    assert!(matches!(generate_scene(&r, 1), Err(SynthError::Recipe(_))));
}

#[test]
fn object_outside_room_is_rejected() {
    let mut r = living_room();
    r.room.max[2] = 0.5;
    assert!(matches!(r.validate(), Err(SynthError::Recipe(_))));
}

#[test]
fn visible_object_points_land_on_their_own_instance() {
    let scene = generate_scene(&random_recipe(11, NoiseSpec::default()), 11).unwrap();
    let tol = DepthTolerance::default();
    let mut checked = 0;
    for (i, p) in scene.cloud.points().iter().enumerate() {
        for f in &scene.frames {
            if let Some(proj) = visible_projection(p, f, &tol) {
                let (x, y) = proj.pixel();
                let id = f.instance_mask.get(x, y);
                let expected = scene.truth.point_instance[i].map_or(0, |k| k as u16 + 1);
                assert_eq!(id, expected, "point {i} frame {}", f.frame_id);
                checked += 1;
            }
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn centroids_are_means_of_members() {
    let scene = generate_scene(&living_room(), 3).unwrap();
    for obj in &scene.truth.objects {
        let members: Vec<Point3> = scene
            .cloud
            .points()
            .iter()
            .zip(&scene.truth.point_instance)
            .filter(|(_, k)| **k == Some(obj.id))
            .map(|(p, _)| *p)
            .collect();
        assert_eq!(members.len(), obj.point_count);
        assert_eq!(centroid_of(&members).unwrap(), obj.centroid);
    }
    // the vase rests on the table
    assert!(scene
        .truth
        .relations
        .iter()
        .any(|r| r.src == 1 && r.dst == 0 && r.relation == "on top of"));
}

#[test]
fn corruption_rate_is_binomial() {
    let rate = 0.1;
    let scene = generate_scene(
        &random_recipe(
            12,
            NoiseSpec {
                mask_corruption: rate,
                ..Default::default()
            },
        ),
        12,
    )
    .unwrap();
    let n = (320 * 240) as f64;
    let sd = (rate * (1.0 - rate) / n).sqrt();
    for f in &scene.truth.corrupted_fraction {
        assert!((f - rate).abs() <= 5.0 * sd, "fraction {f}");
    }
}

#[test]
fn every_object_is_seen() {
    for seed in 0..6 {
        let scene = generate_scene(&random_recipe(seed, NoiseSpec::default()), seed).unwrap();
        for obj in &scene.truth.objects {
            assert!(scene.truth.frame_objects.iter().any(|f| f.object_ids.contains(&obj.id)));
        }
    }
}
