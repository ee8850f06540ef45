use std::collections::BTreeMap;

use proptest::prelude::*;
use qsr_core::embedding::{EmbeddingIndex, IndexSide, SearchParams};
use qsr_core::geometry::{min_area_bbox_2d, Aabb3, Point3};
use qsr_core::lifting::{dbscan, DbscanParams};
use qsr_core::nav::{astar, OccupancyGrid};
use qsr_core::scene_graph::GeometricRelationProvider;
use qsr_synth::oracles::{cosine_scan, dbscan_bruteforce, grid_dijkstra, min_area_bruteforce, Partition};
use qsr_synth::truth::relation_between;

fn cloud() -> impl Strategy<Value = Vec<Point3>> {
    // A few blobs plus uniform background, coordinates on a coarse lattice so
    // that exact-eps distances occur.
    (1usize..5, 0usize..120, 10usize..380).prop_flat_map(|(blobs, background, per)| {
        let centers = prop::collection::vec((0i32..40, 0i32..40, 0i32..10), blobs);
        let jitter = prop::collection::vec((-4i32..=4, -4i32..=4, -4i32..=4, 0usize..8), per);
        let bg = prop::collection::vec((0i32..400, 0i32..400, 0i32..100), background);
        (centers, jitter, bg).prop_map(|(centers, jitter, bg)| {
            let mut pts: Vec<Point3> = jitter
                .into_iter()
                .map(|(x, y, z, c)| {
                    let (cx, cy, cz) = centers[c % centers.len()];
                    Point3::new(
                        (cx * 10 + x) as f64 * 0.01,
                        (cy * 10 + y) as f64 * 0.01,
                        (cz * 10 + z) as f64 * 0.01,
                    )
                })
                .collect();
            pts.extend(bg.into_iter().map(|(x, y, z)| Point3::new(x as f64 * 0.01, y as f64 * 0.01, z as f64 * 0.01)));
            pts
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dbscan_matches_bruteforce(pts in cloud(), eps_steps in 1u32..6, min_pts in 1usize..12) {
        prop_assume!(pts.len() <= 500);
        let eps = eps_steps as f64 * 0.02;
        let fast = dbscan(&pts, &DbscanParams { eps, min_pts }).unwrap();
        let fast = Partition::canonical(fast.clusters(), fast.noise());
        prop_assert_eq!(fast, dbscan_bruteforce(&pts, eps, min_pts));
    }

    #[test]
    fn min_area_matches_angle_scan(pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..40), turn in 0.0f64..std::f64::consts::TAU) {
        let calipers = min_area_bbox_2d(&pts).unwrap().area();
        let brute = min_area_bruteforce(&pts, 0.001);
        prop_assert!(calipers <= brute * (1.0 + 1e-9) + 1e-12, "calipers {} brute {}", calipers, brute);
        prop_assert!((calipers - brute).abs() <= 1e-6 * brute.max(1e-12), "calipers {} brute {}", calipers, brute);
        let (c, s) = (turn.cos(), turn.sin());
        let rotated: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (c * x - s * y, s * x + c * y)).collect();
        let turned = min_area_bbox_2d(&rotated).unwrap().area();
        prop_assert!((turned - calipers).abs() <= 1e-6 * calipers.max(1e-12));
    }

    #[test]
    fn search_matches_cosine_scan(
        rows in prop::collection::vec(prop::collection::vec(-3i8..=3, 6), 1..30),
        query in prop::collection::vec(-3i8..=3, 6),
        top_k in 1usize..6,
        threshold in 0.0f64..0.6,
    ) {
        let unit = |v: &[i8]| qsr_core::embedding::normalize(&v.iter().map(|x| f64::from(*x)).collect::<Vec<_>>());
        let mut index = EmbeddingIndex::new("fixture", 6);
        let mut entries = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            let v = unit(r);
            index.insert(IndexSide::Image, i as u32 * 3, v.clone()).unwrap();
            entries.insert(i as u32 * 3, v);
        }
        let q = unit(&query);
        let params = SearchParams { top_k, threshold, band: 0.02 };
        let fast: Vec<(u32, u64)> = index
            .search_vector(&q, IndexSide::Image, &params)
            .unwrap()
            .into_iter()
            .map(|s| (s.object_id, s.score.to_bits()))
            .collect();
        let slow: Vec<(u32, u64)> = cosine_scan(&entries, &q, top_k, 0.02, threshold)
            .into_iter()
            .map(|(id, s)| (id, s.to_bits()))
            .collect();
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn astar_matches_dijkstra(
        w in 2usize..60,
        h in 2usize..60,
        density in 0.0f64..0.45,
        seed in any::<u64>(),
        n_goals in 1usize..4,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut grid = OccupancyGrid::empty([0.0, 0.0], 0.05, w, h, 0.0);
        for y in 0..h {
            for x in 0..w {
                grid.set(x, y, rng.random_bool(density));
            }
        }
        let free: Vec<usize> = (0..w * h).filter(|&i| !grid.occupied[i]).collect();
        prop_assume!(free.len() >= 2);
        let start = free[rng.random_range(0..free.len())];
        let goals: Vec<usize> = (0..n_goals).map(|_| free[rng.random_range(0..free.len())]).collect();
        let reference = grid_dijkstra(&grid.occupied, w, h, start, &goals);
        match (astar(&grid, start, &goals), reference) {
            (Ok((path, cost)), Some(best)) => {
                prop_assert!((cost - best).abs() < 1e-9, "astar {} dijkstra {}", cost, best);
                prop_assert!(path.iter().all(|&i| !grid.occupied[i]));
                prop_assert!(goals.contains(path.last().unwrap()));
            }
            (Err(qsr_core::Error::PathNotFound), None) => {}
            (other, r) => prop_assert!(false, "astar {:?} vs dijkstra {:?}", other.map(|p| p.1), r),
        }
    }

    #[test]
    fn relation_oracle_agrees_with_geometric_provider(
        a in prop::array::uniform6(-20i32..20),
        b in prop::array::uniform6(-20i32..20),
    ) {
        let bx = |v: [i32; 6]| {
            let lo = [v[0].min(v[1]), v[2].min(v[3]), v[4].min(v[5])];
            let hi = [v[0].max(v[1]), v[2].max(v[3]), v[4].max(v[5])];
            Aabb3 {
                min: Point3::new(lo[0] as f64 * 0.05, lo[1] as f64 * 0.05, lo[2] as f64 * 0.05),
                max: Point3::new(hi[0] as f64 * 0.05, hi[1] as f64 * 0.05, hi[2] as f64 * 0.05),
            }
        };
        let (a, b) = (bx(a), bx(b));
        prop_assert_eq!(relation_between(&a, &b), GeometricRelationProvider::default().relation(&a, &b));
    }
}
