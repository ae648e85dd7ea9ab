use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terrasense::terrain::{generate_world, presets, render_texture, TerrainGrid, TerrainTexture};
use terrasense::vision::{patch_feature, Feature, Standardizer, PATCH};

const PX_PER_M: f64 = 80.0;

fn dist(a: &Feature, b: &Feature) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>().sqrt()
}

/// Feature of an 8×8 patch at a random offset inside cell `i`.
fn cell_patch(grid: &TerrainGrid, tex: &TerrainTexture, i: usize, rng: &mut ChaCha8Rng) -> Feature {
    let side = (grid.cell_size_m * PX_PER_M).round() as usize;
    let (cx, cy) = (i % grid.width, i / grid.width);
    let x = cx * side + rng.random_range(0..=side - PATCH);
    let y = cy * side + rng.random_range(0..=side - PATCH);
    patch_feature(&tex.image, x, y)
}

fn percentile(mut xs: Vec<f64>, p: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[((xs.len() - 1) as f64 * p).round() as usize]
}

#[test]
fn texture_tracks_class_not_friction() {
    let grid = generate_world(&presets::default_world_spec(20.0, 20.0), 3).unwrap();
    let tex = render_texture(&grid, PX_PER_M, grid.seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = grid.cells.len();
    // distances are taken in the standardized space the vision head sees
    let sample: Vec<Feature> = (0..4000).map(|_| cell_patch(&grid, &tex, rng.random_range(0..n), &mut rng)).collect();
    let st = Standardizer::fit(sample.iter());
    let pair = |i: usize, j: usize, rng: &mut ChaCha8Rng| {
        dist(&st.apply(&cell_patch(&grid, &tex, i, rng)), &st.apply(&cell_patch(&grid, &tex, j, rng)))
    };
    let (mut same_cell, mut same_class, mut other_class) = (vec![], vec![], vec![]);
    while same_cell.len() < 1000 {
        let i = rng.random_range(0..n);
        same_cell.push(pair(i, i, &mut rng));
    }
    while same_class.len() < 1000 || other_class.len() < 1000 {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        let (a, b) = (grid.cells[i], grid.cells[j]);
        let d = pair(i, j, &mut rng);
        if a.class_id == b.class_id {
            let width = grid.class(a.class_id).unwrap().mu_range.width();
            if (a.mu - b.mu).abs() > 0.25 * width && same_class.len() < 1000 {
                same_class.push(d);
            }
        } else if other_class.len() < 1000 {
            other_class.push(d);
        }
    }
    let threshold = percentile(same_cell, 0.95);
    let same_median = percentile(same_class, 0.5);
    let other_mean = other_class.iter().sum::<f64>() / other_class.len() as f64;
    assert!(same_median < threshold, "same-class median {same_median} vs threshold {threshold}");
    assert!(other_mean > threshold, "cross-class mean {other_mean} vs threshold {threshold}");
}
