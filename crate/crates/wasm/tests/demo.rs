use phnet_wasm::{phc_weight, roc_demo, synthetic_sample};

fn block(g: &phnet_wasm::Grid, k: usize, c: usize, r: usize, s: usize) -> Vec<f32> {
    // rows of output group r, columns of input group s
    let mut out = Vec::new();
    for y in r * c * k..(r + 1) * c * k {
        for x in s * c * k..(s + 1) * c * k {
            out.push(g.values[y * g.width + x]);
        }
    }
    out
}

#[test]
fn quaternion_heatmap_has_hamilton_blocks() {
    let (k, c) = (3, 2);
    let g = phc_weight(4, 4 * c, 4 * c, k, 5).unwrap();
    assert_eq!((g.width, g.height), (4 * c * k, 4 * c * k));
    let b = |r, s| block(&g, k, c, r, s);
    let neg = |v: Vec<f32>| v.into_iter().map(|x| -x).collect::<Vec<_>>();
    for d in 1..4 {
        assert_eq!(b(0, 0), b(d, d));
    }
    assert_eq!(b(1, 0), neg(b(0, 1)));
    assert_eq!(b(2, 0), neg(b(0, 2)));
    assert_eq!(b(3, 0), neg(b(0, 3)));
    assert_eq!(b(1, 2), neg(b(2, 1)));
}

#[test]
fn heatmap_rejects_indivisible_channels() {
    assert!(phc_weight(4, 6, 8, 3, 0).is_err());
    assert!(phc_weight(0, 4, 4, 3, 0).is_err());
    assert!(phc_weight(3, 6, 9, 1, 0).is_ok());
}

fn argmax(v: &[f32], size: usize) -> (f64, f64) {
    let k = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    ((k % size) as f64, (k / size) as f64)
}

#[test]
fn map_peak_follows_the_lesion_under_augmentation() {
    for (i, (h, v, a)) in [(false, false, 0.0), (true, false, 0.0), (false, true, 7.5), (true, true, -9.0)]
        .into_iter()
        .enumerate()
    {
        let s = synthetic_sample(3, i, true, 1.5, 1.0, h, v, a).unwrap();
        assert_eq!(s.label, 1);
        assert_eq!(s.image.len(), s.size * s.size);
        let (x, y) = argmax(&s.map, s.size);
        assert!((x - s.center_x).abs() <= 1.5 && (y - s.center_y).abs() <= 1.5, "{i}: {x},{y} vs {},{}", s.center_x, s.center_y);
    }
}

#[test]
fn horizontal_flip_mirrors_the_center() {
    let a = synthetic_sample(1, 4, true, 1.0, 0.9, false, false, 0.0).unwrap();
    let b = synthetic_sample(1, 4, true, 1.0, 0.9, true, false, 0.0).unwrap();
    assert!((b.center_x - (a.size as f64 - 1.0 - a.center_x)).abs() < 1e-9);
    assert_eq!(a.center_y, b.center_y);
    let s = a.size;
    for y in 0..s {
        for x in 0..s {
            assert_eq!(a.image[y * s + x], b.image[y * s + s - 1 - x]);
        }
    }
}

#[test]
fn roc_demo_tracks_separation() {
    let chance = roc_demo(0.0, 2000, 1).unwrap();
    assert!((chance.auc - 0.5).abs() < 0.03, "{}", chance.auc);
    let wide = roc_demo(6.0, 500, 1).unwrap();
    assert!(wide.auc > 0.999);
    for r in [&chance, &wide] {
        assert_eq!((r.fpr[0], r.tpr[0]), (0.0, 0.0));
        assert_eq!((*r.fpr.last().unwrap(), *r.tpr.last().unwrap()), (1.0, 1.0));
        assert!(r.fpr.windows(2).all(|w| w[0] <= w[1]) && r.tpr.windows(2).all(|w| w[0] <= w[1]));
    }
    assert!(roc_demo(1.0, 0, 1).is_err());
}
