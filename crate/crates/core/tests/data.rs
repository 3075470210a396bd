use std::collections::{HashMap, HashSet};
use std::fs;

use phnet_core::data::augment::AugmentParams;
use phnet_core::data::image_io::{read_image, read_pgm, read_png, write_pgm, write_png_map};
use phnet_core::data::split::split_stratified;
use phnet_core::data::synthetic::{generate_in_memory, generate_synthetic, read_lesions, SyntheticConfig};
use phnet_core::data::{preprocess, stack_input, unstack_input, AugmentedSample, Manifest, ManifestRecord, Split};
use phnet_core::{Error, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bilinear resize written from the textbook formula: output pixel `i`
/// samples source coordinate `(i + 0.5)·in/out − 0.5`, clamped to the image.
fn naive_resize(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            let y = ((i as f64 + 0.5) * h as f64 / oh as f64 - 0.5).clamp(0.0, (h - 1) as f64);
            let x = ((j as f64 + 0.5) * w as f64 / ow as f64 - 0.5).clamp(0.0, (w - 1) as f64);
            let (y0, x0) = (y.floor() as usize, x.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (y - y0 as f64, x - x0 as f64);
            out[i * ow + j] = (1.0 - fy) * ((1.0 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1])
                + fy * ((1.0 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1]);
        }
    }
    out
}

#[test]
fn downsampled_checkerboard_matches_naive_bilinear() {
    let n = 768;
    // 3-pixel cells do not align with the factor of two, so the output is not flat
    let board: Vec<f64> = (0..n * n).map(|k| (((k / n) / 3 + (k % n) / 3) % 2) as f64).collect();
    let img = Tensor::from_vec([1, 1, n, n], board.iter().map(|&v| v as f32).collect()).unwrap();
    let got = preprocess(&img, 384).unwrap();
    let resized = naive_resize(&board, n, n, 384, 384);
    let mean = resized.iter().sum::<f64>() / resized.len() as f64;
    let std = (resized.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / resized.len() as f64).sqrt();
    let worst = got.data().iter().zip(&resized).map(|(&g, r)| (g as f64 - (r - mean) / std).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn rgb_channels_are_standardized_separately() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let img = Tensor::<f32>::from_fn([1, 3, 40, 40], |[_, c, _, _]| c as f32 * 10.0 + r.gen::<f32>() * (c + 1) as f32);
    let out = preprocess(&img, 40).unwrap();
    for p in out.data().chunks_exact(1600) {
        let m = p.iter().map(|&v| v as f64).sum::<f64>() / 1600.0;
        let s = (p.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / 1600.0).sqrt();
        assert!(m.abs() < 1e-5 && (s - 1.0).abs() < 1e-5);
    }
}

fn centroid(plane: &[f32], w: usize) -> (f64, f64) {
    let total: f64 = plane.iter().map(|&v| v as f64).sum();
    let (mut x, mut y) = (0.0, 0.0);
    for (k, &v) in plane.iter().enumerate() {
        x += (k % w) as f64 * v as f64;
        y += (k / w) as f64 * v as f64;
    }
    (x / total, y / total)
}

fn blob(size: usize, cx: f64, cy: f64, sigma: f64) -> Vec<f32> {
    (0..size * size)
        .map(|k| {
            let (x, y) = ((k % size) as f64, (k / size) as f64);
            (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp() as f32
        })
        .collect()
}

#[test]
fn rotation_moves_the_centroid_where_predicted() {
    let size = 48;
    let (cx, cy) = (33.0, 14.0);
    for angle in [-9.5, -4.0, 3.0, 9.9] {
        for (hflip, vflip) in [(false, false), (true, false), (false, true), (true, true)] {
            let img = Tensor::from_vec([1, 1, size, size], blob(size, cx, cy, 2.0)).unwrap();
            let t = AugmentParams { hflip, vflip, angle_deg: angle };
            let out = t.apply(&img);
            let (gx, gy) = centroid(out.data(), size);
            let (ex, ey) = t.forward_point(cx, cy, size, size);
            assert!((gx - ex).abs() <= 1.0 && (gy - ey).abs() <= 1.0, "{t:?}: {gx},{gy} vs {ex},{ey}");
        }
    }
}

#[test]
fn positive_angle_turns_counter_clockwise_on_screen() {
    // a point right of center moves up (smaller y)
    let t = AugmentParams { angle_deg: 90.0, ..AugmentParams::IDENTITY };
    let (x, y) = t.forward_point(20.0, 10.0, 21, 21);
    assert!((x - 10.0).abs() < 1e-12 && (y - 0.0).abs() < 1e-12);
}

fn argmax(plane: &[f32], w: usize) -> (f64, f64) {
    let k = (0..plane.len()).max_by(|&a, &b| plane[a].total_cmp(&plane[b])).unwrap();
    ((k % w) as f64, (k / w) as f64)
}

#[test]
fn image_and_map_stay_registered_over_500_draws() {
    let size = 40;
    let mut r = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let (px, py) = (r.gen_range(8..32), r.gen_range(8..32));
        let mut delta = vec![0.0f32; size * size];
        delta[py * size + px] = 1.0;
        let map = blob(size, px as f64, py as f64, 3.0);
        let image = Tensor::from_vec([1, 1, size, size], delta).unwrap();
        let sample = AugmentedSample::new(image, Tensor::from_vec([1, 1, size, size], map).unwrap(), 0, "d", None).unwrap();
        let t = AugmentParams::draw(&mut r);
        let out = t.apply(&stack_input(&sample).unwrap());
        let (img, map) = unstack_input(&out).unwrap();
        let (ix, iy) = argmax(img.data(), size);
        let (mx, my) = argmax(map.data(), size);
        worst = worst.max((ix - mx).abs()).max((iy - my).abs());
    }
    assert!(worst <= 1.0, "peak displacement {worst}");
}

#[test]
fn augmentation_draws_cover_the_declared_ranges() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let draws: Vec<AugmentParams> = (0..4000).map(|_| AugmentParams::draw(&mut r)).collect();
    let h = draws.iter().filter(|d| d.hflip).count() as f64 / 4000.0;
    let v = draws.iter().filter(|d| d.vflip).count() as f64 / 4000.0;
    assert!((h - 0.5).abs() < 0.03 && (v - 0.5).abs() < 0.03);
    assert!(draws.iter().all(|d| d.angle_deg > -10.0 && d.angle_deg < 10.0));
    assert!(draws.iter().any(|d| d.angle_deg > 9.0) && draws.iter().any(|d| d.angle_deg < -9.0));
}

#[test]
fn full_fidelity_maps_peak_on_the_lesion() {
    let cfg = SyntheticConfig { count: 200, fidelity: 1.0, seed: 4, ..Default::default() };
    let corpus = generate_in_memory(&cfg).unwrap();
    for s in corpus.iter().filter(|s| s.label == 1) {
        let (x, y) = argmax(s.map.data(), cfg.size);
        assert!((x - s.lesion.cx).abs() <= 1.0 && (y - s.lesion.cy).abs() <= 1.0, "{}", s.id);
    }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn zero_fidelity_maps_carry_no_location() {
    let cfg = SyntheticConfig { count: 600, fidelity: 0.0, seed: 5, ..Default::default() };
    let corpus = generate_in_memory(&cfg).unwrap();
    let (mut lx, mut ly, mut mx, mut my) = (vec![], vec![], vec![], vec![]);
    for s in &corpus {
        let (x, y) = centroid(s.map.data(), cfg.size);
        let (ax, ay) = argmax(s.map.data(), cfg.size);
        lx.push(s.lesion.cx);
        ly.push(s.lesion.cy);
        mx.push(x + ax);
        my.push(y + ay);
    }
    let (cx, cy) = (correlation(&lx, &mx), correlation(&ly, &my));
    assert!(cx.abs() < 0.1 && cy.abs() < 0.1, "{cx} {cy}");
}

#[test]
fn generated_corpus_is_byte_identical_on_rerun() {
    let cfg = SyntheticConfig { count: 40, seed: 9, ..Default::default() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_synthetic(&cfg, a.path()).unwrap();
    generate_synthetic(&cfg, b.path()).unwrap();
    let mut files = 0;
    for sub in ["", "images", "maps"] {
        for entry in fs::read_dir(a.path().join(sub)).unwrap() {
            let p = entry.unwrap().path();
            if p.is_file() {
                let q = b.path().join(p.strip_prefix(a.path()).unwrap());
                assert_eq!(fs::read(&p).unwrap(), fs::read(&q).unwrap(), "{}", p.display());
                files += 1;
            }
        }
    }
    assert_eq!(files, 2 + 2 * 40);
    let manifest = Manifest::read(&a.path().join("manifest.csv")).unwrap();
    assert_eq!(manifest.records.len(), 40);
    assert_eq!(manifest.records.iter().filter(|r| r.label == 1).count(), 20);
    assert_eq!(manifest.count(None, 1), 0, "every record gets a split");
    let truth = read_lesions(&a.path().join("lesions.csv")).unwrap();
    assert_eq!(truth.len(), 40);
    let other = SyntheticConfig { seed: 10, ..cfg };
    let c = tempfile::tempdir().unwrap();
    generate_synthetic(&other, c.path()).unwrap();
    assert_ne!(fs::read(a.path().join("lesions.csv")).unwrap(), fs::read(c.path().join("lesions.csv")).unwrap());
}

#[test]
fn infeasible_geometry_is_a_config_error() {
    let cfg = SyntheticConfig { size: 10, radius: [4.0, 12.0], ..Default::default() };
    assert!(matches!(generate_in_memory(&cfg), Err(Error::Config(_))));
}

fn records(labels: &[usize], patients: Option<&[usize]>) -> Vec<ManifestRecord> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| ManifestRecord {
            id: format!("r{i}"),
            image: format!("img/{i}.png"),
            map: None,
            label,
            patient: patients.map(|p| format!("p{}", p[i])),
            split: None,
        })
        .collect()
}

fn tally(recs: &[ManifestRecord]) -> HashMap<(Split, usize), usize> {
    let mut t = HashMap::new();
    for r in recs {
        *t.entry((r.split.unwrap(), r.label)).or_insert(0) += 1;
    }
    t
}

#[test]
fn hundred_balanced_records_split_thirty_ten_ten() {
    let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
    let mut recs = records(&labels, None);
    split_stratified(&mut recs, [0.6, 0.2, 0.2], false, 1).unwrap();
    let t = tally(&recs);
    for label in 0..2 {
        assert_eq!([t[&(Split::Train, label)], t[&(Split::Val, label)], t[&(Split::Test, label)]], [30, 10, 10]);
    }
}

#[test]
fn patient_images_share_a_split() {
    // one patient with five images among many singletons
    let mut patients: Vec<usize> = (0..60).collect();
    patients[..5].fill(0);
    let labels: Vec<usize> = (0..60).map(|i| usize::from(i >= 30)).collect();
    let mut recs = records(&labels, Some(&patients));
    split_stratified(&mut recs, [0.6, 0.2, 0.2], true, 2).unwrap();
    let splits: HashSet<_> = recs[..5].iter().map(|r| r.split.unwrap()).collect();
    assert_eq!(splits.len(), 1);
    Manifest::new(recs).validate().unwrap();
}

#[test]
fn too_few_records_cannot_be_stratified() {
    let mut recs = records(&[0, 0, 0, 0, 1, 1], None);
    assert!(matches!(split_stratified(&mut recs, [0.6, 0.2, 0.2], false, 0), Err(Error::Stratification(_))));
    let mut recs = records(&[0, 1, 0, 1], None);
    assert!(matches!(split_stratified(&mut recs, [0.6, 0.2, 0.3], false, 0), Err(Error::Config(_))));
}

proptest! {
    #[test]
    fn stratified_fractions_hold(n0 in 3usize..80, n1 in 3usize..80, seed in any::<u64>()) {
        let labels: Vec<usize> = (0..n0).map(|_| 0).chain((0..n1).map(|_| 1)).collect();
        let mut recs = records(&labels, None);
        split_stratified(&mut recs, [0.6, 0.2, 0.2], false, seed).unwrap();
        let t = tally(&recs);
        let total = (n0 + n1) as f64;
        for split in Split::ALL {
            let size: usize = (0..2).map(|l| t.get(&(split, l)).copied().unwrap_or(0)).sum();
            prop_assert!(size > 0);
            for (label, count) in [(0, n0), (1, n1)] {
                let in_split = t.get(&(split, label)).copied().unwrap_or(0) as f64;
                let dev = (in_split / size as f64 - count as f64 / total).abs();
                prop_assert!(dev <= 1.0 / size as f64 + 1e-12, "{split:?} label {label}: {dev}");
            }
        }
        let mut again = records(&labels, None);
        split_stratified(&mut again, [0.6, 0.2, 0.2], false, seed).unwrap();
        prop_assert_eq!(recs, again);
    }

    #[test]
    fn patient_sets_are_disjoint(seed in any::<u64>(), groups in 12usize..40) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut patients = Vec::new();
        let mut labels = Vec::new();
        for p in 0..groups {
            let label = p % 2;
            for _ in 0..r.gen_range(1..=5) {
                patients.push(p);
                labels.push(label);
            }
        }
        let mut recs = records(&labels, Some(&patients));
        split_stratified(&mut recs, [0.6, 0.2, 0.2], true, seed).unwrap();
        let mut owner: HashMap<String, Split> = HashMap::new();
        for rec in &recs {
            let prev = owner.insert(rec.patient.clone().unwrap(), rec.split.unwrap());
            prop_assert!(prev.is_none() || prev == rec.split);
        }
    }
}

#[test]
fn pgm_round_trips_at_8_and_16_bits() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let img = Tensor::<f32>::from_fn([1, 1, 13, 17], |_| r.gen());
    for (sixteen, tol) in [(false, 0.5 / 255.0), (true, 0.5 / 65535.0)] {
        let p = dir.path().join(format!("x{sixteen}.pgm"));
        write_pgm(&p, &img, sixteen).unwrap();
        let back = read_pgm(&p).unwrap();
        assert_eq!(back.shape(), img.shape());
        assert!(back.max_abs_diff(&img) <= tol + 1e-7);
        assert_eq!(read_image(&p).unwrap(), back);
    }
}

#[test]
fn ascii_pgm_with_comments_parses() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.pgm");
    fs::write(&p, "P2\n# a comment\n3 2\n# another\n4\n0 1 2\n3 4 0\n").unwrap();
    let t = read_pgm(&p).unwrap();
    assert_eq!(t.shape().0, [1, 1, 2, 3]);
    assert_eq!(t.data(), &[0.0, 0.25, 0.5, 0.75, 1.0, 0.0]);
}

#[test]
fn png_maps_round_trip_within_one_level() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let map = Tensor::<f32>::from_fn([1, 1, 21, 9], |_| r.gen());
    let p = dir.path().join("m.png");
    write_png_map(&p, &map).unwrap();
    let back = read_png(&p).unwrap();
    assert_eq!(back.shape(), map.shape());
    assert!(back.max_abs_diff(&map) <= 1.0 / 255.0);
}

#[test]
fn malformed_images_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.pgm");
    fs::write(&p, "P5\n3 3\n255\nxy").unwrap();
    assert!(read_image(&p).is_err());
    assert!(read_image(&dir.path().join("missing.png")).is_err());
}

#[test]
fn manifest_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut recs = records(&[0, 1, 1, 0, 1, 0, 0, 1, 1, 0], Some(&[0, 0, 1, 2, 3, 4, 5, 6, 7, 8]));
    recs[3].map = Some("maps/3.png".into());
    recs[4].patient = None;
    split_stratified(&mut recs, [0.6, 0.2, 0.2], false, 3).unwrap_or(());
    recs[9].split = None;
    let m = Manifest::new(recs);
    let p = dir.path().join("m.csv");
    m.write(&p).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("id,image,map,label,patient,split\n"));
    assert_eq!(Manifest::read(&p).unwrap(), m);
}

#[test]
fn manifest_rejects_bad_content() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    for body in [
        "id,image,label\nx,a.png,0\n",
        "id,image,map,label,patient,split\nx,a.png,,2,,\n",
        "id,image,map,label,patient,split\nx,a.png,,0,,train\nx,b.png,,1,,val\n",
        "id,image,map,label,patient,split\nx,a.png,,0,p,train\ny,b.png,,1,p,test\n",
        "id,image,map,label,patient,split\nx,a.png,,0,,holdout\n",
    ] {
        fs::write(&p, body).unwrap();
        assert!(Manifest::read(&p).is_err(), "{body}");
    }
}

#[test]
fn stack_then_unstack_is_identity() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let image = Tensor::randn([1, 3, 6, 5], &mut r);
    let map = Tensor::from_fn([1, 1, 6, 5], |_| r.gen::<f32>());
    let s = AugmentedSample::new(image.clone(), map.clone(), 1, "a", None).unwrap();
    let stacked = stack_input(&s).unwrap();
    assert_eq!(stacked.shape().0, [1, 4, 6, 5]);
    assert_eq!(stacked.channel_slice(3..4).unwrap(), map);
    assert_eq!(unstack_input(&stacked).unwrap(), (image, map));
    let zero = stack_input(&s.with_zero_map()).unwrap();
    assert!(zero.channel_slice(3..4).unwrap().data().iter().all(|&v| v == 0.0));
}
