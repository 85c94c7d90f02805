mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vslam_core::features::detect::{detect_extrema, DETECTION_BORDER};
use vslam_core::features::{
    assign_orientation, build_scale_space, compute_descriptor, detect_keypoints, extract_features, match_descriptors,
    Descriptor, GrayImage, Keypoint, MatchPair, SiftParams,
};

use common::*;

#[test]
fn constant_image_has_no_keypoints() {
    let img = GrayImage::constant(96, 64, 0.4).unwrap();
    let space = build_scale_space(&img, &SiftParams::default()).unwrap();
    assert!(detect_keypoints(&space).is_empty());
    assert!(extract_features(&img, &SiftParams::default()).unwrap().is_empty());
}

#[test]
fn single_blob_is_localized() {
    let img = gaussian_blob(128, 96, 64.0, 40.0, 4.0);
    let space = build_scale_space(&img, &SiftParams::default()).unwrap();
    let kps = detect_keypoints(&space);
    assert!(!kps.is_empty());
    // every detection belongs to the one blob
    for kp in &kps {
        let r = (kp.u - 64.0).hypot(kp.v - 40.0);
        assert!(r < 12.0, "stray keypoint {kp:?}");
    }
    let strongest = kps
        .iter()
        .max_by(|a, b| a.response.abs().total_cmp(&b.response.abs()))
        .unwrap();
    let r = (strongest.u - 64.0).hypot(strongest.v - 40.0);
    assert!(r <= 1.0, "strongest keypoint {r} px from blob centre");
    assert!(
        (strongest.scale / 4.0).log2().abs() <= 1.0 / 3.0,
        "scale {}",
        strongest.scale
    );
}

#[test]
fn dog_scale_selection_matches_blob_scale() {
    let sigma0 = 4.0;
    let img = gaussian_blob(128, 96, 64.0, 40.0, sigma0);
    let space = build_scale_space(&img, &SiftParams::default()).unwrap();
    let mut best = (0.0, 0.0);
    for oct in &space.octaves {
        let f = space.octave_to_input(oct.index);
        let (x, y) = ((64.0 / f).round() as usize, (40.0 / f).round() as usize);
        for (l, dog) in oct.dogs.iter().enumerate() {
            let val = dog.at(x, y).abs();
            if val > best.0 {
                best = (val, space.level_sigma(l as f64) * f);
            }
        }
    }
    let step = 1.0 / space.params.scales_per_octave as f64;
    let off = (best.1 / sigma0).log2().abs();
    assert!(off <= step + 1e-12, "peak at sigma {} ({off} octaves away)", best.1);
}

#[test]
fn emitted_keypoints_pass_thresholds_when_rechecked() {
    let img = blob_texture(160, 120, 120, 5);
    let params = SiftParams::default();
    let space = build_scale_space(&img, &params).unwrap();
    let kps = detect_keypoints(&space);
    assert!(kps.len() > 20);
    let thr = params.contrast_threshold / params.scales_per_octave as f64;
    let limit = (params.edge_ratio + 1.0).powi(2) / params.edge_ratio;
    for kp in &kps {
        assert!(kp.response.abs() >= thr);
        let f = space.octave_to_input(kp.octave);
        let (x, y) = ((kp.u / f).round() as usize, (kp.v / f).round() as usize);
        let d = &space.octaves[kp.octave].dogs[kp.layer];
        let c = d.at(x, y);
        let dxx = d.at(x + 1, y) - 2.0 * c + d.at(x - 1, y);
        let dyy = d.at(x, y + 1) - 2.0 * c + d.at(x, y - 1);
        let dxy = (d.at(x + 1, y + 1) + d.at(x - 1, y - 1) - d.at(x - 1, y + 1) - d.at(x + 1, y - 1)) / 4.0;
        let det = dxx * dyy - dxy * dxy;
        assert!(det > 0.0);
        assert!((dxx + dyy).powi(2) / det < limit);
        assert!(kp.u >= 0.0 && kp.u < 160.0 && kp.v >= 0.0 && kp.v < 120.0 && kp.scale > 0.0);
    }
    assert!(detect_extrema(&space).iter().all(|e| e.x >= DETECTION_BORDER));
}

fn interior(kp: &Keypoint, w: f64, h: f64, margin: f64) -> bool {
    kp.u >= margin && kp.v >= margin && kp.u < w - margin && kp.v < h - margin
}

#[test]
fn translation_repeatability() {
    let tex = blob_texture(220, 180, 260, 17);
    let (dx, dy) = (7usize, 3usize);
    let (w, h) = (192usize, 160usize);
    let a = crop(&tex, 10, 10, w, h);
    // b(x, y) = a(x - dx, y - dy)
    let b = crop(&tex, 10 - dx, 10 - dy, w, h);
    let params = SiftParams::default();
    let ka = detect_keypoints(&build_scale_space(&a, &params).unwrap());
    let kb = detect_keypoints(&build_scale_space(&b, &params).unwrap());
    let margin = 16.0;
    let mut total = 0;
    let mut found = 0;
    for k in &ka {
        let (su, sv) = (k.u + dx as f64, k.v + dy as f64);
        if !interior(k, w as f64, h as f64, margin) || su >= w as f64 - margin || sv >= h as f64 - margin {
            continue;
        }
        total += 1;
        if kb.iter().any(|q| (q.u - su).hypot(q.v - sv) <= 1.0) {
            found += 1;
        }
    }
    assert!(total >= 30, "too few interior keypoints: {total}");
    let rate = found as f64 / total as f64;
    assert!(rate >= 0.8, "repeatability {rate} ({found}/{total})");
}

fn descriptor_at(img: &GrayImage, u: f64, v: f64, octave: usize, layer: usize) -> Vec<(f64, Descriptor)> {
    let space = build_scale_space(img, &SiftParams::default()).unwrap();
    let f = space.octave_to_input(octave);
    let kp = Keypoint {
        u,
        v,
        scale: space.level_sigma(layer as f64) * f,
        orientation: 0.0,
        response: 0.0,
        octave,
        layer,
    };
    assign_orientation(&space, &kp)
        .unwrap()
        .into_iter()
        .map(|k| (k.orientation, compute_descriptor(&space, &k).unwrap()))
        .collect()
}

#[test]
fn descriptor_rotation_invariance() {
    let tex = blob_texture(129, 129, 150, 23);
    let rot = rotate90(&tex);
    let a = descriptor_at(&tex, 64.0, 64.0, 1, 2);
    let b = descriptor_at(&rot, 64.0, 64.0, 1, 2);
    let best = a
        .iter()
        .flat_map(|(_, da)| b.iter().map(move |(_, db)| da.distance(db)))
        .fold(f64::INFINITY, f64::min);
    assert!(best < 0.45, "rotated descriptor distance {best}");

    // a different neighbourhood of the same texture is far away
    let other = descriptor_at(&tex, 40.0, 85.0, 1, 2);
    let unrelated = a
        .iter()
        .flat_map(|(_, da)| other.iter().map(move |(_, db)| da.distance(db)))
        .fold(f64::INFINITY, f64::min);
    assert!(unrelated > 0.6, "unrelated distance {unrelated}");

    // orientation follows the rotation of the image content
    let (oa, ob) = (a[0].0, b.iter().map(|x| x.0).collect::<Vec<_>>());
    let expected = vslam_core::geom::normalize_angle(oa + PI / 2.0);
    assert!(ob
        .iter()
        .any(|o| vslam_core::geom::normalize_angle(o - expected).abs() < 5f64.to_radians()));
}

#[test]
fn identical_patches_identical_descriptors() {
    let patch = blob_texture(48, 48, 40, 3);
    let canvas = GrayImage::from_fn(160, 96, |x, y| {
        if (16..64).contains(&x) && (24..72).contains(&y) {
            patch.get(x - 16, y - 24)
        } else if (96..144).contains(&x) && (24..72).contains(&y) {
            patch.get(x - 96, y - 24)
        } else {
            0.5
        }
    })
    .unwrap();
    let a = descriptor_at(&canvas, 40.0, 48.0, 0, 2);
    let b = descriptor_at(&canvas, 120.0, 48.0, 0, 2);
    assert_eq!(a.len(), b.len());
    for ((oa, da), (ob, db)) in a.iter().zip(&b) {
        assert_eq!(oa, ob);
        assert!(da.distance(db) < 1e-9);
    }
}

#[test]
fn every_descriptor_satisfies_norm_and_clamp() {
    let img = blob_texture(160, 120, 140, 9);
    let feats = extract_features(&img, &SiftParams::default()).unwrap();
    assert!(feats.len() > 20);
    for f in &feats {
        let n = f.descriptor.norm();
        assert!((n - 1.0).abs() <= 1e-6);
        assert!(f.descriptor.values().iter().all(|&v| (0.0..=0.2 + 1e-6).contains(&v)));
    }
}

#[test]
fn extraction_is_deterministic_across_thread_counts() {
    let img = blob_texture(160, 120, 140, 31);
    let params = SiftParams::default();
    let par = extract_features(&img, &params).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let ser = pool.install(|| extract_features(&img, &params).unwrap());
    assert_eq!(par, ser);
    let again = extract_features(&img, &params).unwrap();
    assert_eq!(par, again);
}

#[test]
fn identical_lists_match_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d: Vec<Descriptor> = (0..10).map(|_| random_descriptor(&mut rng)).collect();
    let m = match_descriptors(&d, &d, 0.8);
    let pairs: Vec<(usize, usize)> = m.iter().map(|p| (p.index_a, p.index_b)).collect();
    assert_eq!(pairs, (0..10).map(|i| (i, i)).collect::<Vec<_>>());
    assert!(match_descriptors(&d, &[], 0.8).is_empty());
    assert!(match_descriptors(&[], &d, 0.8).is_empty());
}

/// Double-loop reference: nearest by lowest index on ties, ratios against the
/// runner-up over all other entries, mutual best, ratio test on both sides.
fn brute_force_matches(a: &[Descriptor], b: &[Descriptor], t: f64) -> Vec<(usize, usize)> {
    let dist = |i: usize, j: usize| a[i].distance(&b[j]);
    let ratio = |best: f64, others: Vec<f64>| -> Option<f64> {
        let second = others.into_iter().fold(f64::INFINITY, f64::min);
        if second.is_infinite() {
            Some(0.0)
        } else if second == 0.0 {
            Some(1.0)
        } else {
            Some(best / second)
        }
    };
    let mut out = Vec::new();
    for i in 0..a.len() {
        let mut bj = 0;
        for j in 0..b.len() {
            if dist(i, j) < dist(i, bj) {
                bj = j;
            }
        }
        if b.is_empty() {
            continue;
        }
        let mut bi = 0;
        for k in 0..a.len() {
            if dist(k, bj) < dist(bi, bj) {
                bi = k;
            }
        }
        if bi != i {
            continue;
        }
        let ra = ratio(
            dist(i, bj),
            (0..b.len()).filter(|&j| j != bj).map(|j| dist(i, j)).collect(),
        )
        .unwrap();
        let rb = ratio(
            dist(i, bj),
            (0..a.len()).filter(|&k| k != i).map(|k| dist(k, bj)).collect(),
        )
        .unwrap();
        if ra <= t && rb <= t {
            out.push((i, bj));
        }
    }
    out
}

#[test]
fn matcher_equals_brute_force_with_duplicates() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let a: Vec<Descriptor> = (0..50).map(|_| random_descriptor(&mut rng)).collect();
    let mut b: Vec<Descriptor> = Vec::new();
    for i in (0..50).step_by(2) {
        b.push(a[i].clone());
    }
    for i in (0..50).step_by(7) {
        b.push(a[i].clone()); // duplicated subset
    }
    for _ in 0..10 {
        b.push(random_descriptor(&mut rng));
    }
    for t in [0.6, 0.8, 1.0] {
        let got: Vec<(usize, usize)> = match_descriptors(&a, &b, t)
            .iter()
            .map(|m| (m.index_a, m.index_b))
            .collect();
        assert_eq!(got, brute_force_matches(&a, &b, t), "threshold {t}");
    }
}

fn unordered(m: &[MatchPair], swap: bool) -> Vec<(usize, usize)> {
    let mut v: Vec<(usize, usize)> = m
        .iter()
        .map(|p| {
            if swap {
                (p.index_b, p.index_a)
            } else {
                (p.index_a, p.index_b)
            }
        })
        .collect();
    v.sort();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matching_is_symmetric(seed in 0u64..10_000, na in 0usize..20, nb in 0usize..20, t in 0.3f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<Descriptor> = (0..na).map(|_| random_descriptor(&mut rng)).collect();
        let mut b: Vec<Descriptor> = (0..nb).map(|_| random_descriptor(&mut rng)).collect();
        // share some entries so there is something to match
        for (i, d) in a.iter().enumerate().take(nb / 2) {
            b[i * 2 % nb.max(1)] = d.clone();
        }
        let ab = match_descriptors(&a, &b, t);
        let ba = match_descriptors(&b, &a, t);
        prop_assert_eq!(unordered(&ab, false), unordered(&ba, true));
        for m in &ab {
            prop_assert!(m.ratio >= 0.0 && m.ratio <= 1.0);
        }
    }
}
