use fpo_core::encoding::{decode_value, encode_comp, encode_log, scaling_ratio};
use fpo_core::metrics::{psnr, ssim};
use fpo_core::octree::{assemble_fpo, FramePlenOctree, Structure, VoxelCoord};
use fpo_core::render::render_pixel;
use fpo_core::signal::{compress, max_components, reconstruct, reconstruct_all};
use fpo_core::{sh, Bounds, Encoding, EncodingConfig, FourierPlenOctree, Image, Ray, RenderParams, TimeSignal, Vec3};
use proptest::prelude::*;

fn codes(depth: u32, raw: Vec<(u16, u16, u16)>) -> Vec<u64> {
    let side = 1u16 << depth;
    let mut c: Vec<u64> = raw.into_iter().map(|(x, y, z)| VoxelCoord::new(x % side, y % side, z % side).morton()).collect();
    c.sort_unstable();
    c.dedup();
    c
}

fn frame(depth: u32, codes: Vec<u64>, sigma: impl Fn(usize) -> f64, rgb: [f64; 3]) -> FramePlenOctree {
    let s = Structure::from_sorted_codes(depth, codes).unwrap();
    let n = s.leaf_count();
    let mut z = vec![0.0; 27];
    sh::constant_color_coeffs(rgb, 9, &mut z);
    FramePlenOctree::new(s, Bounds::new(Vec3::ZERO, 1.0), 9, (0..n).map(sigma).collect(), z.repeat(n)).unwrap()
}

fn ray_from(o: (f64, f64, f64), d: (f64, f64, f64)) -> Option<Ray> {
    let d = Vec3::new(d.0, d.1, d.2);
    (d.norm() > 1e-3).then(|| Ray::new(Vec3::new(o.0, o.1, o.2), d.normalized(), 0.0, 100.0).unwrap())
}

proptest! {
    #[test]
    fn full_rank_reconstruction_is_exact(xs in prop::collection::vec(-1e3f64..1e3, 1..64)) {
        let s = TimeSignal::new(xs.clone()).unwrap();
        let back = reconstruct_all(&compress(&s, max_components(xs.len())).unwrap());
        for (a, b) in xs.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn impulse_peak_scales_by_ratio_anywhere(frames in 1usize..70, pos in 0usize..70, kk in 0usize..140, h in 0.1f64..500.0) {
        let pos = pos % frames;
        let k = 1 + 2 * (kk % frames);
        let mut v = vec![0.0; frames];
        v[pos] = h;
        let peak = reconstruct(&compress(&TimeSignal::new(v).unwrap(), k).unwrap(), pos);
        prop_assert!((peak / h - scaling_ratio(k, frames)).abs() < 1e-9);
    }

    #[test]
    fn log_encoding_roundtrips(sigma in 0.0f64..1e4) {
        let y = encode_log(sigma).unwrap();
        prop_assert!(y >= 0.0);
        prop_assert!((decode_value(y, true) - sigma).abs() <= 1e-9 * (1.0 + sigma));
    }

    #[test]
    fn decoded_density_is_nonnegative(y in -50.0f64..50.0, log in any::<bool>()) {
        prop_assert!(decode_value(y, log) >= 0.0);
    }

    #[test]
    fn comp_keeps_the_mean_when_zeros_present(
        xs in prop::collection::vec(0.0f64..100.0, 2..40),
        zero in 0usize..40,
        kk in 0usize..80,
    ) {
        let mut xs = xs;
        let n = xs.len();
        xs[zero % n] = 0.0;
        let k = 1 + kk % (2 * n - 1);
        let s = TimeSignal::new(xs).unwrap();
        let e = encode_comp(&s, k, 1e-8);
        prop_assert!((e.mean() - s.mean()).abs() <= 1e-9 * (1.0 + s.mean().abs()));
    }

    #[test]
    fn structure_lookup_and_node_table_roundtrip(depth in 1u32..7, raw in prop::collection::vec(any::<(u16, u16, u16)>(), 0..300)) {
        let c = codes(depth, raw);
        let s = Structure::from_sorted_codes(depth, c.clone()).unwrap();
        prop_assert_eq!(s.leaf_count(), c.len());
        for (i, &code) in c.iter().enumerate() {
            prop_assert_eq!(s.lookup(VoxelCoord::from_morton(code)), Some(i as u32));
            prop_assert_eq!(s.leaf_coord(i as u32).morton(), code);
        }
        let again = Structure::from_nodes(depth, s.nodes().to_vec(), s.leaf_count()).unwrap();
        prop_assert_eq!(again, s);
    }

    #[test]
    fn traversal_segments_are_ordered_and_inside_their_leaves(
        depth in 1u32..6,
        raw in prop::collection::vec(any::<(u16, u16, u16)>(), 1..200),
        o in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
        d in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
    ) {
        let Some(ray) = ray_from(o, d) else { return Ok(()) };
        let s = Structure::from_sorted_codes(depth, codes(depth, raw)).unwrap();
        let b = Bounds::new(Vec3::new(0.1, -0.2, 0.05), 1.3);
        let segs = s.traverse(&b, &ray);
        for (i, seg) in segs.iter().enumerate() {
            prop_assert!(seg.enter < seg.exit);
            if i > 0 {
                prop_assert!(segs[i - 1].exit <= seg.enter + 1e-12);
            }
            let (lo, hi) = b.voxel_box(s.leaf_coord(seg.leaf), depth);
            let mid = ray.at(0.5 * (seg.enter + seg.exit));
            for a in 0..3 {
                prop_assert!(mid[a] >= lo[a] - 1e-9 && mid[a] <= hi[a] + 1e-9);
            }
        }
    }

    #[test]
    fn rendering_stays_in_range(
        raw in prop::collection::vec(any::<(u16, u16, u16)>(), 1..100),
        sig in prop::collection::vec(0.0f64..50.0, 100),
        rgb in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
        bg in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
        o in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
        d in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
    ) {
        let Some(ray) = ray_from(o, d) else { return Ok(()) };
        let f = frame(3, codes(3, raw), |i| sig[i], [rgb.0, rgb.1, rgb.2]);
        let exact = render_pixel(&f, &ray, 0, &RenderParams { transmittance_cutoff: 0.0, background: [bg.0, bg.1, bg.2], count_color_evals: true });
        let cut = render_pixel(&f, &ray, 0, &RenderParams { transmittance_cutoff: 1e-3, background: [bg.0, bg.1, bg.2], count_color_evals: true });
        prop_assert!((0.0..=1.0).contains(&exact.opacity));
        for ch in 0..3 {
            prop_assert!(exact.rgb[ch] >= -1e-12 && exact.rgb[ch] <= 1.0 + 1e-12);
            prop_assert!((exact.rgb[ch] - cut.rgb[ch]).abs() <= 2e-3);
        }
        prop_assert!(cut.color_evals <= exact.color_evals);
    }

    #[test]
    fn full_rank_fpo_reproduces_every_frame(frames in 1usize..6, raw in prop::collection::vec(any::<(u16, u16, u16)>(), 1..60), seed in 0u64..1000) {
        let c = codes(2, raw);
        let trees: Vec<FramePlenOctree> = (0..frames)
            .map(|t| frame(2, c.clone(), |i| ((i as u64 * 7 + t as u64 * 13 + seed) % 11) as f64, [0.5, 0.2, 0.8]))
            .collect();
        let k = max_components(frames);
        let fpo: FourierPlenOctree<f64> = assemble_fpo(&trees, &EncodingConfig::new(Encoding::None, k, k)).unwrap();
        for (t, tree) in trees.iter().enumerate() {
            for leaf in 0..tree.leaf_count() {
                prop_assert!((fpo.density(leaf as u32, t) - tree.sigma[leaf]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn metrics_are_symmetric_and_reflexive(px in prop::collection::vec((0.0f32..1.0, 0.0f32..1.0, 0.0f32..1.0), 16 * 16), noise in prop::collection::vec(-0.1f32..0.1, 16 * 16)) {
        let a = Image::from_pixels(16, 16, px.iter().map(|p| [p.0, p.1, p.2]).collect()).unwrap();
        let b = Image::from_pixels(16, 16, px.iter().zip(&noise).map(|(p, n)| [(p.0 + n).clamp(0.0, 1.0), p.1, p.2]).collect()).unwrap();
        prop_assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        prop_assert!((psnr(&a, &b).unwrap() - psnr(&b, &a).unwrap()).abs() < 1e-12 || psnr(&a, &b).unwrap().is_infinite());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }
}
