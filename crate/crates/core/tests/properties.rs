use g2hf::image::Image;
use g2hf::objective::{bce_loss, f_measure, fm_loss, iou_loss, mae_metric, BETA2};
use g2hf::ops;
use g2hf::{ConvParams, ModelWeights, Tensor};
use proptest::prelude::*;

fn tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-10.0..10.0f64, n).prop_map(move |d| Tensor::new(&shape, d).unwrap())
}

/// `(x, r)` with `x: [c, r*h, r*w]`.
fn shuffle_case() -> impl Strategy<Value = (Tensor, usize)> {
    (prop::sample::select(vec![1usize, 2, 3, 4, 6]), 1..4usize, 1..4usize, 1..4usize)
        .prop_flat_map(|(r, c, h, w)| (tensor(vec![c, r * h, r * w]), Just(r)))
}

fn unit_map(h: usize, w: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(0.0..=1.0f64, h * w).prop_map(move |d| Tensor::new(&[1, h, w], d).unwrap())
}

fn binary_map(h: usize, w: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(prop::bool::ANY, h * w)
        .prop_map(move |d| Tensor::new(&[1, h, w], d.into_iter().map(|b| b as u8 as f64).collect()).unwrap())
}

fn map_pair() -> impl Strategy<Value = (Tensor, Tensor)> {
    (1..10usize, 1..10usize).prop_flat_map(|(h, w)| (unit_map(h, w), binary_map(h, w)))
}

proptest! {
    #[test]
    fn shuffle_inverts_unshuffle((x, r) in shuffle_case()) {
        let u = ops::pixel_unshuffle(&x, r).unwrap();
        prop_assert_eq!(u.shape(), &[x.shape()[0] * r * r, x.shape()[1] / r, x.shape()[2] / r][..]);
        prop_assert_eq!(ops::pixel_shuffle(&u, r).unwrap(), x);
    }

    #[test]
    fn unshuffle_permutes_values((x, r) in shuffle_case()) {
        let mut a = x.data().to_vec();
        let mut b = ops::pixel_unshuffle(&x, r).unwrap().into_data();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn dirac_conv_is_identity(
        k in prop::sample::select(vec![1usize, 3, 5, 7]),
        x in (1..4usize, 1..9usize, 1..9usize).prop_flat_map(|(c, h, w)| tensor(vec![c, h, w])),
    ) {
        let c = x.shape()[0];
        let mut p = ConvParams::new(c, c, k);
        p.set_identity();
        prop_assert_eq!(ops::conv2d(&x, &p.weight, &p.bias, 1, p.padding).unwrap(), x);
    }

    #[test]
    fn channel_avg_times_c_is_channel_sum(x in (1..8usize, 1..6usize, 1..6usize).prop_flat_map(|(c, h, w)| tensor(vec![c, h, w]))) {
        let (c, hw) = (x.shape()[0], x.shape()[1] * x.shape()[2]);
        let avg = ops::channel_avg(&x).unwrap();
        for p in 0..hw {
            let sum: f64 = (0..c).map(|ch| x.data()[ch * hw + p]).sum();
            prop_assert!((avg.data()[p] * c as f64 - sum).abs() <= 1e-12 * (1.0 + sum.abs()));
        }
        let (mx, _) = ops::channel_max(&x).unwrap();
        prop_assert!(mx.data().iter().zip(avg.data()).all(|(m, a)| m >= a));
    }

    #[test]
    fn resize_preserves_constants(v in -5.0..5.0f64, h in 1..8usize, w in 1..8usize, ho in 1..20usize, wo in 1..20usize) {
        let y = ops::resize_bilinear(&Tensor::full(&[2, h, w], v), ho, wo).unwrap();
        prop_assert!(y.data().iter().all(|&e| (e - v).abs() <= 1e-12));
    }

    #[test]
    fn losses_are_bounded((s, g) in map_pair()) {
        let bce = bce_loss(&s, &g).unwrap();
        let iou = iou_loss(&s, &g).unwrap();
        let fm = fm_loss(&s, &g, BETA2).unwrap();
        prop_assert!(bce >= 0.0 && bce.is_finite());
        prop_assert!((0.0..=1.0).contains(&iou));
        prop_assert!((0.0..=1.0).contains(&fm));
    }

    #[test]
    fn metrics_are_bounded_and_symmetric((s, g) in map_pair()) {
        let r = f_measure(&s, &g, BETA2).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.mae) && (0.0..=1.0).contains(&r.f_beta));
        prop_assert_eq!(r.mae, mae_metric(&g, &s).unwrap());
    }

    #[test]
    fn weight_files_round_trip(
        entries in prop::collection::btree_map("[a-z]{1,8}(\\.[a-z0-9]{1,6}){0,3}", prop::collection::vec(1..4usize, 1..4), 1..6),
        seed in any::<u64>(),
    ) {
        let mut rng = g2hf::Rng::new(seed);
        let mut w = ModelWeights::default();
        for (name, shape) in entries {
            w.insert(name, Tensor::from_fn(&shape, |_| rng.uniform(-1.0, 1.0)).round_to_f32());
        }
        prop_assert_eq!(ModelWeights::from_bytes(&w.to_bytes()).unwrap(), w);
    }

    #[test]
    fn netpbm_round_trip(w in 1..12usize, h in 1..12usize, rgb in prop::bool::ANY, seed in any::<u64>()) {
        let channels = if rgb { 3 } else { 1 };
        let mut rng = g2hf::Rng::new(seed);
        let img = Image { width: w, height: h, channels, data: (0..w * h * channels).map(|_| rng.below(256) as u8).collect() };
        prop_assert_eq!(&Image::parse(&img.to_bytes()).unwrap(), &img);
        prop_assert_eq!(Image::from_tensor(&img.to_tensor()).unwrap(), img);
    }
}
