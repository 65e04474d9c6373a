use std::sync::OnceLock;

use proptest::prelude::*;

use sobolev_limits::cantor_map::CantorMap;
use sobolev_limits::composite::{CompositeStage, Variant};
use sobolev_limits::geometry::{grid_vertex, mask_from_signs, mask_from_tower_vertex, sup_dist, tower_vertex, Zone};
use sobolev_limits::tentacle::PLKnots;
use sobolev_limits::tower::TowerMap;
use sobolev_limits::{CubeFamily, LogMagnitude, Point, StageMap};

const BETA: f64 = 4.0;

fn stages() -> &'static Vec<CompositeStage<3>> {
    static CELL: OnceLock<Vec<CompositeStage<3>>> = OnceLock::new();
    CELL.get_or_init(|| {
        [Variant::T1, Variant::T2, Variant::W]
            .into_iter()
            .flat_map(|v| (1..=3).map(move |k| CompositeStage::<3>::demo(v, BETA, k).unwrap()))
            .collect()
    })
}

fn collapse_stages() -> &'static Vec<CompositeStage<3>> {
    static CELL: OnceLock<Vec<CompositeStage<3>>> = OnceLock::new();
    CELL.get_or_init(|| (1..=3).map(|k| CompositeStage::<3>::demo(Variant::FL, BETA, k).unwrap()).collect())
}

fn point() -> impl Strategy<Value = Point<3>> {
    prop::array::uniform3(-1.0f64..=1.0)
}

/// A point on a random face of the cube.
fn face_point() -> impl Strategy<Value = Point<3>> {
    (point(), 0usize..3, prop::bool::ANY).prop_map(|(mut x, axis, upper)| {
        x[axis] = if upper { 1.0 } else { -1.0 };
        x
    })
}

fn increasing() -> impl Strategy<Value = [f64; 4]> {
    (-5.0f64..5.0, prop::array::uniform3(1e-3f64..3.0)).prop_map(|(start, gaps)| {
        let mut t = [start; 4];
        for i in 0..3 {
            t[i + 1] = t[i] + gaps[i];
        }
        t
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn masks_and_signs_roundtrip(mask in 0u32..8) {
        let v = grid_vertex::<3>(mask);
        let signs = v.map(|c| c as i8);
        prop_assert_eq!(mask_from_signs(&signs).unwrap(), mask);
        prop_assert_eq!(mask_from_tower_vertex(&tower_vertex::<3>(mask)).unwrap(), mask);
    }

    #[test]
    fn located_cells_contain_the_point(x in point(), depth in 1usize..6) {
        let family = CubeFamily::<3>::set_a(BETA).unwrap();
        let loc = family.locate(&x, depth);
        let word = &loc.address.word;
        let center = family.center(word);
        let level = word.len();
        prop_assert!(sup_dist(&x, &center) <= family.outer(level) + 1e-15);
        match loc.zone {
            Zone::Frame(k) => {
                prop_assert_eq!(k, level);
                prop_assert!(sup_dist(&x, &center) >= family.inner(level) - 1e-15);
            }
            Zone::Core => prop_assert!(sup_dist(&x, &center) <= family.inner(level) + 1e-15),
            Zone::Outside => prop_assert!(false, "grid layouts tile their parent"),
        }
    }

    #[test]
    fn cantor_and_tower_maps_roundtrip(x in point(), k in 1usize..5) {
        let g = CantorMap::<3>::standard(BETA, k).unwrap();
        let l = TowerMap::<3>::new(BETA, k).unwrap();
        prop_assert!(sup_dist(&g.inverse(&g.forward(&x)), &x) <= 1e-10);
        prop_assert!(sup_dist(&g.forward(&g.inverse(&x)), &x) <= 1e-10);
        prop_assert!(sup_dist(&l.inverse(&l.forward(&x)), &x) <= 1e-10);
        prop_assert!(sup_dist(&l.forward(&l.inverse(&x)), &x) <= 1e-10);
    }

    #[test]
    fn stage_maps_roundtrip_and_stay_in_the_cube(x in point()) {
        for f in stages() {
            let y = f.forward(&x);
            prop_assert!(y.iter().all(|v| v.abs() <= 1.0));
            prop_assert!(sup_dist(&f.inverse(&y), &x) <= 1e-10, "{:?} stage {}", f.variant(), f.stage());
        }
    }

    #[test]
    fn stage_maps_fix_the_boundary(x in face_point()) {
        for f in stages().iter().chain(collapse_stages()) {
            prop_assert_eq!(f.forward(&x), x);
        }
    }

    #[test]
    fn w_undoes_t2(x in point()) {
        let all = stages();
        for k in 0..3 {
            let (t2, w) = (&all[3 + k], &all[6 + k]);
            prop_assert!(sup_dist(&w.forward(&t2.forward(&x)), &x) <= 1e-10);
        }
    }

    #[test]
    fn collapse_is_not_invertible(x in point()) {
        for f in collapse_stages() {
            prop_assert!(f.inverse(&x).iter().all(|v| v.is_nan()));
        }
    }

    #[test]
    fn pl_knots_hit_knots_and_invert(t in increasing(), s in increasing(), w in 0.0f64..=1.0) {
        let knots = PLKnots::new(t, s).unwrap();
        for i in 0..4 {
            prop_assert!((knots.eval(t[i]).unwrap() - s[i]).abs() <= 1e-12 * (1.0 + s[i].abs()));
        }
        let x = t[0] + w * (t[3] - t[0]);
        let y = knots.eval(x).unwrap();
        prop_assert!((knots.inverse(y).unwrap() - x).abs() <= 1e-9 * (1.0 + x.abs()));
        prop_assert!(knots.slope(x) > 0.0);
        prop_assert!(knots.eval(t[3] + 1.0).is_err());
    }

    #[test]
    fn log_magnitudes_multiply_in_log_space(u in 0.0f64..2000.0, v in 0.0f64..2000.0) {
        let (a, b) = (LogMagnitude::from_neg_log(u), LogMagnitude::from_neg_log(v));
        prop_assert_eq!(a.product(b).neg_log(), u + v);
        prop_assert_eq!(a.min(b).neg_log(), u.max(v));
        prop_assert_eq!(a.is_representable(), (-u).exp() >= f64::MIN_POSITIVE);
        if let Some(x) = a.value() {
            prop_assert!((LogMagnitude::from_value(x).neg_log() - u).abs() <= 1e-12 * (1.0 + u));
        }
    }
}
