//! Property tests for the geometric and numeric invariants.

use proptest::prelude::*;

use sinrcast::grid::{
    box_distance, box_of, dilution_class, octant_of, standard_adjacent, BoxCoord, Grid,
};
use sinrcast::params::{
    interference_bound, interference_partial_sum, net_size_bound, series_constant,
};
use sinrcast::sinr::{sinr_ratio, Point, SinrParams, Station};

fn params(alpha: f64) -> SinrParams {
    SinrParams::new(alpha, 1.0, 1.0, 0.2).unwrap()
}

proptest! {
    /// Adding a transmitter to the interference set never raises the ratio.
    #[test]
    fn interference_is_monotone(
        alpha in 2.0f64..3.5,
        rx in (0.1f64..3.0, 0.0f64..3.0),
        extra in (0.0f64..3.0, 0.0f64..3.0),
        others in prop::collection::vec((0.0f64..3.0, 0.0f64..3.0), 0..6),
    ) {
        let p = params(alpha);
        let sender = Station::new(1, 0.0, 0.0);
        let receiver = Station::new(2, rx.0, rx.1);
        prop_assume!(receiver.pos.dist(&sender.pos) > 1e-6);
        let mut tx = vec![sender];
        for (k, &(x, y)) in others.iter().enumerate() {
            let s = Station::new(10 + k as u64, x, y);
            prop_assume!(s.pos.dist(&receiver.pos) > 1e-6);
            tx.push(s);
        }
        let before = sinr_ratio(&sender, &receiver, &tx, &p).unwrap();
        let extra_station = Station::new(99, extra.0, extra.1);
        prop_assume!(extra_station.pos.dist(&receiver.pos) > 1e-6);
        tx.push(extra_station);
        let after = sinr_ratio(&sender, &receiver, &tx, &p).unwrap();
        prop_assert!(after <= before * (1.0 + 1e-12));
    }

    /// Every point falls inside the half-open box it maps to.
    #[test]
    fn boxes_tile_the_plane(
        x in -50.0f64..50.0,
        y in -50.0f64..50.0,
        cell in 0.01f64..3.0,
    ) {
        let g = Grid::new(cell).unwrap();
        let b = box_of(Point::new(x, y), &g);
        prop_assert!(b.i as f64 * cell <= x && x < (b.i + 1) as f64 * cell);
        prop_assert!(b.j as f64 * cell <= y && y < (b.j + 1) as f64 * cell);
    }

    /// Exactly one octant claims every direction.
    #[test]
    fn octants_are_a_partition(di in -40i64..40, dj in -40i64..40) {
        prop_assume!(di != 0 || dj != 0);
        let v = BoxCoord::new(7, -3);
        let o = octant_of(v, BoxCoord::new(7 + di, -3 + dj)).unwrap();
        prop_assert!(o < 8);
        // rotating the offset by 90 degrees advances the octant by 2
        let rotated = octant_of(v, BoxCoord::new(7 - dj, -3 + di)).unwrap();
        prop_assert_eq!((o + 2) % 8, rotated);
    }

    /// Dilution classes stay in range and respect congruence.
    #[test]
    fn dilution_class_is_congruent(i in -1000i64..1000, j in -1000i64..1000, d in 1u32..40) {
        let (a, b) = dilution_class(BoxCoord::new(i, j), d);
        prop_assert!(a < d && b < d);
        prop_assert_eq!((i - a as i64).rem_euclid(d as i64), 0);
        prop_assert_eq!((j - b as i64).rem_euclid(d as i64), 0);
        // shifting by d in either axis does not change the class
        prop_assert_eq!(dilution_class(BoxCoord::new(i + d as i64, j), d), (a, b));
    }

    /// Standard adjacency is symmetric and matches the coordinate rule.
    #[test]
    fn standard_adjacency_is_symmetric(ai in -20i64..20, aj in -20i64..20, bi in -20i64..20, bj in -20i64..20) {
        let a = BoxCoord::new(ai, aj);
        let b = BoxCoord::new(bi, bj);
        prop_assert_eq!(standard_adjacent(a, b), standard_adjacent(b, a));
        prop_assert_eq!(standard_adjacent(a, b), (ai - bi).abs() <= 1 && (aj - bj).abs() <= 1);
    }

    /// Two stations in one box of the pivotal grid are within (1 - eps).
    #[test]
    fn pivotal_grid_boxes_are_connected(
        eps in 0.01f64..0.49,
        i in -20i64..20,
        j in -20i64..20,
        fx1 in 0.0f64..1.0, fy1 in 0.0f64..1.0,
        fx2 in 0.0f64..1.0, fy2 in 0.0f64..1.0,
    ) {
        let z = Grid::pivotal_cell(eps);
        let p1 = Point::new((i as f64 + fx1) * z, (j as f64 + fy1) * z);
        let p2 = Point::new((i as f64 + fx2) * z, (j as f64 + fy2) * z);
        prop_assert!(p1.dist(&p2) <= (1.0 - eps) + 1e-12);
    }

    /// Closed-form distance equals the corner-pair maximum.
    #[test]
    fn box_distance_is_the_corner_maximum(
        ai in -10i64..10, aj in -10i64..10,
        bi in -10i64..10, bj in -10i64..10,
        cell in 0.05f64..2.0,
    ) {
        let g = Grid::new(cell).unwrap();
        let a = BoxCoord::new(ai, aj);
        let b = BoxCoord::new(bi, bj);
        let corners = |bx: BoxCoord| {
            [
                Point::new(bx.i as f64 * cell, bx.j as f64 * cell),
                Point::new((bx.i + 1) as f64 * cell, bx.j as f64 * cell),
                Point::new(bx.i as f64 * cell, (bx.j + 1) as f64 * cell),
                Point::new((bx.i + 1) as f64 * cell, (bx.j + 1) as f64 * cell),
            ]
        };
        let mut best: f64 = 0.0;
        if a != b {
            for ca in corners(a) {
                for cb in corners(b) {
                    best = best.max(ca.dist(&cb));
                }
            }
        }
        prop_assert!((box_distance(a, b, &g) - best).abs() < 1e-12);
    }

    /// The explicit ring sum dominates the closed-form estimate.
    #[test]
    fn ring_sum_dominates_closed_form(
        alpha in 2.0f64..3.5,
        t in 2.1f64..12.0,
        n in 16u64..1_000_000,
    ) {
        let gamma = 0.05;
        let d = (t / gamma).ceil() as u32;
        let closed = interference_bound(alpha, 1.0, d, gamma, n).unwrap();
        let partial = interference_partial_sum(alpha, 1.0, d, gamma, n).unwrap();
        prop_assert!(partial >= closed);
    }

    /// The series constant is monotone in n and flat beyond saturation.
    #[test]
    fn series_constant_shape(alpha in 2.01f64..3.5, n in 2u64..1_000_000) {
        let s1 = series_constant(alpha, n).unwrap();
        let s2 = series_constant(alpha, n * 2).unwrap();
        prop_assert!(s2 >= s1 - 1e-15);
        let saturated = series_constant(alpha, u64::MAX).unwrap();
        prop_assert!(s1 <= saturated + 1e-15);
    }

    /// Net size bound grows quadratically.
    #[test]
    fn net_bound_is_quadratic(ecc in 0u32..10_000) {
        prop_assert_eq!(net_size_bound(ecc), 4 * (ecc as u64 + 1).pow(2));
    }
}

#[test]
fn greedy_net_is_maximal_and_covers() {
    use sinrcast::params::greedy_net;
    let p = params(2.5);
    for seed in 0..10 {
        let net = sinrcast::gen_uniform(60, 3.0, &p, seed).unwrap();
        let picked = greedy_net(&net, 0.8);
        // pairwise separation
        for (a, &i) in picked.iter().enumerate() {
            for &j in picked.iter().skip(a + 1) {
                assert!(net.stations()[i].pos.dist(&net.stations()[j].pos) >= 0.8);
            }
        }
        // coverage: every station within the radius of some member
        for s in net.stations() {
            assert!(picked
                .iter()
                .any(|&i| net.stations()[i].pos.dist(&s.pos) <= 0.8));
        }
    }
}

#[test]
fn greedy_net_trivial_cases() {
    use sinrcast::params::greedy_net;
    let p = params(2.5);
    let one = sinrcast::Network::from_stations(
        vec![Station::new(1, 0.0, 0.0)],
        p,
        1.0,
        1,
    )
    .unwrap();
    assert_eq!(greedy_net(&one, 0.9), vec![0]);
    let two = sinrcast::Network::from_stations(
        vec![Station::new(1, 0.0, 0.0), Station::new(2, 0.5, 0.0)],
        p,
        1.0,
        1,
    )
    .unwrap();
    assert_eq!(greedy_net(&two, 0.9), vec![0]);
}
