//! Property tests for the estimator and environment invariants.

use cvarkit::env::tetris::{orientations, Board, PieceKind};
use cvarkit::gcvar::gcvar_estimate;
use cvarkit::importance::{is_gcvar_estimate, WeightedScoredSample};
use cvarkit::model::{ParamVector, ScoredSample};
use cvarkit::optimizer::ProjectionBox;
use cvarkit::risk::{empirical_cdf, empirical_cvar, empirical_var, tail_count};
use proptest::prelude::*;

fn batch(rewards: &[f64], scores: &[f64]) -> Vec<ScoredSample> {
    rewards
        .iter()
        .zip(scores)
        .map(|(&r, &s)| ScoredSample::new(vec![], vec![r], r, vec![s, -0.5 * s]).unwrap())
        .collect()
}

fn rewards_and_scores() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..80).prop_flat_map(|n| {
        (
            prop::collection::vec(-50.0f64..50.0, n),
            prop::collection::vec(-3.0f64..3.0, n),
        )
    })
}

/// Brute-force well count: scan every cell.
fn wells_by_scan(b: &Board) -> usize {
    let (w, h) = (b.width(), b.height());
    let mut count = 0;
    for c in 0..w {
        for r in 0..h {
            let open = (r..h).all(|rr| !b.filled(c, rr));
            let left = c == 0 || b.filled(c - 1, r);
            let right = c + 1 == w || b.filled(c + 1, r);
            if open && left && right {
                count += 1;
            }
        }
    }
    count
}

fn board_strategy() -> impl Strategy<Value = Board> {
    prop::collection::vec(0u16..64, 12).prop_map(|rows| {
        let text: Vec<String> = rows
            .iter()
            .map(|r| (0..6).map(|c| if r >> c & 1 == 1 { '#' } else { '.' }).collect())
            .collect();
        let refs: Vec<&str> = text.iter().map(|s| s.as_str()).collect();
        Board::from_rows(6, 12, &refs).unwrap()
    })
}

fn cells(b: &Board) -> u32 {
    (0..b.height()).map(|r| b.row(r).count_ones()).sum()
}

proptest! {
    #[test]
    fn var_is_a_sample_and_the_cdf_reaches_alpha(v in prop::collection::vec(-10.0f64..10.0, 1..100), alpha in 0.001f64..1.0) {
        let var = empirical_var(&v, alpha).unwrap();
        prop_assert!(v.contains(&var));
        prop_assert!(empirical_cdf(&v, var) * v.len() as f64 >= tail_count(alpha, v.len()) as f64 - 1e-9);
    }

    #[test]
    fn cvar_is_bounded_by_min_var_and_mean(v in prop::collection::vec(-10.0f64..10.0, 1..100), alpha in 0.001f64..1.0) {
        let cvar = empirical_cvar(&v, alpha).unwrap();
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!(cvar >= min - 1e-9);
        prop_assert!(cvar <= empirical_var(&v, alpha).unwrap() + 1e-9);
        prop_assert!(cvar <= mean + 1e-9);
    }

    #[test]
    fn cvar_is_positively_homogeneous(v in prop::collection::vec(-10.0f64..10.0, 1..60), alpha in 0.01f64..1.0, c in 0.1f64..10.0) {
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        let a = c * empirical_cvar(&v, alpha).unwrap();
        let b = empirical_cvar(&scaled, alpha).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn gradient_ignores_reward_shifts((r, s) in rewards_and_scores(), alpha in 0.01f64..1.0, shift in -20.0f64..20.0) {
        let shifted: Vec<f64> = r.iter().map(|x| x + shift).collect();
        let a = gcvar_estimate(&batch(&r, &s), alpha).unwrap();
        let b = gcvar_estimate(&batch(&shifted, &s), alpha).unwrap();
        prop_assert_eq!(a.tail_count, b.tail_count);
        for (x, y) in a.grad.iter().zip(&b.grad) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn zero_scores_give_zero_gradient(r in prop::collection::vec(-10.0f64..10.0, 1..50), alpha in 0.01f64..1.0) {
        let zeros = vec![0.0; r.len()];
        prop_assert!(gcvar_estimate(&batch(&r, &zeros), alpha).unwrap().grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn unit_weights_reduce_exactly((r, s) in rewards_and_scores(), alpha in 0.01f64..1.0) {
        let crude = batch(&r, &s);
        let weighted: Vec<WeightedScoredSample> = crude
            .iter()
            .map(|x| WeightedScoredSample { inner: x.clone(), likelihood_ratio: 1.0 })
            .collect();
        prop_assert_eq!(gcvar_estimate(&crude, alpha).unwrap(), is_gcvar_estimate(&weighted, alpha).unwrap());
    }

    #[test]
    fn projection_lands_in_the_box_and_is_idempotent(t in prop::collection::vec(-10.0f64..10.0, 3), r in 0.1f64..5.0) {
        let b = ProjectionBox::symmetric(3, r).unwrap();
        let p = b.project(&ParamVector::new(t.clone()).unwrap()).unwrap();
        prop_assert!(b.contains(&p));
        prop_assert_eq!(b.project(&p).unwrap(), p.clone());
        for (x, y) in t.iter().zip(p.iter()) {
            if x.abs() <= r {
                prop_assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn well_count_matches_cell_scan(b in board_strategy()) {
        prop_assert_eq!(b.well_cells(), wells_by_scan(&b));
    }

    #[test]
    fn placement_conserves_cells(b in board_strategy(), piece in 0usize..7, rot in 0usize..4, col in 0usize..6) {
        let os = orientations(PieceKind::ALL[piece]);
        let o = os[rot % os.len()];
        if let Some(p) = b.drop_piece(&o, col) {
            let before = cells(&b) + 4;
            prop_assert_eq!(cells(&p.board) + 6 * p.lines_cleared as u32, before);
            prop_assert!(!p.board.has_full_row());
            prop_assert!(p.landing_row + p.piece_height <= 12);
        }
    }
}
