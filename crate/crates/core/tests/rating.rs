use fenbench::exec::Exec;
use fenbench::rating::{
    elo_from_skill, estimate_rating, expected_score, opponent_elo, skill_band, skill_from_elo, trajectory, update,
    BootstrapOptions, KSchedule, RatedGame,
};
use proptest::prelude::*;

// The cubic as printed, evaluated term by term.
fn oracle_sk(elo: f64) -> f64 {
    let e = (elo - 1320.0) / 1870.0;
    37.247 * e.powi(3) - 40.852 * e.powi(2) + 22.294 * e - 0.311
}

#[test]
fn cubic_matches_printed_coefficients() {
    assert_eq!(skill_from_elo(1320.0).unwrap().sk, -0.311);
    assert!((skill_from_elo(3190.0).unwrap().sk - 18.378).abs() < 1e-9);
    for i in 0..=100 {
        let elo = 1320.0 + 18.7 * i as f64;
        assert!((skill_from_elo(elo).unwrap().sk - oracle_sk(elo)).abs() < 1e-12, "{elo}");
    }
    assert!(skill_from_elo(1319.9).is_err() && skill_from_elo(3190.1).is_err());
    assert!(elo_from_skill(-0.4).is_err() && elo_from_skill(18.4).is_err());
}

#[test]
fn cubic_is_monotone_on_a_fine_grid() {
    let grid: Vec<f64> = (0..1000).map(|i| 1320.0 + 1870.0 * i as f64 / 999.0).collect();
    let sk: Vec<f64> = grid.iter().map(|&e| skill_from_elo(e).unwrap().sk).collect();
    assert!(sk.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn published_bands_and_midpoints() {
    assert_eq!(skill_band(0), (1350.0, 1440.0));
    assert_eq!(skill_band(1), (1450.0, 1560.0));
    assert_eq!(skill_band(2), (1570.0, 1720.0));
    for s in 0..=20u8 {
        let (lo, hi) = skill_band(s);
        let mid = opponent_elo(s);
        assert!(lo <= mid && mid <= hi, "skill {s}: {mid} not in [{lo}, {hi}]");
    }
    assert!((0..20u8).all(|s| opponent_elo(s + 1) >= opponent_elo(s)));
}

#[test]
fn trajectory_folds_updates() {
    let games = [
        RatedGame { actual: 1.0, opponent_elo: 1400.0 },
        RatedGame { actual: 0.5, opponent_elo: 1500.0 },
        RatedGame { actual: 0.0, opponent_elo: 1300.0 },
    ];
    let k = KSchedule::default();
    let t = trajectory(&games, &k, 1500.0).unwrap();
    let mut elo = 1500.0;
    for (g, &got) in games.iter().zip(&t[1..]) {
        let e = 1.0 / (1.0 + 10f64.powf((g.opponent_elo - elo) / 400.0));
        elo += (g.actual - e) * if elo < 2000.0 { 20.0 } else { 10.0 };
        assert!((got - elo).abs() < 1e-9);
    }
}

#[test]
fn bootstrap_is_executor_independent() {
    let games: Vec<RatedGame> = (0..40)
        .map(|i| RatedGame { actual: [1.0, 0.5, 0.0, 1.0][i % 4], opponent_elo: 1500.0 })
        .collect();
    let run = |exec| {
        let opts = BootstrapOptions { samples: 500, seed: 3, exec };
        estimate_rating(&games, &KSchedule::default(), 1500.0, opts).unwrap()
    };
    let (a, b) = (run(Exec::Sequential), run(Exec::parallel()));
    assert_eq!(a, b);
    assert!(a.interval.0 <= a.elo && a.elo <= a.interval.1);
    assert!(a.uncertainty > 0.0);
}

fn elo() -> impl Strategy<Value = f64> {
    0.0f64..4000.0
}

fn result() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.0, 0.5, 1.0])
}

proptest! {
    #[test]
    fn equal_ratings_expect_half(a in elo()) {
        prop_assert_eq!(expected_score(a, a), 0.5);
    }

    #[test]
    fn expected_scores_are_complementary(a in elo(), b in elo()) {
        prop_assert!((expected_score(a, b) + expected_score(b, a) - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&expected_score(a, b)));
    }

    #[test]
    fn expected_score_is_monotone(a in elo(), b in elo(), d in 1.0f64..400.0) {
        prop_assert!(expected_score(a + d, b) >= expected_score(a, b));
    }

    #[test]
    fn matching_expectation_changes_nothing(a in 1000.0f64..3000.0, k in 1.0f64..64.0) {
        // Equal ratings expect exactly one half; a draw meets it.
        prop_assert_eq!(update(a, 0.5, a, k).unwrap().elo_new, a);
    }

    #[test]
    fn paired_updates_are_zero_sum(a in elo(), b in elo(), r in result(), k in 1.0f64..64.0) {
        let ua = update(a, r, b, k).unwrap();
        let ub = update(b, 1.0 - r, a, k).unwrap();
        prop_assert!(((ua.elo_new - a) + (ub.elo_new - b)).abs() < 1e-9);
    }

    #[test]
    fn winning_never_lowers_rating(a in elo(), b in elo(), k in 1.0f64..64.0) {
        prop_assert!(update(a, 1.0, b, k).unwrap().elo_new >= a);
        prop_assert!(update(a, 0.0, b, k).unwrap().elo_new <= a);
    }

    #[test]
    fn skill_round_trip(x in 0.0f64..18.0) {
        let back = skill_from_elo(elo_from_skill(x).unwrap()).unwrap().sk;
        prop_assert!((back - x).abs() < 0.01);
    }

    #[test]
    fn elo_round_trip(e in 1320.0f64..3190.0) {
        let sk = skill_from_elo(e).unwrap().sk;
        prop_assert!((elo_from_skill(sk).unwrap() - e).abs() < 1e-6);
    }

    #[test]
    fn schedule_display_round_trips(lo in 1u32..64, hi in 1u32..64, t in 1000u32..3000) {
        let k: KSchedule = format!("{lo}:{hi}@{t}").parse().unwrap();
        prop_assert_eq!(k.to_string().parse::<KSchedule>().unwrap(), k);
    }
}
