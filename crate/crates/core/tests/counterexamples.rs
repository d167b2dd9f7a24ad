use riskdp::counterexamples::{
    build, golden, suboptimal_region, suboptimality_regions, sweep_alpha, verify_cvar_gap, verify_evar_gap,
    CounterexampleError, CounterexampleSpec, SweepRow,
};
use riskdp::decomp::{AlphaGrid, OuterSearch};

const TOL: f64 = 1e-9;

fn check_ordering(rows: &[SweepRow]) {
    for r in rows {
        let scale = r.oracle_value.abs().max(1.0);
        assert!(r.decomposition_value >= r.oracle_value - TOL * scale, "{r:?}");
        assert!(r.realized_value <= r.oracle_value + TOL * scale, "{r:?}");
    }
}

#[test]
fn sweeps_keep_decomposition_above_oracle_above_realized() {
    let grid = AlphaGrid::uniform(50).unwrap();
    for spec in [
        CounterexampleSpec::Mc,
        CounterexampleSpec::m3(600.0, 0.5).unwrap(),
    ] {
        check_ordering(&sweep_alpha(spec, &grid, OuterSearch::Breakpoints).unwrap());
    }
}

#[test]
fn m3_sweep_coincides_at_one() {
    let grid = AlphaGrid::uniform(10).unwrap();
    let rows = sweep_alpha(
        CounterexampleSpec::m3(600.0, 0.5).unwrap(),
        &grid,
        OuterSearch::Breakpoints,
    )
    .unwrap();
    let last = rows.last().unwrap();
    assert_eq!(last.alpha, 1.0);
    for v in [last.oracle_value, last.decomposition_value, last.realized_value] {
        assert!((v - 250.0).abs() <= 1e-9, "{last:?}");
    }
}

#[test]
fn m3_greedy_policy_never_plays_the_hedge() {
    let grid = AlphaGrid::uniform(100).unwrap();
    let rows = sweep_alpha(
        CounterexampleSpec::m3(600.0, 0.5).unwrap(),
        &grid,
        OuterSearch::Breakpoints,
    )
    .unwrap();
    assert!(rows.iter().all(|r| r.decomposition_action != "a3"));
    assert!(rows.iter().any(|r| r.oracle_action == "a3"));
}

#[test]
fn m3_reference_level() {
    let grid = AlphaGrid::new(vec![0.0, golden::M3_ALPHA, 1.0]).unwrap();
    let spec = CounterexampleSpec::m3(golden::M3_MAGNITUDE, golden::M3_P_S2).unwrap();
    let row = &sweep_alpha(spec, &grid, OuterSearch::Breakpoints).unwrap()[1];
    assert!((row.oracle_value - golden::M3_OPTIMUM).abs() <= TOL);
    assert!((row.decomposition_value - golden::M3_DECOMPOSITION).abs() <= TOL);
    assert!((row.realized_value - golden::M3_REALIZED).abs() <= TOL);
    assert!(row.suboptimal());
}

#[test]
fn suboptimal_region_grows_with_magnitude() {
    let grid = AlphaGrid::uniform(100).unwrap();
    let rows =
        suboptimality_regions(&golden::SWEEP_MAGNITUDES, &[0.5], &grid, OuterSearch::Breakpoints).unwrap();
    let flagged: Vec<Vec<bool>> = golden::SWEEP_MAGNITUDES
        .iter()
        .map(|&m| {
            let sweep = sweep_alpha(
                CounterexampleSpec::m3(m, 0.5).unwrap(),
                &grid,
                OuterSearch::Breakpoints,
            )
            .unwrap();
            sweep.iter().map(SweepRow::suboptimal).collect()
        })
        .collect();
    for pair in flagged.windows(2) {
        for (small, large) in pair[0].iter().zip(&pair[1]) {
            assert!(!small || *large);
        }
    }
    for (row, flags) in rows.iter().zip(&flagged) {
        assert!(!row.region.is_empty());
        assert!(row.max_shortfall > 0.0);
        let covered = grid.levels().iter().zip(flags).filter(|(_, f)| **f);
        for (a, _) in covered {
            assert!(row.region.iter().any(|i| i.contains(*a)));
        }
    }
}

#[test]
fn region_matches_flags() {
    let grid = AlphaGrid::uniform(20).unwrap();
    let rows = sweep_alpha(
        CounterexampleSpec::m3(600.0, 0.5).unwrap(),
        &grid,
        OuterSearch::Breakpoints,
    )
    .unwrap();
    let region = suboptimal_region(&rows);
    for r in &rows {
        assert_eq!(
            r.suboptimal(),
            region.iter().any(|i| i.contains(r.alpha)),
            "{r:?}"
        );
    }
}

#[test]
fn cvar_gap_on_lattices() {
    let exact = verify_cvar_gap(OuterSearch::Breakpoints).unwrap();
    assert!((exact.gap - (golden::MC_DECOMPOSITION - golden::MC_OPTIMUM)).abs() <= 1e-12);
    for h in [1e-2, 1e-3] {
        let r = verify_cvar_gap(OuterSearch::lattice(h)).unwrap();
        assert!(r.rhs >= golden::MC_DECOMPOSITION - 1e-9);
        assert!(r.rhs - golden::MC_DECOMPOSITION <= golden::MC_THETA_SLOPE * h);
    }
}

#[test]
fn evar_gap_holds() {
    let r = verify_evar_gap(OuterSearch::refined(1e-2)).unwrap();
    assert!(r.evar < r.cvar - golden::ME_EVAR_MARGIN);
    assert!(r.ni_value >= r.cvar - 1e-9);
    assert!(r.kl_xi_star < r.radius);
}

#[test]
fn invalid_m3_parameters() {
    for (m, p) in [
        (0.0, 0.5),
        (-1.0, 0.5),
        (600.0, 0.0),
        (600.0, 1.0),
        (f64::NAN, 0.5),
    ] {
        assert!(
            matches!(
                CounterexampleSpec::m3(m, p),
                Err(CounterexampleError::InvalidSpec(_))
            ),
            "{m} {p}"
        );
    }
    assert!(build(CounterexampleSpec::m3(600.0, 0.7).unwrap()).is_ok());
}
