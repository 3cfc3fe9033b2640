use riskmdp::io::{self, MdpFile};
use riskmdp_core::grid::{generate_grid, GridSpec};
use riskmdp_core::random::{random_mdp, RandomMdpSpec};
use riskmdp_core::{build_gridworld, Mdp};

fn close(a: &Mdp, b: &Mdp) {
    assert_eq!(a.n_states(), b.n_states());
    assert_eq!(a.n_actions(), b.n_actions());
    assert_eq!(a.n_constraints(), b.n_constraints());
    assert!((a.discount() - b.discount()).abs() <= 1e-12);
    for s in 0..a.n_states() {
        assert!((a.initial_distribution()[s] - b.initial_distribution()[s]).abs() <= 1e-12);
        for k in 0..a.n_actions() {
            assert!((a.cost(s, k) - b.cost(s, k)).abs() <= 1e-12);
            for i in 0..a.n_constraints() {
                assert!((a.constraint_cost(i, s, k) - b.constraint_cost(i, s, k)).abs() <= 1e-12);
            }
            let (ra, rb) = (a.transition_row(s, k), b.transition_row(s, k));
            assert_eq!(ra.len(), rb.len());
            for (x, y) in ra.iter().zip(rb) {
                assert_eq!(x.0, y.0);
                assert!((x.1 - y.1).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn mdp_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mdp.json");
    for seed in 0..30 {
        let spec = RandomMdpSpec {
            n_constraints: 1 + (seed % 3) as usize,
            ..RandomMdpSpec::small(2 + (seed % 5) as usize, 1 + (seed % 4) as usize)
        };
        let mdp = random_mdp(&spec, seed).unwrap();
        io::write_mdp(&path, &mdp).unwrap();
        let back = io::read_mdp(&path).unwrap();
        close(&mdp, &back);
        // Full precision: the round trip is in fact exact.
        assert_eq!(mdp, back);
    }
    let grid = generate_grid(&GridSpec::paper(10)).unwrap();
    let mdp = build_gridworld(&grid).unwrap();
    io::write_mdp(&path, &mdp).unwrap();
    assert_eq!(io::read_mdp(&path).unwrap(), mdp);
}

#[test]
fn mdp_schema_field_names() {
    let mdp = random_mdp(&RandomMdpSpec::small(2, 2), 1).unwrap();
    let v = serde_json::to_value(MdpFile::from_mdp(&mdp)).unwrap();
    for key in ["states", "actions", "transition", "cost", "constraint_costs", "kappa0", "gamma"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["transition"].as_array().unwrap().len(), 2);
    assert_eq!(v["transition"][0].as_array().unwrap().len(), 2);
}

#[test]
fn grid_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.json");
    for size in [10, 15, 20] {
        let mut grid = generate_grid(&GridSpec::paper(size)).unwrap();
        grid.step_cost = 2.0;
        io::write_grid(&path, &grid).unwrap();
        assert_eq!(io::read_grid(&path).unwrap(), grid);
    }
}

#[test]
fn invalid_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mdp = random_mdp(&RandomMdpSpec::small(2, 2), 3).unwrap();
    let mut file = MdpFile::from_mdp(&mdp);
    file.transition[0][0][0].1 += 0.25;
    io::write_json_exact(&path, &file).unwrap();
    let err = io::read_mdp(&path).unwrap_err().to_string();
    assert!(err.contains("sums to"), "{err}");

    let mut file = MdpFile::from_mdp(&mdp);
    file.cost[1].pop();
    io::write_json_exact(&path, &file).unwrap();
    assert!(io::read_mdp(&path).is_err());

    io::write_text(&path, "{ not json").unwrap();
    assert!(io::read_mdp(&path).is_err());
    assert!(io::read_grid(&dir.path().join("absent.json")).is_err());
}
