use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use coded_gossip::Graph;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coded-gossip")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_grid_tree_and_pruned_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&[&str], usize, usize); 3] = [
        (&["generate", "grid", "--rows", "31", "--cols", "31"], 961, 1860),
        (&["generate", "grid", "--rows", "31", "--cols", "31", "--row-period", "5"], 961, 1140),
        (&["generate", "tree", "--degree", "2", "--height", "10"], 2047, 2046),
    ];
    for (i, (args, nodes, edges)) in cases.into_iter().enumerate() {
        let file = dir.path().join(format!("g{i}.json"));
        let mut full = args.to_vec();
        full.extend(["--out", path_str(&file)]);
        let out = bin(&full);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let g = Graph::load(&file).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (nodes, edges));
    }
}

#[test]
fn generate_rejects_bad_spec() {
    let out = bin(&["generate", "grid", "--rows", "31", "--cols", "31", "--row-period", "31"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row period"));
    assert_eq!(bin(&["generate", "grid", "--rows", "x"]).status.code(), Some(1));
}

#[test]
fn sweep_is_byte_identical_for_a_fixed_seed() {
    let args = [
        "sweep",
        "--graph",
        "grid:11x11",
        "--k",
        "20",
        "--rho",
        "0",
        "--rho",
        "0.5",
        "--rho",
        "1",
        "--trials",
        "60",
        "--seed",
        "17",
    ];
    let a = bin(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = bin(&[&args[..], &["--threads", "1"]].concat());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rho,n,p_min,tau,delta,feasible");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,20,"));
    assert!(lines[3].starts_with("1,40,"));
    assert!(!text.contains('\r'));
}

#[test]
fn sweep_empty_rho_list_is_header_only() {
    let out = bin(&["sweep", "--graph", "tree:2x4", "--k", "5"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "rho,n,p_min,tau,delta,feasible\n");
}

#[test]
fn sweep_infeasible_only_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("split.json");
    let g = Graph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
    g.save(&file).unwrap();
    let out = bin(&["sweep", "--graph", path_str(&file), "--source", "0", "--k", "3", "--rho", "0", "--rho", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let text = stdout(&out);
    for line in text.lines().skip(1) {
        assert!(line.ends_with(",,,0.1,false"), "{line}");
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out_file = dir.path().join("rows.csv");
    fs::write(&cfg, r#"{"graph": "tree:2x5", "k": 10, "rho": [0.5], "trials": 50, "seed": 3, "delta": 0.2}"#).unwrap();
    let out = bin(&["sweep", "--config", path_str(&cfg), "--delta", "0.1", "--out", path_str(&out_file)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&out_file).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("0.5,15,"));
    assert!(row.ends_with(",0.1,true"));
}

#[test]
fn tree_exact_rows_and_out_of_range_flag() {
    let out = bin(&["tree-exact", "--height", "50", "--k", "500", "--delta", "0.1", "--rho", "0", "--rho", "1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rho,p_exact,p_closed,tau_exact,tau_closed");
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1].split(',').nth(2), Some("1"));

    // at H = 2 and large rho the closed-form p falls to 1/2 or below
    let out = bin(&["tree-exact", "--height", "2", "--k", "10", "--rho", "1.5"]);
    assert!(out.status.success());
    assert!(stdout(&out).lines().nth(1).unwrap().ends_with(','));
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of range"));
}

#[test]
fn grid_family_single_trial_warns() {
    let out = bin(&["grid-family", "--rows", "16", "--cols", "16", "--k", "5", "--rho", "0", "--trials", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let text = stdout(&out);
    let graphs: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(graphs, ["G", "G5", "G10", "G15"]);
    assert_eq!(text.lines().next(), Some("graph,rho,n,p_min,tau,delta,feasible"));
}

#[test]
fn estimate_and_oracle_agree_on_a_path() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("path.json");
    Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap().save(&file).unwrap();
    let g = path_str(&file);
    let exact = bin(&["oracle", "--graph", g, "--source", "0", "--k", "1", "--p", "0.4", "--per-node"]);
    assert!(exact.status.success(), "{}", String::from_utf8_lossy(&exact.stderr));
    let text = stdout(&exact);
    assert!(text.starts_with("p,n,expected_receivers,expected_coverage,expected_transmissions\n0.4,1,2.4,0.8,1.56\n"));
    assert!(text.contains("0.4,2,0.4,0.4"));

    let mc = bin(&["estimate", "--graph", g, "--source", "0", "--k", "1", "--p", "0.4", "--trials", "20000"]);
    assert!(mc.status.success());
    let text = stdout(&mc);
    let f: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((f[5] - 1.56).abs() <= 3.0 * f[6]);
}

#[test]
fn oracle_refuses_large_graphs() {
    let out = bin(&["oracle", "--graph", "grid:5x5", "--k", "1", "--p", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
}
