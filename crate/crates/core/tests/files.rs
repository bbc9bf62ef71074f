use std::io::Write;

use semibandit::clustering::{linkage_loss_function, sample_planted_distances, DistanceMatrix};
use semibandit::experiment::{run, EnvKind, ExperimentConfig};
use semibandit::knapsack::{full_information_loss, KnapsackInstance};
use semibandit::rng::seeded;
use semibandit::Error;

#[test]
fn knapsack_instance_round_trip() {
    let inst = KnapsackInstance::new(vec![0.25, 0.5, 0.125], vec![1.5, 3.0, 2.0], 4.0).unwrap();
    let mut buf = Vec::new();
    inst.write_csv(&mut buf).unwrap();
    let back = KnapsackInstance::read_csv(buf.as_slice(), "mem").unwrap();
    assert_eq!(back, inst);
}

#[test]
fn knapsack_parse_errors_name_the_line() {
    let text = "capacity,4\nv,s\n0.3,3\n0.2,two\n";
    match KnapsackInstance::read_csv(text.as_bytes(), "items.csv") {
        Err(Error::Parse { path, line, .. }) => assert_eq!((path.as_str(), line), ("items.csv", 4)),
        other => panic!("expected a parse error, got {other:?}"),
    }
    assert!(KnapsackInstance::read_csv("v,s\n0.3,3\n".as_bytes(), "x").is_err());
    assert!(KnapsackInstance::read_csv("capacity,4\nv,s\n0.3,5\n".as_bytes(), "x").is_err());
}

#[test]
fn distance_matrix_round_trip() {
    let (d, _) = sample_planted_distances(7, 3, 2.0, 1.0, &mut seeded(8)).unwrap();
    let mut buf = Vec::new();
    d.write_csv(&mut buf).unwrap();
    let back = DistanceMatrix::read_csv(buf.as_slice(), "mem", Some(2.0)).unwrap();
    for i in 0..7 {
        for j in 0..7 {
            assert_eq!(back.get(i, j), d.get(i, j));
        }
    }
    assert!(DistanceMatrix::read_csv("0,1\n1,0,2\n".as_bytes(), "m", None).is_err());
    assert!(DistanceMatrix::read_csv("0,1\n2,0\n".as_bytes(), "m", None).is_err());
}

#[test]
fn fixed_instances_from_files_drive_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let inst = KnapsackInstance::new(vec![0.3, 0.2, 0.1, 0.25], vec![3.0, 2.0, 1.0, 2.5], 4.0).unwrap();
    inst.write_csv(std::fs::File::create(dir.path().join("k.csv")).unwrap()).unwrap();
    let config_text = "env = \"knapsack\"\nT = [60]\nseeds = [1]\n\n[knapsack]\ninstance_file = \"k.csv\"\n";
    std::fs::write(dir.path().join("exp.toml"), config_text).unwrap();
    let config = ExperimentConfig::from_path(&dir.path().join("exp.toml")).unwrap();
    let rec = run(&config).unwrap()[0].record;
    let f = full_information_loss(&inst, 10.0).unwrap();
    let best = f.values().iter().copied().fold(f64::INFINITY, f64::min);
    assert!((rec.opt_loss - 60.0 * best).abs() < 1e-9);

    let (d, labels) = sample_planted_distances(6, 2, 1.0, 1.25, &mut seeded(3)).unwrap();
    d.write_csv(std::fs::File::create(dir.path().join("d.csv")).unwrap()).unwrap();
    let mut lf = std::fs::File::create(dir.path().join("labels.txt")).unwrap();
    for l in &labels {
        writeln!(lf, "class{l}").unwrap();
    }
    let config_text = "env = \"clustering\"\nT = [30]\nseeds = [1]\n\n[clustering]\nk = 2\ndistance_file = \"d.csv\"\nlabels_file = \"labels.txt\"\n";
    std::fs::write(dir.path().join("c.toml"), config_text).unwrap();
    let mut config = ExperimentConfig::from_path(&dir.path().join("c.toml")).unwrap();
    config.env = EnvKind::Clustering;
    let rec = run(&config).unwrap()[0].record;
    let reread = DistanceMatrix::from_path(&dir.path().join("d.csv"), None).unwrap();
    let g = linkage_loss_function(&reread, &labels, 2).unwrap();
    let best = g.values().iter().copied().fold(f64::INFINITY, f64::min);
    assert!((rec.opt_loss - 30.0 * best).abs() < 1e-9);
}

#[test]
fn config_errors_point_at_fields() {
    for (text, field) in [
        ("env = \"knapsack\"\nT = [10]\nseeds = []\n", "seeds"),
        ("env = \"knapsack\"\nT = [10]\nseeds = [1]\nlambda = 2.0\n", "lambda"),
        ("env = \"maze\"\nT = [10]\nseeds = [1]\n", "line 1"),
        ("env = \"knapsack\"\nseeds = [1]\n", "line 1"),
    ] {
        match ExperimentConfig::from_toml_str(text) {
            Err(Error::Config { field: f, .. }) => assert_eq!(f, field, "{text}"),
            other => panic!("{text}: expected a config error, got {other:?}"),
        }
    }
}
