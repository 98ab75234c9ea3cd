use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_factorclust"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str], dir: &Path) -> String {
    let o = run(args, dir);
    assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    String::from_utf8(o.stdout).unwrap()
}

const SPEC: &str = r#"
days = 260
seed = 5
sectors = [{ label = "S1", count = 5 }, { label = "S2", count = 5 }, { label = "S3", count = 5 }]
countries = [{ label = "K1", count = 5 }, { label = "K2", count = 5 }, { label = "K3", count = 5 }]
"#;

fn synth_into(dir: &Path) {
    fs::write(dir.join("spec.toml"), SPEC).unwrap();
    ok(&["synth", "--spec", "spec.toml", "--out-dir", "data"], dir);
}

#[test]
fn subcommands_chain_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_into(dir);
    assert!(dir.join("data/prices.csv").is_file());

    ok(
        &[
            "ingest",
            "--prices",
            "data/prices.csv",
            "--metadata",
            "data/metadata.csv",
            "-o",
            "returns.csv",
        ],
        dir,
    );
    let returns = fs::read_to_string(dir.join("returns.csv")).unwrap();
    assert!(returns.starts_with("date,C001"));
    assert_eq!(returns.lines().count(), 261);

    ok(
        &[
            "defactor",
            "--returns",
            "returns.csv",
            "--metadata",
            "data/metadata.csv",
            "--grouping",
            "sector",
            "-o",
            "resid.csv",
        ],
        dir,
    );
    ok(
        &[
            "defactor",
            "--returns",
            "resid.csv",
            "--metadata",
            "data/metadata.csv",
            "--grouping",
            "country",
            "--index",
            "mean",
            "--fit",
            "ols",
            "--leave-one-out",
            "-o",
            "resid2.csv",
        ],
        dir,
    );
    let resid2 = fs::read_to_string(dir.join("resid2.csv")).unwrap();
    let comments: Vec<&str> = resid2.lines().take_while(|l| l.starts_with('#')).collect();
    assert_eq!(comments.len(), 2, "{comments:?}");
    assert!(comments[0].contains("sector") && comments[1].contains("country"));

    ok(
        &[
            "cluster",
            "--returns",
            "resid.csv",
            "--metadata",
            "data/metadata.csv",
            "--out-dir",
            "cl",
        ],
        dir,
    );
    for f in ["correlation.csv", "distance.csv", "merges.csv", "tree.nwk"] {
        assert!(dir.join("cl").join(f).is_file(), "{f}");
    }

    let by_tree = ok(
        &[
            "purity",
            "--tree",
            "cl/tree.nwk",
            "--metadata",
            "data/metadata.csv",
            "-B",
            "99",
            "-o",
            "p1.csv",
        ],
        dir,
    );
    let by_merges = ok(
        &[
            "purity",
            "--merges",
            "cl/merges.csv",
            "--distance",
            "cl/distance.csv",
            "--metadata",
            "data/metadata.csv",
            "-B",
            "99",
            "-o",
            "p2.csv",
        ],
        dir,
    );
    assert_eq!(by_tree, by_merges);
    assert!(by_tree.contains("K1") && by_tree.contains("S1"));
    assert_eq!(
        fs::read_to_string(dir.join("p1.csv")).unwrap(),
        fs::read_to_string(dir.join("p2.csv")).unwrap()
    );

    ok(
        &[
            "mds",
            "--distance",
            "cl/distance.csv",
            "--metadata",
            "data/metadata.csv",
            "-o",
            "emb.csv",
        ],
        dir,
    );
    let emb = fs::read_to_string(dir.join("emb.csv")).unwrap();
    assert!(emb.starts_with("id,x,y,label_sector,label_country"));
    assert_eq!(emb.lines().count(), 16);

    ok(
        &[
            "dynamic",
            "--returns",
            "resid.csv",
            "--metadata",
            "data/metadata.csv",
            "--lambda",
            "0.05",
            "--burn-in",
            "200",
            "--distances-out",
            "long.csv",
            "-o",
            "dyn.csv",
        ],
        dir,
    );
    let dynamic = fs::read_to_string(dir.join("dyn.csv")).unwrap();
    assert_eq!(dynamic.lines().next(), Some("date,label,purity"));
    // 60 emitted days times 3 countries.
    assert_eq!(dynamic.lines().count(), 1 + 60 * 3);
    let long = fs::read_to_string(dir.join("long.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 60 * 105);
}

#[test]
fn run_writes_a_manifest_and_honours_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = format!("replicates = 19\n[synth]\n{SPEC}");
    fs::write(dir.join("cfg.toml"), cfg).unwrap();
    ok(
        &[
            "run",
            "-c",
            "cfg.toml",
            "--output-dir",
            "o1",
            "--seed",
            "3",
            "--replicates",
            "29",
        ],
        dir,
    );
    let manifest = fs::read_to_string(dir.join("o1/manifest.toml")).unwrap();
    assert!(manifest.contains("mode = \"static\""));
    assert!(manifest.contains("seed = 3"));
    assert!(manifest.contains("replicates = 29"));
    let purity = fs::read_to_string(dir.join("o1/purity.csv")).unwrap();
    assert!(
        purity.lines().skip(1).all(|l| l.ends_with(",29")),
        "{purity}"
    );

    ok(
        &["run", "-c", "cfg.toml", "--output-dir", "o2", "--dynamic"],
        dir,
    );
    assert!(dir.join("o2/dynamic_purity.csv").is_file());
    assert!(fs::read_to_string(dir.join("o2/manifest.toml"))
        .unwrap()
        .contains("mode = \"dynamic\""));
}

#[test]
fn usage_and_validation_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&run(&[], dir)), 1);
    assert_eq!(code(&run(&["frobnicate"], dir)), 1);
    assert_eq!(code(&run(&["cluster", "--returns", "x.csv"], dir)), 1);
    assert_eq!(
        code(&run(
            &[
                "dynamic",
                "--returns",
                "a",
                "--metadata",
                "b",
                "--lambda",
                "abc",
                "-o",
                "c"
            ],
            dir
        )),
        1
    );
    assert_eq!(code(&run(&["--help"], dir)), 0);
    assert_eq!(code(&run(&["--version"], dir)), 0);

    fs::write(
        dir.join("both.toml"),
        "[input]\nprices = \"p.csv\"\nmetadata = \"m.csv\"\n[synth]\ndays = 10\n",
    )
    .unwrap();
    let o = run(&["run", "-c", "both.toml"], dir);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error:"));

    fs::write(dir.join("unknown.toml"), "colour = \"blue\"\n[synth]\n").unwrap();
    assert_eq!(code(&run(&["run", "-c", "unknown.toml"], dir)), 1);

    synth_into(dir);
    fs::write(
        dir.join("bad.csv"),
        "date,C001\n2001-01-01,0.1\nnot-a-date,0.2\n",
    )
    .unwrap();
    let o = run(
        &[
            "cluster",
            "--returns",
            "bad.csv",
            "--metadata",
            "data/metadata.csv",
            "--out-dir",
            "x",
        ],
        dir,
    );
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    let o = run(
        &[
            "dynamic",
            "--returns",
            "bad.csv",
            "--metadata",
            "data/metadata.csv",
            "--lambda",
            "1.5",
            "-o",
            "d.csv",
        ],
        dir,
    );
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn runtime_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("meta.csv"),
        "id,sector,country,currency\nA,s,c,EUR\nB,s,c,EUR\nC,t,c,EUR\n",
    )
    .unwrap();
    fs::write(
        dir.join("flat.csv"),
        "date,A,B,C\n2001-01-02,0.01,0.02,0.0\n2001-01-03,-0.01,0.01,0.0\n2001-01-04,0.02,-0.03,0.0\n",
    )
    .unwrap();
    let o = run(
        &[
            "cluster",
            "--returns",
            "flat.csv",
            "--metadata",
            "meta.csv",
            "--out-dir",
            "x",
        ],
        dir,
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("C"));

    let o = run(
        &[
            "cluster",
            "--returns",
            "missing.csv",
            "--metadata",
            "meta.csv",
            "--out-dir",
            "x",
        ],
        dir,
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn long_burn_in_gives_an_empty_series_with_a_warning() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_into(dir);
    ok(
        &[
            "ingest",
            "--prices",
            "data/prices.csv",
            "--metadata",
            "data/metadata.csv",
            "-o",
            "r.csv",
        ],
        dir,
    );
    let o = run(
        &[
            "dynamic",
            "--returns",
            "r.csv",
            "--metadata",
            "data/metadata.csv",
            "--burn-in",
            "260",
            "-o",
            "d.csv",
        ],
        dir,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("burn-in"), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(dir.join("d.csv")).unwrap(),
        "date,label,purity\n"
    );
}

#[test]
fn sector_removal_lifts_country_purity() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let spec = "days = 750\nseed = 21\n";
    fs::write(
        dir.join("raw.toml"),
        format!("replicates = 19\n[synth]\n{spec}"),
    )
    .unwrap();
    fs::write(
        dir.join("clean.toml"),
        format!(
            "replicates = 19\n[synth]\n{spec}\n[[defactor]]\ngrouping = \"sector\"\nindex = \"median\"\nfit = \"theil_sen\"\n"
        ),
    )
    .unwrap();
    ok(&["run", "-c", "raw.toml", "--output-dir", "raw"], dir);
    ok(&["run", "-c", "clean.toml", "--output-dir", "clean"], dir);

    let table = |p: &str| -> Vec<(String, String, f64)> {
        fs::read_to_string(dir.join(p))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].to_owned(), f[1].to_owned(), f[3].parse().unwrap())
            })
            .collect()
    };
    let mean = |rows: &[(String, String, f64)], g: &str| {
        let v: Vec<f64> = rows.iter().filter(|r| r.0 == g).map(|r| r.2).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let raw = table("raw/purity.csv");
    let clean = table("clean/purity.csv");
    assert!(mean(&raw, "sector") > mean(&raw, "country"));
    assert!(mean(&clean, "country") > mean(&raw, "country"));
}
