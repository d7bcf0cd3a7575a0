use std::fs;
use std::path::Path;

use sdtw_cli::format::{read_series, write_series};
use sdtw_cli::{main_with_args, EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE};
use sdtw_core::SeriesBatch;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn sdtw(args: &[&str]) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = main_with_args(std::iter::once("sdtw").chain(args.iter().copied()), &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn scalar_pair_loss() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write(&a, "2\n");
    write(&b, "5\n");
    let r = sdtw(&["sdtw", p(&a), p(&b)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert_eq!(r.out, "pair_index,loss\n0,9.0\n");

    // Length-1 self-alignments cost nothing, so normalizing changes nothing here.
    let r = sdtw(&["sdtw", "--normalized", p(&a), p(&b)]);
    assert_eq!(r.out, "pair_index,loss\n0,9.0\n");
    let r = sdtw(&["sdtw", "--normalized", p(&a), p(&a)]);
    assert_eq!(r.out, "pair_index,loss\n0,0.0\n");
}

#[test]
fn manifest_keeps_pair_order_across_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let series = ["1\n2\n3\n", "0\n", "1\n2\n", "3\n1\n2\n", "4\n4\n"];
    for (k, s) in series.iter().enumerate() {
        write(&d.join(format!("s{k}.csv")), s);
    }
    write(
        &d.join("pairs.txt"),
        "# x,y\ns0.csv,s1.csv\ns2.csv,s4.csv\ns3.csv,s1.csv\ns4.csv,s2.csv\n",
    );
    let r = sdtw(&["sdtw", "--manifest", p(&d.join("pairs.txt")), "--gamma", "0.5"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let lines: Vec<&str> = r.out.lines().collect();
    assert_eq!(lines.len(), 5);

    // Each pair on its own must give the same line.
    let single = [
        ("s0.csv", "s1.csv"),
        ("s2.csv", "s4.csv"),
        ("s3.csv", "s1.csv"),
        ("s4.csv", "s2.csv"),
    ];
    for (k, (x, y)) in single.iter().enumerate() {
        let one = sdtw(&["sdtw", p(&d.join(x)), p(&d.join(y)), "--gamma", "0.5"]);
        let loss = one.out.lines().nth(1).unwrap().split(',').nth(1).unwrap().to_string();
        assert_eq!(lines[k + 1], format!("{k},{loss}"));
    }
}

#[test]
fn gradient_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(&d.join("a.csv"), "2\n");
    write(&d.join("b.csv"), "5\n");
    let grads = d.join("grads");
    let r = sdtw(&["sdtw", p(&d.join("a.csv")), p(&d.join("b.csv")), "--grad", p(&grads)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let gx = read_series(&grads.join("pair_0_grad_x.sdtw")).unwrap();
    let gy = read_series(&grads.join("pair_0_grad_y.sdtw")).unwrap();
    assert_eq!(gx.as_slice(), &[-6.0]);
    assert_eq!(gy.as_slice(), &[6.0]);
}

#[test]
fn loss_output_file_and_f32() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let x = SeriesBatch::new(vec![0.0, 1.0, 0.5, -1.0, 2.0, 0.0], 1, 3, 2).unwrap();
    write_series(&d.join("x.sdtw"), &x, 0).unwrap();
    write(&d.join("y.csv"), "0,1\n1,1\n");
    let out = d.join("loss.csv");
    let r = sdtw(&[
        "--precision",
        "f32",
        "sdtw",
        p(&d.join("x.sdtw")),
        p(&d.join("y.csv")),
        "--output",
        p(&out),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.is_empty());
    let text = fs::read_to_string(out).unwrap();
    let loss: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(loss.is_finite());
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for target in [&a, &b] {
        let r = sdtw(&["--seed", "11", "generate", "--kind", "blockwave", "--output", p(target)]);
        assert_eq!(r.code, EXIT_OK, "{}", r.err);
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 10);
    for name in &names {
        let (fa, fb) = (fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
        assert_eq!(fa, fb);
        assert_eq!(read_series(&a.join(name)).unwrap().len(), 128);
    }
}

#[test]
fn barycenter_zero_iterations_returns_the_init() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(&d.join("m.csv"), "0\n1\n3\n");
    write(&d.join("list.txt"), "m.csv\n");
    let (z, trace) = (d.join("z.csv"), d.join("trace.csv"));
    let r = sdtw(&[
        "barycenter",
        p(&d.join("list.txt")),
        "--iters",
        "0",
        "--init",
        "member",
        "--output",
        p(&z),
        "--trace",
        p(&trace),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert_eq!(read_series(&z).unwrap().as_slice(), &[0.0, 1.0, 3.0]);
    assert_eq!(fs::read_to_string(&trace).unwrap().lines().count(), 2);
}

#[test]
fn barycenter_trace_has_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    assert_eq!(
        sdtw(&[
            "generate",
            "--kind",
            "sine_mix",
            "--count",
            "3",
            "--length",
            "16",
            "--output",
            p(&data)
        ])
        .code,
        0
    );
    let trace = d.join("trace.csv");
    let r = sdtw(&[
        "barycenter",
        p(&data),
        "--iters",
        "7",
        "--tol",
        "0",
        "--output",
        p(&d.join("z.sdtw")),
        "--trace",
        p(&trace),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("iterations=7"));
    assert_eq!(fs::read_to_string(&trace).unwrap().lines().count(), 1 + 8);
}

#[test]
fn gradcheck_exit_codes() {
    let r = sdtw(&["gradcheck", "--sizes", "1,2,3"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.out);
    assert!(r.out.contains("all checks passed"));

    let r = sdtw(&["gradcheck", "--sizes", "4", "--tolerance", "0"]);
    assert_eq!(r.code, EXIT_CHECK_FAILED);
    assert!(r.out.contains("# FAILED"));
}

#[test]
fn bench_writes_csv() {
    let r = sdtw(&[
        "--precision",
        "f32",
        "bench",
        "--batch",
        "2",
        "--length",
        "16",
        "--dim",
        "3",
        "--repeats",
        "1",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let lines: Vec<&str> = r.out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1..].iter().all(|l| l.ends_with(",ok")), "{}", r.out);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    write(&dir.path().join("bad.csv"), "1,2\n3\n");
    for args in [
        vec!["sdtw", "--no-such-flag"],
        vec!["frobnicate"],
        vec!["sdtw", p(&missing), p(&missing)],
        vec!["sdtw", p(&dir.path().join("bad.csv")), p(&dir.path().join("bad.csv"))],
        vec!["bench", "--repeats", "0"],
        vec!["--threads", "0", "gradcheck"],
        vec!["sdtw", "--gamma", "-1", p(&missing), p(&missing)],
    ] {
        let r = sdtw(&args);
        assert_eq!(r.code, EXIT_USAGE, "{args:?}: {}", r.out);
        assert!(!r.err.is_empty(), "{args:?}");
    }
    assert_eq!(sdtw(&["--help"]).code, EXIT_OK);
}
