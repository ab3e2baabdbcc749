use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use smlm_l0::io::{read_molecules, read_stack, write_stack};
use smlm_l0::operator::{ForwardOperator, OperatorSpec, PsfSpec};
use smlm_l0::sim::{rasterize, FrameStack};
use smlm_l0::{fine_index_to_nm, CoarseFrame, GridGeometry, Molecule};

fn smlm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smlm-l0")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn zero_stack(path: &Path, m: usize, frames: usize) {
    let g = GridGeometry::new(m, 4, 100.0).unwrap();
    let frames = (0..frames).map(|f| CoarseFrame::zeros(g, f)).collect();
    write_stack(path, &FrameStack::new(g, frames).unwrap()).unwrap();
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(smlm(&["--help"]).status.code(), Some(0));
    assert_eq!(smlm(&["localize", "--help"]).status.code(), Some(0));
}

#[test]
fn zero_frames_give_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let stack = dir.path().join("s.hdr");
    let truth = dir.path().join("t.csv");
    let out = smlm(&["simulate", "--size", "16", "--frames", "0", "--out-stack", s(&stack), "--out-truth", s(&truth)]);
    assert_ok(&out);
    assert!(read_stack(&stack, 4, 100.0).unwrap().is_empty());
    assert_eq!(fs::read_to_string(&truth).unwrap(), "frame,xnano,ynano,intensity\n");
    let manifest = fs::read_to_string(dir.path().join("s.hdr.manifest.json")).unwrap();
    assert!(manifest.contains("\"command\": \"simulate\""));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("t.csv");
    assert_eq!(smlm(&["simulate", "--frames", "1", "--out-truth", s(&truth)]).status.code(), Some(1));
    assert_eq!(smlm(&["frobnicate"]).status.code(), Some(1));

    let stack = dir.path().join("z.hdr");
    zero_stack(&stack, 16, 1);
    let mols = dir.path().join("m.csv");
    let out = smlm(&["localize", "--in-stack", s(&stack), "--k", "0", "--out-molecules", s(&mols)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
    let out = smlm(&["localize", "--in-stack", s(&stack), "--rho-final", "soon", "--out-molecules", s(&mols)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.hdr");
    let mols = dir.path().join("m.csv");
    let out = smlm(&["localize", "--in-stack", s(&missing), "--out-molecules", s(&mols)]);
    assert_eq!(out.status.code(), Some(2));

    let stack = dir.path().join("seven.hdr");
    zero_stack(&stack, 16, 7);
    let out = smlm(&["sum", "--group", "5", "--in", s(&stack), "--out", s(&dir.path().join("o.hdr"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_stack_localizes_to_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let stack = dir.path().join("z.hdr");
    zero_stack(&stack, 16, 2);
    let mols = dir.path().join("m.csv");
    let trace = dir.path().join("trace.csv");
    let out = smlm(&[
        "localize", "--in-stack", s(&stack), "--k", "3", "--out-molecules", s(&mols), "--out-trace", s(&trace),
    ]);
    assert_ok(&out);
    assert_eq!(fs::read_to_string(&mols).unwrap(), "frame,xnano,ynano,intensity\n");
    let trace = fs::read_to_string(&trace).unwrap();
    assert!(trace.starts_with("frame,outer_iter,rho,objective,gap,l0\n"));
    assert!(trace.lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn five_molecules_end_to_end() {
    let g = GridGeometry::new(16, 4, 100.0).unwrap();
    let op = ForwardOperator::new(OperatorSpec::new(g, PsfSpec::from_fwhm_nm(258.21, 25.0).unwrap()).unwrap());
    let truth: Vec<Molecule> = [(8, 9), (14, 48), (30, 28), (50, 12), (47, 50)]
        .iter()
        .enumerate()
        .map(|(q, &(i, j))| {
            let (x_nm, y_nm) = fine_index_to_nm(i, j, &g).unwrap();
            Molecule { x_nm, y_nm, intensity: 700.0 + 150.0 * q as f64, frame_index: 0 }
        })
        .collect();
    let frame = op.apply_a(&rasterize(&truth, &g).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let stack = dir.path().join("five.hdr");
    write_stack(&stack, &FrameStack::new(g, vec![frame]).unwrap()).unwrap();
    let mols = dir.path().join("m.csv");
    assert_ok(&smlm(&["localize", "--in-stack", s(&stack), "--k", "5", "--out-molecules", s(&mols)]));
    let found = read_molecules(&mols, g).unwrap();
    assert_eq!(found.len(), 5);
    let one_pixel = 25.0 * 2f64.sqrt() + 1e-9;
    for t in &truth {
        let nearest = found.molecules().iter().map(|r| r.distance_nm(t)).fold(f64::INFINITY, f64::min);
        assert!(nearest <= one_pixel, "truth {t:?} nearest {nearest}");
    }
}

#[test]
fn sum_and_regroup_truth() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.hdr");
    let truth = dir.path().join("t.csv");
    assert_ok(&smlm(&[
        "simulate", "--size", "16", "--frames", "10", "--molecules-per-frame", "3", "--seed", "4",
        "--out-stack", s(&raw), "--out-truth", s(&truth),
    ]));
    let summed = dir.path().join("sum.hdr");
    let truth2 = dir.path().join("t2.csv");
    assert_ok(&smlm(&[
        "sum", "--group", "5", "--in", s(&raw), "--out", s(&summed), "--truth-in", s(&truth), "--truth-out", s(&truth2),
    ]));
    let a = read_stack(&raw, 4, 100.0).unwrap();
    let b = read_stack(&summed, 4, 100.0).unwrap();
    assert_eq!(b.len(), 2);
    let total: f64 = a.frames()[..5].iter().map(|f| f.values().sum()).sum();
    assert!((b.frames()[0].values().sum() - total).abs() < 1e-3 * total.abs().max(1.0));
    let g = *a.geometry();
    let t2 = read_molecules(&truth2, g).unwrap();
    assert_eq!(t2.len(), 30);
    assert!(t2.molecules().iter().all(|m| m.frame_index < 2));

    let same = dir.path().join("same.hdr");
    assert_ok(&smlm(&["sum", "--group", "1", "--in", s(&raw), "--out", s(&same)]));
    assert_eq!(read_stack(&same, 4, 100.0).unwrap(), a);

    let out = smlm(&["sum", "--group", "5", "--in", s(&raw), "--out", s(&summed), "--truth-in", s(&truth)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_tables() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.csv");
    fs::write(&truth, "frame,xnano,ynano,intensity\n0,100,100,1\n0,900,400,1\n1,50,60,2\n").unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "frame,xnano,ynano,intensity\n").unwrap();
    let table = dir.path().join("table.csv");
    let out = smlm(&[
        "evaluate", "--truth", s(&truth), "--recon", s(&truth), s(&empty), "--size", "16", "--out-table", s(&table),
    ]);
    assert_ok(&out);
    let csv = fs::read_to_string(&table).unwrap();
    assert_eq!(
        csv,
        "method,50,100,150,200,250\n\
         truth,100.0000,100.0000,100.0000,100.0000,100.0000\n\
         empty,0.0000,0.0000,0.0000,0.0000,0.0000\n"
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("250nm") && text.contains("truth"));
}

#[test]
fn render_one_molecule() {
    let dir = tempfile::tempdir().unwrap();
    let mols = dir.path().join("m.csv");
    fs::write(&mols, "frame,xnano,ynano,intensity\n0,12.5,37.5,5\n").unwrap();
    let img = dir.path().join("m.pgm");
    assert_ok(&smlm(&["render", "--molecules", s(&mols), "--out", s(&img), "--size", "16"]));
    let bytes = fs::read(&img).unwrap();
    let header = b"P5\n64 64\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    let pixels = &bytes[header.len()..];
    assert_eq!(pixels.len(), 64 * 64);
    assert_eq!(pixels[64], 255);
    assert_eq!(pixels.iter().filter(|p| **p != 0).count(), 1);
}
