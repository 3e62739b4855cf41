//! Acceptance suite. Runs as a plain binary so that every criterion prints
//! one PASS/FAIL line even when the whole suite succeeds.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use labelsynth::grid::{CellGrid, GridGeometry, Rect, SemClass};
use labelsynth::metadata::MetadataRecord;
use labelsynth::palette::{
    class_histogram, decode_label_image, encode_label_image, strip_dynamic, ClassPalette, LabelImage,
};
use labelsynth::pipeline::{run_batch, write_synthetic_backgrounds, RunConfig};
use labelsynth::scene::{parse_scene_spec, SceneSpec};
use labelsynth::synth::{brute_force_min_cost, connect_pivots, guessable_region, CostModel, PathProblem, SearchMode};
use labelsynth::verify::verify_output;

// Pinned thresholds.
const ORACLE_INSTANCES: usize = 150;
const ORACLE_BUDGET: Duration = Duration::from_secs(10);
const IMAGES_PER_GROUP: usize = 100;
const SOUNDNESS_BUDGET: Duration = Duration::from_secs(300);
const CODEC_IMAGES: usize = 1000;
const FUZZ_INPUTS: usize = 10_000;
const MIN_GOLDEN: usize = 10;
const THROUGHPUT_BUDGET: Duration = Duration::from_secs(30);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

/// Classes each group template must produce, written out independently of the library.
fn template(group: u8) -> BTreeSet<SemClass> {
    use SemClass::*;
    match group {
        1 => [Pathology].into(),
        2 => [Pathology, Intubation, SurgicalTool].into(),
        3 => [Intubation].into(),
        4 | 5 => [Intubation, SurgicalTool].into(),
        _ => unreachable!(),
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let g = GridGeometry::new(16, 16, 8, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut checked, mut mismatches, mut nontrivial) = (0, 0, 0);
    while checked < ORACLE_INSTANCES {
        let void: BTreeSet<(usize, usize)> =
            (0..rng.random_range(0..16)).map(|_| (rng.random_range(0..8), rng.random_range(0..8))).collect();
        let grid = CellGrid::from_fn(g, |x, y| {
            if void.contains(&(x / 2, y / 2)) { SemClass::Void } else { SemClass::VocalFolds }
        });
        let cell = |rng: &mut ChaCha8Rng| (rng.random_range(0..16), rng.random_range(0..16));
        let (p, q) = (cell(&mut rng), cell(&mut rng));
        let problem = PathProblem {
            grid: &grid,
            placement: &[SemClass::VocalFolds],
            scope: Rect::new(0, 0, 15, 15),
            padding: 0,
            excluded: None,
            adjacency: Default::default(),
            cost: CostModel::default(),
            mode: SearchMode::Exhaustive,
            exact_limit: 20,
            node_budget: 50_000,
        };
        let region = guessable_region(&problem, p, q);
        if region.len() > 20 {
            continue;
        }
        let Ok(best) = brute_force_min_cost(&g, (p, q), &region, problem.adjacency, problem.cost) else {
            continue;
        };
        let found = connect_pivots(&problem, &[p, q], false, &mut rng);
        checked += 1;
        match (best, found) {
            (Some(b), Ok(sel)) if sel.pair_costs == [b] => nontrivial += usize::from(b > 0),
            (None, Err(_)) => {}
            _ => mismatches += 1,
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < ORACLE_BUDGET,
        format!("{checked} instances, {mismatches} mismatches, {nontrivial} with positive cost, {:.2}s", elapsed.as_secs_f64()),
    )
}

struct Batch {
    group: u8,
    cfg: RunConfig,
}

fn soundness(batches: &[Batch], generation: Duration) -> Outcome {
    let start = Instant::now();
    let mut report = Vec::new();
    let mut ok = true;
    for b in batches {
        let mut passed = 0;
        let mut presence = 0;
        for i in 0..IMAGES_PER_GROUP {
            let (img, meta) = outputs(&b.cfg, i);
            let Ok(text) = fs::read_to_string(&meta) else { continue };
            let record = MetadataRecord::from_json(&text).unwrap();
            let bg = b.cfg.input_dir.join(&record.background);
            if verify_output(&img, &meta, &b.cfg.palette, Some(&bg)).is_ok_and(|r| r.passed()) {
                passed += 1;
            }
            let present = load(&img).iter().map(|(_, c)| c).filter(|c| c.is_dynamic()).collect::<BTreeSet<_>>();
            if present == template(b.group) {
                presence += 1;
            }
        }
        ok &= passed == IMAGES_PER_GROUP && presence == IMAGES_PER_GROUP;
        report.push(format!("group {}: {passed}/{IMAGES_PER_GROUP} verified, {presence} match template", b.group));
    }
    let elapsed = generation + start.elapsed();
    ok &= elapsed < SOUNDNESS_BUDGET;
    outcome(ok, format!("{}; {:.1}s", report.join(", "), elapsed.as_secs_f64()))
}

fn placement_and_conservation(batches: &[Batch]) -> Outcome {
    let (mut images, mut bad) = (0, Vec::new());
    for b in batches {
        for i in 0..IMAGES_PER_GROUP {
            let (img, meta) = outputs(&b.cfg, i);
            let Ok(text) = fs::read_to_string(&meta) else { continue };
            let record = MetadataRecord::from_json(&text).unwrap();
            let out = load(&img);
            let bg = strip_dynamic(&load(&b.cfg.input_dir.join(&record.background)));
            images += 1;
            // moves[(from, to)] over changed cells
            let mut moves: BTreeMap<(SemClass, SemClass), usize> = BTreeMap::new();
            for ((x, y), c) in out.iter() {
                let before = bg.get(x, y);
                if before != c {
                    *moves.entry((before, c)).or_default() += 1;
                }
            }
            let lawful = |from: SemClass, to: SemClass| match to {
                SemClass::Pathology => from == SemClass::VocalFolds,
                SemClass::Intubation => from == SemClass::GlottalSpace,
                SemClass::SurgicalTool => from == SemClass::VocalFolds || from == SemClass::GlottalSpace,
                _ => false,
            };
            if let Some((&(from, to), _)) = moves.iter().find(|(&(f, t), _)| !lawful(f, t)) {
                bad.push(format!("group {} image {i}: {from} -> {to}", b.group));
                continue;
            }
            // Every generated class gains exactly the cells its objects report
            // filling, and background classes lose exactly that many in total.
            let (h0, h1) = (class_histogram(&bg), class_histogram(&out));
            let mut gained_total = 0;
            for c in SemClass::DYNAMIC {
                let recorded: usize = record.objects.iter().filter(|o| o.class == c).map(|o| o.filled_cells).sum();
                let gain = h1.get(c) - h0.get(c);
                gained_total += gain;
                if gain != recorded {
                    bad.push(format!("group {} image {i}: {c} gained {gain}, metadata says {recorded}", b.group));
                }
            }
            let mut lost_total = 0;
            for c in SemClass::ALL.into_iter().filter(|c| !c.is_dynamic()) {
                match h0.get(c).checked_sub(h1.get(c)) {
                    Some(lost) => lost_total += lost,
                    None => bad.push(format!("group {} image {i}: {c} grew", b.group)),
                }
            }
            if lost_total != gained_total {
                bad.push(format!("group {} image {i}: lost {lost_total} background cells, gained {gained_total}", b.group));
            }
            if b.group == 1 && h1.get(SemClass::Pathology) != h0.get(SemClass::VocalFolds) - h1.get(SemClass::VocalFolds) {
                bad.push(format!("group 1 image {i}: purple gain differs from vocal-fold loss"));
            }
        }
    }
    outcome(bad.is_empty() && images > 0, format!("{images} images, {} violations{}", bad.len(), bad.first().map(|b| format!(", first: {b}")).unwrap_or_default()))
}

fn containment(batches: &[Batch]) -> Outcome {
    let (mut images, mut bad) = (0, 0);
    for b in batches.iter().filter(|b| template(b.group).contains(&SemClass::Pathology)) {
        for i in 0..IMAGES_PER_GROUP {
            let (img, _) = outputs(&b.cfg, i);
            if !img.exists() {
                continue;
            }
            let cells: Vec<(usize, usize)> =
                load(&img).iter().filter(|(_, c)| *c == SemClass::Pathology).map(|(p, _)| p).collect();
            images += 1;
            let blocks: BTreeSet<(usize, usize)> = cells.iter().map(|&(x, y)| (x / 64, y / 64)).collect();
            if blocks.len() != 1 {
                bad += 1;
            }
        }
    }
    outcome(bad == 0 && images > 0, format!("{images} images with pathology, {bad} spanning more than one 64x64 block"))
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism(input: &Path, scratch: &Path) -> Outcome {
    let run = |name: &str, jobs: usize| {
        let mut cfg = RunConfig::new(input, scratch.join(name), SceneSpec::for_group(2).unwrap());
        cfg.count = 12;
        cfg.master_seed = 99;
        cfg.jobs = jobs;
        run_batch(&cfg).unwrap();
        tree(&cfg.output_dir)
    };
    let a = run("serial", 1);
    let b = run("serial_again", 1);
    let c = run("parallel", 4);
    let d = run("parallel_again", 4);
    let same = a == b && a == c && c == d;
    outcome(same && a.len() == 25, format!("{} files per tree, jobs 1 and 4, identical: {same}", a.len()))
}

fn codec_round_trip() -> Outcome {
    let palette = ClassPalette::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = 0;
    let dir = tempfile::tempdir().unwrap();
    for i in 0..CODEC_IMAGES {
        let (w, h) = (8 * rng.random_range(1..=8), 8 * rng.random_range(1..=8));
        let mut pixels = Vec::with_capacity(w * h * 3);
        for _ in 0..w * h {
            pixels.extend_from_slice(&palette.color(SemClass::ALL[rng.random_range(0..7)]));
        }
        let img = LabelImage { width: w, height: h, pixels };
        let ext = if i % 2 == 0 { "png" } else { "ppm" };
        let path = dir.path().join(format!("{i}.{ext}"));
        img.write(&path).unwrap();
        let read = LabelImage::read(&path).unwrap();
        let grid = decode_label_image(&read, &palette, 8, 2).unwrap();
        if read != img || encode_label_image(&grid, &palette) != img {
            failures += 1;
        }
        let again = decode_label_image(&encode_label_image(&grid, &palette), &palette, 8, 2).unwrap();
        if again != grid {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("{CODEC_IMAGES} images through png/ppm files, {failures} mismatches"))
}

fn dsl_totality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let alphabet = b"scene{}object=;,# \n\tpathology_intubation0123456789.";
    panic::set_hook(Box::new(|_| {}));
    let mut crashes = 0;
    for i in 0..FUZZ_INPUTS {
        let len = rng.random_range(0..256);
        // half raw bytes, half bytes drawn from the language's own alphabet
        let bytes: Vec<u8> = (0..len)
            .map(|_| if i % 2 == 0 { rng.random() } else { alphabet[rng.random_range(0..alphabet.len())] })
            .collect();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        if panic::catch_unwind(|| parse_scene_spec(&text)).is_err() {
            crashes += 1;
        }
    }
    let _ = panic::take_hook();

    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut golden = BTreeMap::new();
    for kind in ["valid", "invalid"] {
        let mut passed = 0;
        let mut total = 0;
        for e in fs::read_dir(root.join(kind)).unwrap() {
            let p = e.unwrap().path();
            if p.extension().is_none_or(|x| x != "scene") {
                continue;
            }
            total += 1;
            let src = fs::read_to_string(&p).unwrap();
            let expected = fs::read_to_string(p.with_extension("expected")).unwrap();
            let got = match parse_scene_spec(&src) {
                Ok(spec) if kind == "valid" => spec.to_string(),
                Err(d) if kind == "invalid" => format!("{d}\n"),
                _ => String::new(),
            };
            passed += usize::from(got == expected);
        }
        golden.insert(kind, (passed, total));
    }
    let (v, i) = (golden["valid"], golden["invalid"]);
    let ok = crashes == 0 && v.0 == v.1 && i.0 == i.1 && v.1 >= MIN_GOLDEN && i.1 >= MIN_GOLDEN;
    outcome(ok, format!("{FUZZ_INPUTS} fuzz inputs, {crashes} panics; golden valid {}/{}, invalid {}/{}", v.0, v.1, i.0, i.1))
}

fn throughput(input: &Path, scratch: &Path) -> Outcome {
    let mut cfg = RunConfig::new(input, scratch.join("throughput"), SceneSpec::for_group(2).unwrap());
    cfg.master_seed = 8;
    let start = Instant::now();
    let summary = run_batch(&cfg).unwrap();
    let elapsed = start.elapsed();
    outcome(
        summary.succeeded == 1 && elapsed < THROUGHPUT_BUDGET,
        format!("one 512x512 group-2 image in {:.3}s (heuristic mode)", elapsed.as_secs_f64()),
    )
}

fn outputs(cfg: &RunConfig, i: usize) -> (PathBuf, PathBuf) {
    (cfg.output_dir.join(format!("labels/{i:04}.png")), cfg.output_dir.join(format!("meta/{i:04}.json")))
}

fn load(path: &Path) -> CellGrid {
    decode_label_image(&LabelImage::read(path).unwrap(), &ClassPalette::default(), 64, 8).unwrap()
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().unwrap();
    let input = scratch.path().join("backgrounds");
    write_synthetic_backgrounds(&input, 8, &GridGeometry::default(), 42, &ClassPalette::default()).unwrap();

    let started = Instant::now();
    let batches: Vec<Batch> = (1..=5u8)
        .map(|group| {
            let mut cfg = RunConfig::new(&input, scratch.path().join(format!("group{group}")), SceneSpec::for_group(group).unwrap());
            cfg.count = IMAGES_PER_GROUP;
            cfg.master_seed = 1000 + group as u64;
            cfg.jobs = 0;
            run_batch(&cfg).unwrap();
            Batch { group, cfg }
        })
        .collect();
    let generation = started.elapsed();

    let results = [
        ("1 oracle equivalence", oracle_equivalence()),
        ("2 constraint soundness", soundness(&batches, generation)),
        ("3 placement safety and conservation", placement_and_conservation(&batches)),
        ("4 pathology containment", containment(&batches)),
        ("5 determinism", determinism(&input, scratch.path())),
        ("6 codec round-trip", codec_round_trip()),
        ("7 scene language totality", dsl_totality()),
        ("8 throughput", throughput(&input, scratch.path())),
    ];
    let mut all = true;
    for (name, r) in &results {
        all &= r.passed;
        println!("acceptance criterion {name}: {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    if all { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
