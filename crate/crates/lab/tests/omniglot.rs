use std::fs;
use std::path::Path;

use image::{GrayImage, Luma};
use taml_lab::omniglot::{ingest, IngestError};
use taml_lab::parse_config;
use taml_lab::runner;

/// `alphabets x characters` folders of `instances` 6x6 PNGs each. Pixel
/// values depend on the position so every image differs.
fn fixture(root: &Path, alphabets: usize, characters: usize, instances: usize) {
    for a in 0..alphabets {
        for c in 0..characters {
            let dir = root.join(format!("alphabet{a:02}")).join(format!("character{c:02}"));
            fs::create_dir_all(&dir).unwrap();
            for i in 0..instances {
                let img = GrayImage::from_fn(6, 6, |x, y| {
                    Luma([((x * 31 + y * 17 + (a * 7 + c * 5 + i) as u32 * 13) % 256) as u8])
                });
                img.save(dir.join(format!("{i:02}.png"))).unwrap();
            }
        }
    }
}

#[test]
fn rotations_give_four_classes_per_character() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path(), 2, 2, 20);
    let data = ingest(tmp.path(), 6, true).unwrap();
    assert_eq!(data.characters.len(), 2 * 2 * 4);
    assert!(data.characters.iter().all(|c| c.instances.len() == 20));
    assert_eq!(data.characters[0].name, "alphabet00/character00");
    assert_eq!(data.characters[1].name, "alphabet00/character00@90");
    assert_eq!(data.characters[4].name, "alphabet00/character01");
    // a quarter turn permutes the pixels of each image
    let (a, b) = (&data.characters[0].instances[3], &data.characters[1].instances[3]);
    assert_ne!(a, b);
    let mut sa = a.clone();
    let mut sb = b.clone();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    assert_eq!(sa, sb);

    let plain = ingest(tmp.path(), 6, false).unwrap();
    assert_eq!(plain.characters.len(), 4);
    assert_eq!(plain.characters[0].instances, data.characters[0].instances);
}

#[test]
fn pixels_are_resized_and_scaled() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("alpha/white");
    fs::create_dir_all(&dir).unwrap();
    GrayImage::from_pixel(10, 10, Luma([255]))
        .save(dir.join("a.png"))
        .unwrap();
    GrayImage::from_pixel(10, 10, Luma([0]))
        .save(dir.join("b.bmp"))
        .unwrap();
    let data = ingest(tmp.path(), 4, false).unwrap();
    let inst = &data.characters[0].instances;
    assert_eq!(inst.len(), 2);
    assert_eq!(inst[0], vec![1.0; 16]);
    assert_eq!(inst[1], vec![0.0; 16]);

    fixture(tmp.path(), 1, 1, 3);
    let data = ingest(tmp.path(), 3, false).unwrap();
    for c in &data.characters {
        for x in &c.instances {
            assert_eq!(x.len(), 9);
            assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn unreadable_files_are_skipped_and_empty_classes_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path(), 1, 2, 3);
    let bad = tmp.path().join("alphabet00/character01/zz.png");
    fs::write(&bad, b"not an image").unwrap();
    let data = ingest(tmp.path(), 6, false).unwrap();
    assert_eq!(data.characters[1].instances.len(), 3);
    assert_eq!(data.skipped.len(), 1);
    assert_eq!(data.skipped[0].path, "alphabet00/character01/zz.png");
    let split = data.split(1, 0, 0).unwrap();
    assert_eq!(split.manifest.skipped, data.skipped);

    let empty = tmp.path().join("alphabet00/character02");
    fs::create_dir_all(&empty).unwrap();
    fs::write(empty.join("x.png"), b"").unwrap();
    match ingest(tmp.path(), 6, false) {
        Err(IngestError::EmptyClass(name)) => assert_eq!(name, "alphabet00/character02"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        ingest(&tmp.path().join("nope"), 6, false),
        Err(IngestError::Io { .. })
    ));
}

#[test]
fn split_is_seeded_and_disjoint() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path(), 3, 4, 2);
    let data = ingest(tmp.path(), 6, true).unwrap();
    let s = data.split(6, 2, 5).unwrap();
    let m = &s.manifest;
    assert_eq!((m.train.len(), m.val.len(), m.test.len()), (6, 2, 4));
    assert_eq!(s.train.class_count(), 24);
    assert_eq!(s.val.as_ref().unwrap().class_count(), 8);
    assert_eq!(s.test.class_count(), 16);
    let mut all: Vec<&String> = m.train.iter().chain(&m.val).chain(&m.test).collect();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), 12);

    let again = ingest(tmp.path(), 6, true).unwrap().split(6, 2, 5).unwrap();
    assert_eq!(
        serde_json::to_string(&again.manifest).unwrap(),
        serde_json::to_string(m).unwrap()
    );
    let other = (0..10)
        .map(|seed| data.split(6, 2, seed).unwrap().manifest.train)
        .filter(|t| t != &m.train)
        .count();
    assert!(other > 0, "seed does not move the split");
    assert!(matches!(data.split(10, 2, 0), Err(IngestError::SplitTooLarge { .. })));
}

#[test]
fn omniglot_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("omniglot");
    fixture(&root, 2, 3, 6);
    let text = format!(
        "task = omniglot\nomniglot_root = {}\nimage_side = 5\ntrain_characters = 3\nval_characters = 1\n\
         N = 3\nK = 1\nQ = 2\ntest_queries = 3\nhidden = 8\nM = 2\nmeta_iterations = 3\ntest_tasks = 5\n\
         output_dir = {}\n",
        root.display(),
        tmp.path().join("run").display()
    );
    let record = runner::run(&parse_config(&text, &[]).unwrap()).unwrap();
    let manifest = fs::read_to_string(record.dir.join("split_manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["train"].as_array().unwrap().len(), 3);
    assert_eq!(m["test"].as_array().unwrap().len(), 2);
    assert_eq!(record.summary.meta_test.unwrap().curve.len(), 2);

    // six instances cannot cover one support and six query draws
    let starved = text.replace("Q = 2", "Q = 6");
    assert!(runner::run(&parse_config(&starved, &[]).unwrap()).is_err());
}
