//! Selects one- and two-object samples whose captions mention every
//! annotated category, from COCO-style caption and instance files.
//!
//! `cargo run --example filter_dataset -- captions.json instances.json`
//! Without arguments a tiny inline dataset is used.

use std::path::PathBuf;

use layout_guidance::harness::{filter_samples, load_coco, split_by_object_count};

const CAPTIONS: &str = r#"{"annotations": [
    {"image_id": 1, "caption": "A dog sleeping on a couch."},
    {"image_id": 2, "caption": "A cat and a dog share a bowl."},
    {"image_id": 3, "caption": "Someone holding a frisbee."},
    {"image_id": 4, "caption": "Two people near a bus."},
    {"image_id": 5, "caption": "A hot dog with mustard."}
]}"#;

const INSTANCES: &str = r#"{
    "images": [
        {"id": 1, "width": 640, "height": 480}, {"id": 2, "width": 640, "height": 427},
        {"id": 3, "width": 500, "height": 375}, {"id": 4, "width": 640, "height": 480},
        {"id": 5, "width": 480, "height": 640}
    ],
    "categories": [{"id": 1, "name": "person"}, {"id": 6, "name": "bus"}, {"id": 17, "name": "cat"},
                   {"id": 18, "name": "dog"}, {"id": 34, "name": "frisbee"}, {"id": 58, "name": "hot dog"}],
    "annotations": [
        {"image_id": 1, "category_id": 18, "bbox": [100, 120, 300, 200], "iscrowd": 0},
        {"image_id": 2, "category_id": 17, "bbox": [10, 50, 200, 300], "iscrowd": 0},
        {"image_id": 2, "category_id": 18, "bbox": [300, 40, 320, 380], "iscrowd": 0},
        {"image_id": 3, "category_id": 1, "bbox": [50, 20, 200, 340], "iscrowd": 0},
        {"image_id": 3, "category_id": 34, "bbox": [260, 100, 60, 40], "iscrowd": 0},
        {"image_id": 4, "category_id": 1, "bbox": [0, 0, 100, 300], "iscrowd": 1},
        {"image_id": 4, "category_id": 6, "bbox": [200, 100, 400, 300], "iscrowd": 0},
        {"image_id": 5, "category_id": 58, "bbox": [40, 200, 400, 250], "iscrowd": 0}
    ]
}"#;

fn main() -> layout_guidance::Result<()> {
    let args: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    let _inline;
    let (captions, instances) = match args.as_slice() {
        [c, i] => (c.clone(), i.clone()),
        _ => {
            _inline = tempfile_dir();
            let c = _inline.join("captions.json");
            let i = _inline.join("instances.json");
            std::fs::write(&c, CAPTIONS).expect("temp dir is writable");
            std::fs::write(&i, INSTANCES).expect("temp dir is writable");
            (c, i)
        }
    };

    let all = load_coco(&captions, &instances)?;
    let eligible = filter_samples(&all);
    for s in &all {
        let kept = eligible.iter().any(|e| e.image_id == s.image_id);
        println!(
            "{:>3} {:<8} {}",
            s.image_id,
            if kept { "kept" } else { "dropped" },
            s.prompt
        );
    }
    let picked = split_by_object_count(&eligible, 2, 1, 0)?;
    println!(
        "selected: {:?}",
        picked.iter().map(|s| &s.image_id).collect::<Vec<_>>()
    );
    Ok(())
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("filter-dataset-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir is writable");
    dir
}
