//! Scores detections produced elsewhere against a guidance spec, the way
//! outputs of an external generator and detector would be evaluated.

use layout_guidance::evaluation::DetectionRecord;
use layout_guidance::harness::{
    evaluate_detections, read_detections, write_detections, DetectionsByImage, SampleObject,
    SampleSpec,
};
use layout_guidance::BoundingBox;

fn main() -> layout_guidance::Result<()> {
    let samples = vec![
        SampleSpec {
            image_id: "kitchen".into(),
            prompt: "a cat on a table next to a dog".into(),
            width: 640,
            height: 480,
            objects: vec![
                SampleObject {
                    category: "cat".into(),
                    bbox: [40.0, 200.0, 300.0, 460.0],
                },
                SampleObject {
                    category: "dog".into(),
                    bbox: [340.0, 120.0, 620.0, 470.0],
                },
            ],
        },
        SampleSpec {
            image_id: "street".into(),
            prompt: "a car".into(),
            width: 512,
            height: 512,
            objects: vec![SampleObject {
                category: "car".into(),
                bbox: [100.0, 250.0, 420.0, 500.0],
            }],
        },
    ];

    let mut detections = DetectionsByImage::new();
    detections.insert(
        "kitchen".into(),
        vec![
            DetectionRecord {
                class_name: "cat".into(),
                bbox: BoundingBox::new(0.07, 0.43, 0.45, 0.95)?,
                score: 0.9,
            },
            DetectionRecord {
                class_name: "dog".into(),
                bbox: BoundingBox::new(0.1, 0.1, 0.3, 0.3)?,
                score: 0.6,
            },
        ],
    );
    detections.insert(
        "street".into(),
        vec![DetectionRecord {
            class_name: "Car".into(),
            bbox: BoundingBox::new(0.2, 0.5, 0.8, 0.97)?,
            score: 0.8,
        }],
    );

    // round trip through the CSV format an external pipeline would write
    let file = std::env::temp_dir().join("detections.csv");
    write_detections(&file, &detections)?;
    let report = evaluate_detections(&samples, &read_detections(&file)?, "detections.csv")?;

    for r in report.records() {
        println!(
            "{:<4} IoU {:.3} size {:?} distance {:?}",
            r.class_name, r.recorded_iou, r.size_class, r.distance_class
        );
    }
    println!(
        "mean IoU {:.3}, R_suc {:.1}%",
        report.aggregate.mean_iou, report.aggregate.success_rate
    );
    print!("{}", report.subsets);
    Ok(())
}
