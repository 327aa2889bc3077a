//! One guided attention call next to the plain kernel, showing how the mask
//! moves attention into the box and zeroes it outside.

use layout_guidance::guidance::{build_soft_mask, Grid};
use layout_guidance::{
    attention, guided_attention, AttentionInputs, BoundingBox, GuidanceSet, WeightSchedule,
};
use nalgebra::DMatrix;

fn main() -> layout_guidance::Result<()> {
    let grid = Grid::new(4, 1)?;
    // four cells, two tokens; every cell slightly prefers token 0
    let queries = DMatrix::from_row_slice(4, 2, &[2.0, 1.5, 2.0, 1.5, 2.0, 1.5, 2.0, 1.5]);
    let keys = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let inputs = AttentionInputs::new(queries, keys)?;

    let guidance = GuidanceSet::new(
        vec!["background".into(), "tree".into()],
        vec![layout_guidance::GuidanceEntry {
            bbox: BoundingBox::new(0.0, 0.0, 0.5, 1.0)?,
            concept: 1,
        }],
        512,
    )?;
    let (mask, _) = build_soft_mask(&guidance, grid, 2.0)?;
    let plain = attention(&inputs)?;

    println!("cell  plain(tree)  guided(tree) by w'");
    for w_prime in [0.0, 0.1, 0.2, 1.0] {
        let schedule = WeightSchedule::new(w_prime, 20)?;
        let guided = guided_attention(&inputs, &mask, &schedule, 20)?;
        let cols: Vec<String> = (0..4)
            .map(|cell| format!("{:.3}->{:.3}", plain.get(cell, 1), guided.get(cell, 1)))
            .collect();
        println!("w'={w_prime:<4} {}", cols.join("  "));
    }
    Ok(())
}
