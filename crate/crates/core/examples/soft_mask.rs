//! Builds the Gaussian and flat masks for two boxes and prints them as grids.

use layout_guidance::guidance::{build_flat_mask, build_soft_mask, Grid, GAUSSIAN_PEAK};
use layout_guidance::{BoundingBox, GuidanceSet};

fn print_column(title: &str, grid: Grid, value: impl Fn(usize) -> String) {
    println!("{title}");
    for row in 0..grid.height {
        let line: Vec<String> = (0..grid.width)
            .map(|col| value(row * grid.width + col))
            .collect();
        println!("  {}", line.join(" "));
    }
}

fn main() -> layout_guidance::Result<()> {
    let guidance = GuidanceSet::from_named(&[
        ("dog", BoundingBox::new(0.0, 0.25, 0.5, 1.0)?),
        ("cat", BoundingBox::new(0.5, 0.0, 1.0, 0.5)?),
    ]);
    let grid = Grid::square(8);
    let (mask, warnings) = build_soft_mask(&guidance, grid, 2.0)?;
    assert!(warnings.is_empty());

    print_column(
        "gaussian mask, `dog` column (x = suppressed)",
        grid,
        |cell| {
            if mask.suppress()[(cell, 0)] {
                "  x  ".into()
            } else {
                format!("{:.3}", mask.additive()[(cell, 0)])
            }
        },
    );

    let flat = build_flat_mask(&guidance, grid, GAUSSIAN_PEAK)?;
    print_column("flat mask, `cat` column", grid, |cell| {
        format!("{:.3}", flat.additive()[(cell, 1)])
    });
    Ok(())
}
