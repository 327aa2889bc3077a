use crate::evaluation::DetectionRecord;
use crate::geometry::BoundingBox;

use super::image::RenderedImage;
use super::vocab::ConceptVocabulary;

/// Components smaller than this many cells are treated as noise.
pub const MIN_COMPONENT_CELLS: usize = 4;

/// Stand-in object detector for rendered toy images.
///
/// Every 4-connected component of same-concept cells (background excluded)
/// with at least [`MIN_COMPONENT_CELLS`] cells becomes a detection whose box is
/// the component's tight cell bounds and whose score is its area fraction.
/// Cells with colors outside the palette are ignored.
pub fn oracle_detect(image: &RenderedImage, vocab: &ConceptVocabulary) -> Vec<DetectionRecord> {
    let grid = image.grid();
    let labels = image.labels(vocab);
    let mut seen = vec![false; grid.cells()];
    let mut found: Vec<(usize, usize, DetectionRecord)> = Vec::new();
    let mut stack = Vec::new();

    for start in 0..grid.cells() {
        let Some(concept) = labels[start] else {
            continue;
        };
        if seen[start] || concept == vocab.background() {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0, 0);
        let mut area = 0;
        while let Some(cell) = stack.pop() {
            let (r, c) = (cell / grid.width, cell % grid.width);
            area += 1;
            (r0, c0, r1, c1) = (r0.min(r), c0.min(c), r1.max(r), c1.max(c));
            let mut visit = |n: usize| {
                if !seen[n] && labels[n] == Some(concept) {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if r > 0 {
                visit(cell - grid.width);
            }
            if r + 1 < grid.height {
                visit(cell + grid.width);
            }
            if c > 0 {
                visit(cell - 1);
            }
            if c + 1 < grid.width {
                visit(cell + 1);
            }
        }
        if area < MIN_COMPONENT_CELLS {
            continue;
        }
        let (w, h) = (grid.width as f64, grid.height as f64);
        let bbox = BoundingBox::new(
            c0 as f64 / w,
            r0 as f64 / h,
            (c1 + 1) as f64 / w,
            (r1 + 1) as f64 / h,
        )
        .expect("component bounds form a valid box");
        found.push((
            concept,
            start,
            DetectionRecord {
                class_name: vocab.concept(concept).name.clone(),
                bbox,
                score: area as f64 / grid.cells() as f64,
            },
        ));
    }
    found.sort_by_key(|&(concept, start, _)| (concept, start));
    found.into_iter().map(|(_, _, d)| d).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::Grid;

    fn image(rows: &[&str], vocab: &ConceptVocabulary) -> RenderedImage {
        let grid = Grid::new(rows[0].len(), rows.len()).unwrap();
        let labels: Vec<usize> = rows
            .iter()
            .flat_map(|r| {
                r.bytes()
                    .map(|b| if b == b'.' { 0 } else { (b - b'0') as usize })
            })
            .collect();
        RenderedImage::from_labels(grid, &labels, vocab)
    }

    #[test]
    fn uniform_background_has_no_detections() {
        let vocab = ConceptVocabulary::toy();
        let img = RenderedImage::from_labels(Grid::square(16), &[0; 256], &vocab);
        assert!(oracle_detect(&img, &vocab).is_empty());
    }

    #[test]
    fn solid_block_gives_tight_box() {
        let vocab = ConceptVocabulary::toy();
        let grid = Grid::square(32);
        let labels: Vec<usize> = (0..grid.cells())
            .map(|c| {
                let (r, col) = (c / 32, c % 32);
                usize::from((5..15).contains(&r) && (12..22).contains(&col))
            })
            .collect();
        let dets = oracle_detect(&RenderedImage::from_labels(grid, &labels, &vocab), &vocab);
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].class_name, "circle");
        assert_eq!(
            dets[0].bbox.to_array(),
            [12.0 / 32.0, 5.0 / 32.0, 22.0 / 32.0, 15.0 / 32.0]
        );
        assert!((dets[0].score - 100.0 / 1024.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_blocks_and_noise() {
        let vocab = ConceptVocabulary::toy();
        let img = image(
            &[
                "22....22", "22....22", "........", "4.......", "........", "..33....", "..3.....",
                "........",
            ],
            &vocab,
        );
        let dets = oracle_detect(&img, &vocab);
        // two squares; the lone 4 and the 3-cell triangle are too small
        assert_eq!(dets.len(), 2);
        assert!(dets.iter().all(|d| d.class_name == "square"));
        assert_eq!(dets[0].bbox.to_array(), [0.0, 0.0, 0.25, 0.25]);
        assert_eq!(dets[1].bbox.to_array(), [0.75, 0.0, 1.0, 0.25]);
    }

    #[test]
    fn diagonal_cells_are_not_connected() {
        let vocab = ConceptVocabulary::toy();
        let img = image(&["11..", "11..", "..11", "..11"], &vocab);
        assert_eq!(oracle_detect(&img, &vocab).len(), 2);
    }

    #[test]
    fn unknown_colors_are_ignored() {
        let vocab = ConceptVocabulary::toy();
        let mut cells = vec![vocab.concept(1).color; 16];
        cells[5] = super::super::vocab::Rgb([1, 2, 3]);
        let dets = oracle_detect(&RenderedImage::new(Grid::square(4), cells), &vocab);
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, BoundingBox::full());
    }
}
