use std::io::Write;

use crate::guidance::Grid;

use super::vocab::{ConceptVocabulary, Rgb};

/// The generator's output: one display color per latent cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedImage {
    grid: Grid,
    cells: Vec<Rgb>,
}

impl RenderedImage {
    pub fn new(grid: Grid, cells: Vec<Rgb>) -> Self {
        assert_eq!(grid.cells(), cells.len(), "one color per cell");
        Self { grid, cells }
    }

    /// Paints every cell with the color of the given concept index.
    pub fn from_labels(grid: Grid, labels: &[usize], vocab: &ConceptVocabulary) -> Self {
        Self::new(
            grid,
            labels.iter().map(|&l| vocab.concept(l).color).collect(),
        )
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn cells(&self) -> &[Rgb] {
        &self.cells
    }

    pub fn cell(&self, row: usize, col: usize) -> Rgb {
        self.cells[row * self.grid.width + col]
    }

    /// Concept index per cell; `None` for colors outside the palette.
    pub fn labels(&self, vocab: &ConceptVocabulary) -> Vec<Option<usize>> {
        self.cells
            .iter()
            .map(|&c| vocab.index_of_color(c))
            .collect()
    }

    /// Binary PPM (P6) with each cell drawn as a `scale × scale` block.
    pub fn to_ppm(&self, scale: usize) -> Vec<u8> {
        let scale = scale.max(1);
        let (w, h) = (self.grid.width * scale, self.grid.height * scale);
        let mut out = Vec::with_capacity(w * h * 3 + 20);
        write!(out, "P6\n{w} {h}\n255\n").expect("writing to a Vec cannot fail");
        for row in 0..self.grid.height {
            let line: Vec<u8> = (0..self.grid.width)
                .flat_map(|col| std::iter::repeat_n(self.cell(row, col).0, scale))
                .flatten()
                .collect();
            for _ in 0..scale {
                out.extend_from_slice(&line);
            }
        }
        out
    }
}
