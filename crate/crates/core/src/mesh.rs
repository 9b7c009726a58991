//! Structured square-cell grid over the outer rectangle, with the Dirichlet
//! frame formed by the outer cell rings.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Outer rectangle, cell counts and frame thickness.
///
/// The rectangle is centred at the origin. Cells are square, so
/// `width / cells_x` must equal `height / cells_y`, and the frame margin must
/// be a whole number of cell rings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: f64,
    pub height: f64,
    pub cells_x: usize,
    pub cells_y: usize,
    pub margin: f64,
}

impl GridSpec {
    /// Square grid of `cells` cells per side with `rings` frame rings.
    pub fn square(side: f64, cells: usize, rings: usize) -> Self {
        let dx = side / cells as f64;
        GridSpec {
            width: side,
            height: side,
            cells_x: cells,
            cells_y: cells,
            margin: rings as f64 * dx,
        }
    }

    /// Grid with unit cells.
    pub fn unit_cells(cells_x: usize, cells_y: usize, rings: usize) -> Self {
        GridSpec {
            width: cells_x as f64,
            height: cells_y as f64,
            cells_x,
            cells_y,
            margin: rings as f64,
        }
    }

    pub fn dx(&self) -> f64 {
        self.width / self.cells_x as f64
    }

    /// Number of frame rings, once the spec has been validated.
    pub fn frame_rings(&self) -> usize {
        (self.margin / self.dx()).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells_x < 4 || self.cells_y < 4 {
            return Err(Error::InvalidSpec(format!(
                "cells_x, cells_y must be >= 4 (got {} x {})",
                self.cells_x, self.cells_y
            )));
        }
        if !(self.width > 0.0 && self.height > 0.0) || !self.width.is_finite() || !self.height.is_finite() {
            return Err(Error::InvalidSpec("width and height must be positive".into()));
        }
        let dx = self.dx();
        let dy = self.height / self.cells_y as f64;
        if (dx - dy).abs() > 1e-9 * dx {
            return Err(Error::InvalidSpec(format!(
                "cells must be square (dx = {dx}, dy = {dy})"
            )));
        }
        let rings = self.margin / dx;
        if !(self.margin > 0.0) || (rings - rings.round()).abs() > 1e-9 * rings.max(1.0) || rings.round() < 1.0 {
            return Err(Error::InvalidSpec(format!(
                "margin must be a positive whole number of cell widths (margin = {}, dx = {dx})",
                self.margin
            )));
        }
        let rings = rings.round() as usize;
        if 2 * rings > self.cells_x || 2 * rings > self.cells_y {
            return Err(Error::InvalidSpec(format!(
                "frame of {rings} rings does not fit a {} x {} grid",
                self.cells_x, self.cells_y
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub ix: usize,
    pub iy: usize,
    pub centroid: [f64; 2],
    pub in_frame: bool,
}

/// Facet orientation: a vertical facet separates a left and a right cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    Vertical,
    Horizontal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interface {
    /// Left/bottom cell first.
    pub cells: [usize; 2],
    pub length: f64,
    pub normal: [f64; 2],
    pub frame_adjacent: bool,
    pub orientation: Orientation,
    /// Index of the grid line the facet lies on (x-line for vertical facets).
    pub line: usize,
    /// Position along the line (row for vertical facets, column otherwise).
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub spec: GridSpec,
    pub dx: f64,
    pub cells: Vec<Cell>,
    pub nodes: Vec<[f64; 2]>,
    pub interfaces: Vec<Interface>,
    /// Interfaces bounding each cell.
    pub cell_interfaces: Vec<Vec<usize>>,
}

/// Corner order inside a cell: counter-clockwise from the lower-left corner.
pub const CORNER_OFFSETS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

pub fn build_mesh(spec: &GridSpec) -> Result<Mesh> {
    spec.validate()?;
    let (nx, ny) = (spec.cells_x, spec.cells_y);
    let dx = spec.dx();
    let rings = spec.frame_rings();
    let (x0, y0) = (-0.5 * spec.width, -0.5 * spec.height);

    let mut cells = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let in_frame = ix < rings || iy < rings || ix >= nx - rings || iy >= ny - rings;
            cells.push(Cell {
                ix,
                iy,
                centroid: [x0 + (ix as f64 + 0.5) * dx, y0 + (iy as f64 + 0.5) * dx],
                in_frame,
            });
        }
    }

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([x0 + i as f64 * dx, y0 + j as f64 * dx]);
        }
    }

    let mut interfaces = Vec::with_capacity(nx * (ny - 1) + ny * (nx - 1));
    let mut cell_interfaces = vec![Vec::with_capacity(4); nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let c = iy * nx + ix;
            if ix + 1 < nx {
                let other = c + 1;
                cell_interfaces[c].push(interfaces.len());
                cell_interfaces[other].push(interfaces.len());
                interfaces.push(Interface {
                    cells: [c, other],
                    length: dx,
                    normal: [1.0, 0.0],
                    frame_adjacent: cells[c].in_frame || cells[other].in_frame,
                    orientation: Orientation::Vertical,
                    line: ix + 1,
                    offset: iy,
                });
            }
            if iy + 1 < ny {
                let other = c + nx;
                cell_interfaces[c].push(interfaces.len());
                cell_interfaces[other].push(interfaces.len());
                interfaces.push(Interface {
                    cells: [c, other],
                    length: dx,
                    normal: [0.0, 1.0],
                    frame_adjacent: cells[c].in_frame || cells[other].in_frame,
                    orientation: Orientation::Horizontal,
                    line: iy + 1,
                    offset: ix,
                });
            }
        }
    }

    Ok(Mesh {
        spec: spec.clone(),
        dx,
        cells,
        nodes,
        interfaces,
        cell_interfaces,
    })
}

impl Mesh {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dx
    }

    /// Geometric node ids of a cell's corners, in [`CORNER_OFFSETS`] order.
    pub fn cell_nodes(&self, cell: usize) -> [usize; 4] {
        let c = &self.cells[cell];
        let stride = self.spec.cells_x + 1;
        CORNER_OFFSETS.map(|(di, dj)| (c.iy + dj) * stride + c.ix + di)
    }

    pub fn cell_at(&self, ix: usize, iy: usize) -> usize {
        iy * self.spec.cells_x + ix
    }

    /// Interface between two edge-adjacent cells.
    pub fn interface_between(&self, a: usize, b: usize) -> Option<usize> {
        self.cell_interfaces[a]
            .iter()
            .copied()
            .find(|&f| self.interfaces[f].cells.contains(&b))
    }

    /// Interface on a given grid line at a given position.
    pub fn interface_on_line(&self, orientation: Orientation, line: usize, offset: usize) -> Option<usize> {
        let (nx, ny) = (self.spec.cells_x, self.spec.cells_y);
        let (a, b) = match orientation {
            Orientation::Vertical => {
                if line == 0 || line >= nx || offset >= ny {
                    return None;
                }
                (self.cell_at(line - 1, offset), self.cell_at(line, offset))
            }
            Orientation::Horizontal => {
                if line == 0 || line >= ny || offset >= nx {
                    return None;
                }
                (self.cell_at(offset, line - 1), self.cell_at(offset, line))
            }
        };
        self.interface_between(a, b)
    }

    pub fn frame_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().enumerate().filter(|(_, c)| c.in_frame).map(|(i, _)| i)
    }

    pub fn total_interface_length(&self) -> f64 {
        self.interfaces.iter().map(|f| f.length).sum()
    }

    /// Area of the outer rectangle.
    pub fn area(&self) -> f64 {
        self.spec.width * self.spec.height
    }
}

/// Interfaces that may break: every interface with at least one cell outside
/// the frame. Frame-frame interfaces keep the boundary datum intact.
pub fn crackable_interfaces(mesh: &Mesh) -> Vec<usize> {
    mesh.interfaces
        .iter()
        .enumerate()
        .filter(|(_, f)| !(mesh.cells[f.cells[0]].in_frame && mesh.cells[f.cells[1]].in_frame))
        .map(|(i, _)| i)
        .collect()
}
