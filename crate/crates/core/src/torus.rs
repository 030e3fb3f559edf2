//! Coordinates, distances, neighborhoods and circular convolution on the
//! N×N torus. Grids are stored row-major with row = y, column = x.

use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Side length of the dial grid.
pub const GRID: usize = 24;

/// A dial setting. Serialized as `[x, y]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[usize; 2]", into = "[usize; 2]")]
pub struct Node {
    pub x: usize,
    pub y: usize,
}

impl Node {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

impl TryFrom<[usize; 2]> for Node {
    type Error = String;

    fn try_from([x, y]: [usize; 2]) -> Result<Self, String> {
        if x < GRID && y < GRID {
            Ok(Node { x, y })
        } else {
            Err(format!("node ({x}, {y}) outside the {GRID}x{GRID} grid"))
        }
    }
}

impl From<Node> for [usize; 2] {
    fn from(n: Node) -> Self {
        [n.x, n.y]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TorusDistance {
    pub total: usize,
    pub dx: usize,
    pub dy: usize,
}

fn axis_gap(a: usize, b: usize, n: usize, wrap: bool) -> usize {
    let d = a.abs_diff(b);
    if wrap {
        d.min(n - d)
    } else {
        d
    }
}

/// Torus geometry of a given side. [`Torus::STANDARD`] is the task grid;
/// other sizes exist for tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Torus {
    pub n: usize,
}

impl Torus {
    pub const STANDARD: Torus = Torus { n: GRID };

    pub fn new(n: usize) -> Self {
        assert!(n >= 3, "torus side must be at least 3");
        Self { n }
    }

    pub fn cells(&self) -> usize {
        self.n * self.n
    }

    /// Node at integer coordinates, wrapped onto the torus.
    pub fn wrap(&self, x: i64, y: i64) -> Node {
        let n = self.n as i64;
        Node::new(x.rem_euclid(n) as usize, y.rem_euclid(n) as usize)
    }

    pub fn index(&self, node: Node) -> usize {
        node.y * self.n + node.x
    }

    pub fn node(&self, index: usize) -> Node {
        Node::new(index % self.n, index / self.n)
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        (0..self.cells()).map(|i| self.node(i))
    }

    pub fn manhattan(&self, a: Node, b: Node) -> TorusDistance {
        let dx = axis_gap(a.x, b.x, self.n, true);
        let dy = axis_gap(a.y, b.y, self.n, true);
        TorusDistance { total: dx + dy, dx, dy }
    }

    /// Manhattan distance, wrapped or planar.
    pub fn distance(&self, a: Node, b: Node, wrap: bool) -> usize {
        axis_gap(a.x, b.x, self.n, wrap) + axis_gap(a.y, b.y, self.n, wrap)
    }

    /// Wrapped Moore neighborhood, center included, in row-major offset order.
    pub fn neighborhood3x3(&self, c: Node) -> [Node; 9] {
        let mut out = [c; 9];
        let mut k = 0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                out[k] = self.wrap(c.x as i64 + dx, c.y as i64 + dy);
                k += 1;
            }
        }
        out
    }

    /// Wrapped 8-neighborhood (center excluded).
    pub fn neighbors8(&self, c: Node) -> [Node; 8] {
        let full = self.neighborhood3x3(c);
        [full[0], full[1], full[2], full[3], full[5], full[6], full[7], full[8]]
    }
}

pub fn toroidal_manhattan(a: Node, b: Node) -> TorusDistance {
    Torus::STANDARD.manhattan(a, b)
}

pub fn neighborhood3x3(center: Node) -> [Node; 9] {
    Torus::STANDARD.neighborhood3x3(center)
}

/// Square row-major grid of values on the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn filled(n: usize, value: T) -> Self {
        Self { n, data: vec![value; n * n] }
    }

    pub fn from_vec(n: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == n * n).then_some(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(Self { n, data: rows.iter().flatten().copied().collect() })
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn torus(&self) -> Torus {
        Torus { n: self.n }
    }

    /// Value at row `row`, column `col`.
    pub fn at(&self, row: usize, col: usize) -> T {
        self.data[row * self.n + col]
    }

    pub fn set_at(&mut self, row: usize, col: usize, v: T) {
        self.data[row * self.n + col] = v;
    }

    pub fn get(&self, node: Node) -> T {
        self.at(node.y, node.x)
    }

    pub fn set(&mut self, node: Node, v: T) {
        self.set_at(node.y, node.x, v);
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n).map(<[T]>::to_vec).collect()
    }

    /// Cyclic shift: the value at (row, col) moves to (row + dr, col + dc).
    pub fn roll(&self, dr: usize, dc: usize) -> Self {
        let n = self.n;
        let mut out = self.clone();
        for r in 0..n {
            for c in 0..n {
                out.data[((r + dr) % n) * n + (c + dc) % n] = self.data[r * n + c];
            }
        }
        out
    }
}

/// `out[i][j] = Σ_{u,v ∈ {-1,0,1}} kernel[u+1][v+1] · grid[(i+u) mod n][(j+v) mod n]`.
pub fn circular_conv3x3<T: Float>(grid: &Grid<T>, kernel: &[[T; 3]; 3]) -> Grid<T> {
    let n = grid.n;
    let mut out = Grid::filled(n, T::zero());
    for i in 0..n {
        let rows = [(i + n - 1) % n, i, (i + 1) % n];
        for j in 0..n {
            let cols = [(j + n - 1) % n, j, (j + 1) % n];
            let mut acc = T::zero();
            for (ku, &r) in kernel.iter().zip(&rows) {
                for (&k, &c) in ku.iter().zip(&cols) {
                    acc = acc + k * grid.data[r * n + c];
                }
            }
            out.data[i * n + j] = acc;
        }
    }
    out
}

/// The uniform 1/9 averaging kernel.
pub fn box_kernel<T: Float>() -> [[T; 3]; 3] {
    let w = T::one() / T::from(9.0).expect("9 is representable");
    [[w; 3]; 3]
}
