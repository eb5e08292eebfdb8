use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dirichlet {
    pub node: usize,
    /// 0 = x, 1 = y
    pub component: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLoad {
    pub node: usize,
    pub component: usize,
    pub magnitude: f64,
}

/// Structured grid of `nx × ny` square bilinear elements of side `h` with the
/// lower-left corner at the origin.
///
/// Node `(i, j)` has index `i + (nx + 1) j`; element `(i, j)` has index
/// `i + nx j` and corner order (i, j), (i+1, j), (i, j+1), (i+1, j+1).
#[derive(Debug, Clone, PartialEq)]
pub struct MacroMesh {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub dirichlet: Vec<Dirichlet>,
    pub loads: Vec<PointLoad>,
}

impl MacroMesh {
    pub fn new(nx: usize, ny: usize, h: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || !(h > 0.0) {
            return Err(Error::Parameter(format!("mesh needs nx, ny ≥ 1 and h > 0 (got {nx}×{ny}, h = {h})")));
        }
        Ok(Self {
            nx,
            ny,
            h,
            dirichlet: Vec::new(),
            loads: Vec::new(),
        })
    }

    /// Right half of a simply supported beam of size `length × height`:
    /// vertical support at the lower-left corner, symmetry rollers on the
    /// right edge and a downward point load `load` at the upper-right node
    /// (the full beam carries twice that at midspan).
    pub fn half_beam(nx: usize, ny: usize, length: f64, height: f64, load: f64) -> Result<Self> {
        let h = length / nx as f64;
        if ((height / ny as f64) - h).abs() > 1e-12 * h {
            return Err(Error::Parameter(format!(
                "{nx}×{ny} elements on {length}×{height} are not square"
            )));
        }
        let mut m = Self::new(nx, ny, h)?;
        m.dirichlet.push(Dirichlet {
            node: m.node(0, 0),
            component: 1,
            value: 0.0,
        });
        for j in 0..=ny {
            m.dirichlet.push(Dirichlet {
                node: m.node(nx, j),
                component: 0,
                value: 0.0,
            });
        }
        m.loads.push(PointLoad {
            node: m.node(nx, ny),
            component: 1,
            magnitude: -load,
        });
        m.validate()?;
        Ok(m)
    }

    /// Left edge clamped, downward load at the middle of the right edge.
    pub fn cantilever(nx: usize, ny: usize, h: f64, load: f64) -> Result<Self> {
        let mut m = Self::new(nx, ny, h)?;
        for j in 0..=ny {
            for c in 0..2 {
                m.dirichlet.push(Dirichlet {
                    node: m.node(0, j),
                    component: c,
                    value: 0.0,
                });
            }
        }
        m.loads.push(PointLoad {
            node: m.node(nx, ny / 2),
            component: 1,
            magnitude: -load,
        });
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        for d in &self.dirichlet {
            if d.node >= n || d.component > 1 {
                return Err(Error::Bounds(format!("constraint on node {} component {} outside mesh", d.node, d.component)));
            }
        }
        for l in &self.loads {
            if l.node >= n || l.component > 1 {
                return Err(Error::Bounds(format!("load on node {} component {} outside mesh", l.node, l.component)));
            }
        }
        let has = |c: usize| self.dirichlet.iter().filter(|d| d.component == c).count();
        if has(0) == 0 || has(1) == 0 || self.dirichlet.len() < 3 {
            return Err(Error::Parameter("constraints do not remove the rigid body modes".into()));
        }
        Ok(())
    }

    pub fn nodes_x(&self) -> usize {
        self.nx + 1
    }

    pub fn nodes_y(&self) -> usize {
        self.ny + 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes_x() * self.nodes_y()
    }

    pub fn element_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn dof_count(&self) -> usize {
        2 * self.node_count()
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i + self.nodes_x() * j
    }

    pub fn node_position(&self, n: usize) -> [f64; 2] {
        let nx1 = self.nodes_x();
        [(n % nx1) as f64 * self.h, (n / nx1) as f64 * self.h]
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = (e % self.nx, e / self.nx);
        let n0 = self.node(i, j);
        let nx1 = self.nodes_x();
        [n0, n0 + 1, n0 + nx1, n0 + nx1 + 1]
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let n = self.element_nodes(e);
        let mut d = [0; 8];
        for a in 0..4 {
            d[2 * a] = 2 * n[a];
            d[2 * a + 1] = 2 * n[a] + 1;
        }
        d
    }

    pub fn area(&self) -> f64 {
        self.element_count() as f64 * self.h * self.h
    }

    pub fn boundary_length(&self) -> f64 {
        2.0 * (self.nx + self.ny) as f64 * self.h
    }

    pub fn load_vector(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.dof_count()];
        for l in &self.loads {
            f[2 * l.node + l.component] += l.magnitude;
        }
        f
    }
}
