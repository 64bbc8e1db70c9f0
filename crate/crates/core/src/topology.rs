//! Switching configurations, Kirchhoff interconnection and sensor adjacency.
//!
//! Cells are indexed from zero internally. A configuration is an ordered
//! partition of the cells into contiguous runs; every run is a parallel group
//! and the groups are connected in series. Its identifier packs the `M - 1`
//! merge bits: bit `b` is set when cells `b` and `b + 1` share a group.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest pack for which configurations may be enumerated.
pub const MAX_ENUMERATED_CELLS: usize = 20;

/// Finite-difference step for the current solver Jacobian, A.
pub const JACOBIAN_STEP: f64 = 1e-6;
pub const SOLVER_MAX_ITERATIONS: usize = 50;
pub const SOLVER_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    m: usize,
    groups: Vec<std::ops::Range<usize>>,
}

impl Configuration {
    pub fn from_id(m: usize, id: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::Validation("a pack needs at least one cell".into()));
        }
        if m - 1 < 64 && id >> (m - 1) != 0 {
            return Err(Error::Validation(format!("configuration id {id} is out of range for {m} cells")));
        }
        let mut groups = Vec::new();
        let mut start = 0;
        for b in 0..m - 1 {
            if id >> b & 1 == 0 {
                groups.push(start..b + 1);
                start = b + 1;
            }
        }
        groups.push(start..m);
        Ok(Self { m, groups })
    }

    /// Build from group sizes listed in series order.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::Validation(format!("invalid group sizes {sizes:?}")));
        }
        let mut groups = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &s in sizes {
            groups.push(start..start + s);
            start += s;
        }
        Ok(Self { m: start, groups })
    }

    /// Build from explicit 1-based cell lists, e.g. `[[1, 2], [3], [4, 5, 6]]`.
    pub fn from_groups(groups: &[Vec<usize>]) -> Result<Self> {
        let mut next = 1;
        let mut sizes = Vec::with_capacity(groups.len());
        for g in groups {
            for &c in g {
                if c != next {
                    return Err(Error::Validation(format!(
                        "groups {groups:?} are not contiguous runs covering 1..M in order"
                    )));
                }
                next += 1;
            }
            sizes.push(g.len());
        }
        Self::from_sizes(&sizes)
    }

    pub fn all_series(m: usize) -> Self {
        Self {
            m,
            groups: (0..m).map(|i| i..i + 1).collect(),
        }
    }

    pub fn id(&self) -> u64 {
        let mut id = 0u64;
        for g in &self.groups {
            for c in g.start..g.end - 1 {
                id |= 1 << c;
            }
        }
        id
    }

    pub fn cell_count(&self) -> usize {
        self.m
    }

    pub fn groups(&self) -> &[std::ops::Range<usize>] {
        &self.groups
    }

    /// Group index of every cell.
    pub fn group_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.m];
        for (gi, g) in self.groups.iter().enumerate() {
            for c in g.clone() {
                out[c] = gi;
            }
        }
        out
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .groups
            .iter()
            .map(|g| {
                let cells: Vec<String> = g.clone().map(|c| (c + 1).to_string()).collect();
                format!("[{}]", cells.join(","))
            })
            .collect();
        write!(f, "{}", parts.join(""))
    }
}

/// All `2^(m-1)` configurations in ascending id order.
pub fn enumerate_configurations(m: usize) -> Result<Vec<Configuration>> {
    if m > MAX_ENUMERATED_CELLS {
        return Err(Error::Size(m));
    }
    if m == 0 {
        return Err(Error::Validation("a pack needs at least one cell".into()));
    }
    (0..1u64 << (m - 1)).map(|id| Configuration::from_id(m, id)).collect()
}

/// Kirchhoff matrices `F J = G V + H I` of a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Interconnection {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

/// Assemble the block-diagonal interconnection; `r_ic` holds one resistance per cell.
pub fn assemble_interconnection(cfg: &Configuration, r_ic: &[f64]) -> Result<Interconnection> {
    let m = cfg.cell_count();
    if r_ic.len() != m {
        return Err(Error::Validation(format!("expected {m} interconnect resistances, got {}", r_ic.len())));
    }
    let mut f = DMatrix::zeros(m, m);
    let mut g = DMatrix::zeros(m, m);
    let mut h = DVector::zeros(m);
    for grp in cfg.groups() {
        let s = grp.start;
        h[s] = 1.0;
        for c in grp.clone() {
            f[(s, c)] = 1.0;
        }
        for r in s + 1..grp.end {
            let res = r_ic[r - 1];
            f[(r, r - 1)] = -res;
            f[(r, r)] = res;
            g[(r, r - 1)] = 1.0;
            g[(r, r)] = -1.0;
        }
    }
    Ok(Interconnection { f, g, h })
}

/// Piecewise-constant configuration schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSignal {
    /// `(t_start, configuration id)` pairs.
    pub schedule: Vec<(f64, u64)>,
}

impl SwitchingSignal {
    pub fn new(schedule: Vec<(f64, u64)>) -> Result<Self> {
        let s = Self { schedule };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(id: u64) -> Self {
        Self {
            schedule: vec![(0.0, id)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.schedule.first() {
            Some((t, _)) if *t == 0.0 => {}
            _ => return Err(Error::Validation("switching schedule must start at t = 0".into())),
        }
        for w in self.schedule.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Validation(format!(
                    "switching times must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        Ok(())
    }

    /// Configuration id active at time `t`.
    pub fn at(&self, t: f64) -> u64 {
        let idx = self.schedule.partition_point(|(start, _)| *start <= t);
        self.schedule[idx.saturating_sub(1)].1
    }
}

/// Physical arrangement of the cells for thermal and sensor adjacency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Layout {
    /// Row-major grid with 4-neighbourhood.
    Grid { columns: usize },
    /// Explicit undirected edges between 1-based cell indices.
    Edges { edges: Vec<(usize, usize)> },
}

impl Default for Layout {
    fn default() -> Self {
        Layout::Grid { columns: 2 }
    }
}

/// Symmetric neighbour structure of the sensor network.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn new(layout: &Layout, m: usize) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); m];
        let mut link = |a: usize, b: usize| {
            if !neighbors[a].contains(&b) {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        };
        match layout {
            Layout::Grid { columns } => {
                if *columns == 0 {
                    return Err(Error::Validation("grid layout needs at least one column".into()));
                }
                for i in 0..m {
                    if (i + 1) % columns != 0 && i + 1 < m {
                        link(i, i + 1);
                    }
                    if i + columns < m {
                        link(i, i + columns);
                    }
                }
            }
            Layout::Edges { edges } => {
                for &(a, b) in edges {
                    if a == b || a == 0 || b == 0 || a > m || b > m {
                        return Err(Error::Validation(format!("invalid adjacency edge ({a}, {b}) for {m} cells")));
                    }
                    link(a - 1, b - 1);
                }
            }
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Ok(Self { neighbors })
    }

    /// No edges at all.
    pub fn isolated(m: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); m],
        }
    }

    pub fn cell_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// 0/1 adjacency matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let m = self.cell_count();
        let mut a = DMatrix::zeros(m, m);
        for (i, n) in self.neighbors.iter().enumerate() {
            for &j in n {
                a[(i, j)] = 1.0;
            }
        }
        a
    }
}

/// Per-cell currents and voltages satisfying the interconnection.
#[derive(Clone, Debug, PartialEq)]
pub struct CurrentSolution {
    pub j: DVector<f64>,
    pub v: DVector<f64>,
    /// Infinity norm of the Kirchhoff residual.
    pub residual: f64,
}

/// Residual `H I - F J - G V` with currents positive on discharge.
///
/// The interconnection matrices are written for charge-positive currents,
/// hence the sign flip on `J`.
fn group_residual(ic: &Interconnection, grp: &std::ops::Range<usize>, j: &[f64], v: &[f64], i_pack: f64) -> DVector<f64> {
    let n = grp.len();
    DVector::from_fn(n, |r, _| {
        let row = grp.start + r;
        let mut acc = ic.h[row] * i_pack;
        for c in 0..n {
            let col = grp.start + c;
            acc -= ic.f[(row, col)] * j[c] + ic.g[(row, col)] * v[c];
        }
        acc
    })
}

/// Solve the per-cell current split.
///
/// `voltage(cell, J)` evaluates the terminal voltage of one cell at a trial
/// current; `warm` optionally supplies the previous split as initial guess.
pub fn solve_cell_currents<V>(
    cfg: &Configuration,
    ic: &Interconnection,
    i_pack: f64,
    voltage: V,
    warm: Option<&[f64]>,
) -> Result<CurrentSolution>
where
    V: Fn(usize, f64) -> Result<f64>,
{
    let m = cfg.cell_count();
    let mut j_all = DVector::zeros(m);
    let mut v_all = DVector::zeros(m);
    let mut worst: f64 = 0.0;
    for grp in cfg.groups() {
        let n = grp.len();
        let eval = |j: &[f64]| -> Result<Vec<f64>> { j.iter().enumerate().map(|(c, &x)| voltage(grp.start + c, x)).collect() };
        let mut j: Vec<f64> = match warm {
            Some(w) if w.len() == m && n > 1 => {
                let prev: f64 = w[grp.clone()].iter().sum();
                if prev.abs() > 1e-12 && w[grp.clone()].iter().all(|x| x.is_finite()) {
                    w[grp.clone()].iter().map(|x| x * i_pack / prev).collect()
                } else {
                    vec![i_pack / n as f64; n]
                }
            }
            _ => vec![i_pack / n as f64; n],
        };
        let mut v = eval(&j)?;
        let mut r = group_residual(ic, grp, &j, &v, i_pack);
        let mut iterations = 0;
        while r.amax() > SOLVER_TOLERANCE {
            if iterations == SOLVER_MAX_ITERATIONS {
                return Err(Error::Solver {
                    first: grp.start + 1,
                    last: grp.end,
                    residual: r.amax(),
                    iterations,
                });
            }
            iterations += 1;
            let mut jac = DMatrix::zeros(n, n);
            for c in 0..n {
                let mut jp = j.clone();
                jp[c] += JACOBIAN_STEP;
                let mut vp = v.clone();
                vp[c] = voltage(grp.start + c, jp[c])?;
                let rp = group_residual(ic, grp, &jp, &vp, i_pack);
                jac.set_column(c, &((rp - &r) / JACOBIAN_STEP));
            }
            let step = jac.lu().solve(&(-&r)).ok_or(Error::Solver {
                first: grp.start + 1,
                last: grp.end,
                residual: r.amax(),
                iterations,
            })?;
            let mut lambda = 1.0;
            loop {
                let trial: Vec<f64> = j.iter().zip(step.iter()).map(|(a, d)| a + lambda * d).collect();
                let tv = eval(&trial);
                if let Ok(tv) = tv {
                    let tr = group_residual(ic, grp, &trial, &tv, i_pack);
                    if tr.amax() < r.amax() || lambda < 1e-4 {
                        j = trial;
                        v = tv;
                        r = tr;
                        break;
                    }
                } else if lambda < 1e-4 {
                    return Err(Error::Solver {
                        first: grp.start + 1,
                        last: grp.end,
                        residual: r.amax(),
                        iterations,
                    });
                }
                lambda *= 0.5;
            }
        }
        worst = worst.max(r.amax());
        for c in 0..n {
            j_all[grp.start + c] = j[c];
            v_all[grp.start + c] = v[c];
        }
    }
    Ok(CurrentSolution {
        j: j_all,
        v: v_all,
        residual: worst,
    })
}
