//! Truncated uniform tensor grids on `[-L, L]^N` and scalar fields sampled on them.
//!
//! Nodes are cell centred, `x_i = -L + (i + 1/2) h` along each axis, and every
//! node carries the same quadrature weight `h^N`. Fields are stored row-major
//! (last axis fastest) and are implicitly zero outside the box.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point in at most three dimensions; unused trailing coordinates are zero.
pub type Point = [f64; 3];

pub fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub half_width: f64,
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn new(dim: usize, half_width: f64, points_per_axis: usize) -> Result<Self> {
        let spec = GridSpec {
            dim,
            half_width,
            points_per_axis,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::Config(format!(
                "dimension N = {} outside 1..=3",
                self.dim
            )));
        }
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::Config(format!(
                "half width L = {} must be positive",
                self.half_width
            )));
        }
        let m = self.points_per_axis;
        if m < 8 {
            return Err(Error::Config(format!("M = {m} is below the minimum of 8")));
        }
        if !m.is_power_of_two() {
            return Err(Error::Config(format!("M = {m} is not a power of two")));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points_per_axis as f64
    }

    /// Quadrature weight `h^N` carried by every node.
    pub fn weight(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn num_nodes(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    /// Row-major multi-index of a flat node index.
    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let m = self.points_per_axis;
        let mut out = [0usize; 3];
        for d in (0..self.dim).rev() {
            out[d] = idx % m;
            idx /= m;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize; 3]) -> usize {
        let m = self.points_per_axis;
        (0..self.dim).fold(0, |acc, d| acc * m + multi[d])
    }

    pub fn point(&self, idx: usize) -> Point {
        let mi = self.multi_index(idx);
        let mut p = [0.0; 3];
        for d in 0..self.dim {
            p[d] = self.axis_coord(mi[d]);
        }
        p
    }

    /// Index of the node closest to `p` (clamped into the box).
    pub fn nearest_node(&self, p: &Point) -> usize {
        let h = self.spacing();
        let m = self.points_per_axis;
        let mut mi = [0usize; 3];
        for d in 0..self.dim {
            let f = ((p[d] + self.half_width) / h - 0.5).round();
            mi[d] = f.clamp(0.0, (m - 1) as f64) as usize;
        }
        self.flat_index(&mi)
    }

    /// Same grid with the resolution multiplied by `factor` (a power of two).
    pub fn refined(&self, factor: usize) -> Self {
        GridSpec {
            points_per_axis: self.points_per_axis * factor,
            ..*self
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "N={} L={} M={}",
            self.dim, self.half_width, self.points_per_axis
        )
    }
}

/// Validated grid with node coordinates materialized.
#[derive(Debug, Clone)]
pub struct Grid {
    spec: GridSpec,
    points: Vec<Point>,
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let points = (0..spec.num_nodes()).map(|i| spec.point(i)).collect();
        Ok(Grid { spec, points })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn spacing(&self) -> f64 {
        self.spec.spacing()
    }

    pub fn weight(&self) -> f64 {
        self.spec.weight()
    }

    pub fn num_nodes(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn zeros(&self) -> Field {
        Field::zeros(self.spec)
    }

    /// Sample `f` at every node. A non-finite sample is an error naming the node.
    pub fn sample<F>(&self, f: F) -> Result<Field>
    where
        F: Fn(&Point) -> f64,
    {
        let mut values = Vec::with_capacity(self.num_nodes());
        for (i, p) in self.points.iter().enumerate() {
            let v = f(p);
            if !v.is_finite() {
                return Err(Error::Sampling {
                    index: i,
                    coords: p[..self.spec.dim].to_vec(),
                    value: v,
                });
            }
            values.push(v);
        }
        Ok(Field {
            spec: self.spec,
            values,
        })
    }
}

pub fn make_grid(spec: GridSpec) -> Result<Grid> {
    Grid::new(spec)
}

pub fn sample_field<F>(grid: &Grid, f: F) -> Result<Field>
where
    F: Fn(&Point) -> f64,
{
    grid.sample(f)
}

/// Scalar samples on a grid, zero outside the box.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    spec: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(spec: GridSpec) -> Self {
        Field {
            spec,
            values: vec![0.0; spec.num_nodes()],
        }
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        Field {
            spec,
            values: vec![c; spec.num_nodes()],
        }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.num_nodes() {
            return Err(Error::Shape(format!(
                "expected {} values for grid {spec}, got {}",
                spec.num_nodes(),
                values.len()
            )));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Sampling {
                index,
                coords: spec.point(index)[..spec.dim].to_vec(),
                value,
            });
        }
        Ok(Field { spec, values })
    }

    pub(crate) fn from_raw(spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.num_nodes());
        Field { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::Shape(format!(
                "fields live on different grids ({} vs {})",
                self.spec, other.spec
            )));
        }
        Ok(())
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Field {
        Field::from_raw(self.spec, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &Field, f: F) -> Field {
        debug_assert_eq!(self.spec, other.spec);
        Field::from_raw(
            self.spec,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scale(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a * b)
    }

    /// `self + a * other`
    pub fn axpy(&self, a: f64, other: &Field) -> Field {
        self.zip_map(other, |x, y| x + a * y)
    }

    pub fn positive_part(&self) -> Field {
        self.map(|v| v.max(0.0))
    }

    pub fn negative_part(&self) -> Field {
        self.map(|v| (-v).max(0.0))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// `w * sum(values)`, the quadrature of the field over R^N.
    pub fn integrate(&self) -> f64 {
        self.spec.weight() * self.values.iter().sum::<f64>()
    }

    /// Discrete L^2 inner product `w * sum(u_i v_i)`.
    pub fn inner(&self, other: &Field) -> f64 {
        debug_assert_eq!(self.spec, other.spec);
        self.spec.weight()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::Domain(format!("L^p norm needs p >= 1, got {p}")));
        }
        let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
        Ok((self.spec.weight() * s).powf(1.0 / p))
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Integral restricted to the closed ball `B_r(center)`.
    pub fn integrate_ball(&self, center: &Point, r: f64) -> f64 {
        let w = self.spec.weight();
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| distance(&self.spec.point(*i), center) <= r)
            .map(|(_, v)| v)
            .sum::<f64>()
            * w
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "fracpass-field v1 N={} L={} M={}",
            self.spec.dim, self.spec.half_width, self.spec.points_per_axis
        )?;
        for v in &self.values {
            writeln!(out, "{v:e}")?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Field> {
        let mut lines = BufReader::new(input).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty field file".into()))??;
        let spec = parse_header(&header)?;
        let mut values = Vec::with_capacity(spec.num_nodes());
        for (k, line) in lines.enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let v: f64 = t
                .parse()
                .map_err(|_| Error::Format(format!("line {}: cannot parse '{t}'", k + 2)))?;
            values.push(v);
        }
        Field::from_values(spec, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Field> {
        Field::read_from(std::fs::File::open(path)?)
    }
}

fn parse_header(header: &str) -> Result<GridSpec> {
    let mut parts = header.split_whitespace();
    if parts.next() != Some("fracpass-field") || parts.next() != Some("v1") {
        return Err(Error::Format(format!("bad header '{header}'")));
    }
    let mut dim = None;
    let mut half_width = None;
    let mut m = None;
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header token '{kv}'")))?;
        let bad = || Error::Format(format!("bad header value '{kv}'"));
        match k {
            "N" => dim = Some(v.parse::<usize>().map_err(|_| bad())?),
            "L" => half_width = Some(v.parse::<f64>().map_err(|_| bad())?),
            "M" => m = Some(v.parse::<usize>().map_err(|_| bad())?),
            _ => return Err(bad()),
        }
    }
    match (dim, half_width, m) {
        (Some(d), Some(l), Some(m)) => GridSpec::new(d, l, m),
        _ => Err(Error::Format(format!("incomplete header '{header}'"))),
    }
}
