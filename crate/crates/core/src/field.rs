//! Sampled fields on a [`ConfigSpace`].

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::ConfigSpace;

/// Real value per cell (densities, entropies, phases, potentials).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    space: ConfigSpace,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(space: ConfigSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::LengthMismatch {
                expected: space.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { space, values })
    }

    pub(crate) fn from_raw(space: ConfigSpace, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), space.len());
        Self { space, values }
    }

    pub fn constant(space: &ConfigSpace, c: f64) -> Self {
        Self {
            values: vec![c; space.len()],
            space: space.clone(),
        }
    }

    pub fn zeros(space: &ConfigSpace) -> Self {
        Self::constant(space, 0.0)
    }

    /// Sample `f` at every cell centre.
    pub fn from_fn(space: &ConfigSpace, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; space.dim()];
        let values = (0..space.len())
            .map(|k| {
                for (a, xa) in x.iter_mut().enumerate() {
                    *xa = space.coordinate(a, space.axis_index(k, a));
                }
                f(&x)
            })
            .collect();
        Self {
            space: space.clone(),
            values,
        }
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
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

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            space: self.space.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.space.require_same(&other.space)?;
        Ok(Self {
            space: self.space.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    /// Midpoint-rule integral over the box.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.space.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// One real component per axis per cell, located at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    space: ConfigSpace,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(space: ConfigSpace, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != space.dim() {
            return Err(Error::LengthMismatch {
                expected: space.dim(),
                got: components.len(),
            });
        }
        for c in &components {
            if c.len() != space.len() {
                return Err(Error::LengthMismatch {
                    expected: space.len(),
                    got: c.len(),
                });
            }
            if let Some(index) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index });
            }
        }
        Ok(Self { space, components })
    }

    pub(crate) fn from_raw(space: ConfigSpace, components: Vec<Vec<f64>>) -> Self {
        Self { space, components }
    }

    pub fn zeros(space: &ConfigSpace) -> Self {
        Self {
            components: vec![vec![0.0; space.len()]; space.dim()],
            space: space.clone(),
        }
    }

    pub fn constant(space: &ConfigSpace, value: &[f64]) -> Result<Self> {
        if value.len() != space.dim() {
            return Err(Error::LengthMismatch {
                expected: space.dim(),
                got: value.len(),
            });
        }
        Ok(Self {
            components: value.iter().map(|v| vec![*v; space.len()]).collect(),
            space: space.clone(),
        })
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn at(&self, cell: usize) -> Vec<f64> {
        self.components.iter().map(|c| c[cell]).collect()
    }

    pub fn zip_map(&self, other: &VectorField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.space.require_same(&other.space)?;
        Ok(Self {
            space: self.space.clone(),
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
                .collect(),
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            space: self.space.clone(),
            components: self
                .components
                .iter()
                .map(|v| v.iter().map(|x| c * x).collect())
                .collect(),
        }
    }

    /// Largest absolute component value along `axis`.
    pub fn max_abs(&self, axis: usize) -> f64 {
        self.components[axis].iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Complex value per cell (wavefunctions).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    space: ConfigSpace,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(space: ConfigSpace, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::LengthMismatch {
                expected: space.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { space, values })
    }

    pub(crate) fn from_raw(space: ConfigSpace, values: Vec<Complex64>) -> Self {
        Self { space, values }
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Discrete `∫|psi|^2`.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.space.cell_volume()
    }

    /// Discrete `∫ conj(self) * other`.
    pub fn inner(&self, other: &ComplexField) -> Result<Complex64> {
        self.space.require_same(&other.space)?;
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.space.cell_volume())
    }

    pub fn modulus_sq(&self) -> ScalarField {
        ScalarField::from_raw(
            self.space.clone(),
            self.values.iter().map(|z| z.norm_sqr()).collect(),
        )
    }
}

/// Vector potential stored on grid links.
///
/// Component `a` at cell `j` is the value of `A_a` on the face between `j` and
/// its `+a` neighbour. Storing `A` on links makes lattice gauge
/// transformations `A -> A + D⁺chi` exact.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorPotential {
    links: VectorField,
}

impl VectorPotential {
    pub fn from_links(links: VectorField) -> Self {
        Self { links }
    }

    pub fn zeros(space: &ConfigSpace) -> Self {
        Self {
            links: VectorField::zeros(space),
        }
    }

    pub fn constant(space: &ConfigSpace, value: &[f64]) -> Result<Self> {
        Ok(Self {
            links: VectorField::constant(space, value)?,
        })
    }

    /// Sample `f(x, axis)` at face midpoints.
    pub fn from_fn(space: &ConfigSpace, f: impl Fn(&[f64], usize) -> f64) -> Self {
        let dim = space.dim();
        let mut components = vec![vec![0.0; space.len()]; dim];
        let mut x = vec![0.0; dim];
        for (axis, comp) in components.iter_mut().enumerate() {
            for (k, v) in comp.iter_mut().enumerate() {
                for (b, xb) in x.iter_mut().enumerate() {
                    let i = space.axis_index(k, b);
                    *xb = if b == axis {
                        space.face_coordinate(b, i)
                    } else {
                        space.coordinate(b, i)
                    };
                }
                *v = f(&x, axis);
            }
        }
        Self {
            links: VectorField::from_raw(space.clone(), components),
        }
    }

    /// Pure-gauge potential `D⁺chi` (forward difference on every link).
    pub fn pure_gauge(chi: &ScalarField) -> Self {
        Self {
            links: crate::calculus::forward_difference(chi),
        }
    }

    pub fn space(&self) -> &ConfigSpace {
        self.links.space()
    }

    pub fn links(&self) -> &VectorField {
        &self.links
    }

    pub fn link(&self, axis: usize, cell: usize) -> f64 {
        self.links.component(axis)[cell]
    }

    /// Gauge transform `A -> A + D⁺chi`.
    pub fn gauge_shift(&self, chi: &ScalarField) -> Result<Self> {
        self.space().require_same(chi.space())?;
        let grad = crate::calculus::forward_difference(chi);
        Ok(Self {
            links: self.links.zip_map(&grad, |a, g| a + g)?,
        })
    }

    /// Cell-centre values: the average of the two links adjacent along each axis.
    pub fn centered(&self) -> VectorField {
        let space = self.space();
        let components = (0..space.dim())
            .map(|axis| {
                let c = self.links.component(axis);
                (0..space.len())
                    .map(|k| match space.neighbor(k, axis, false) {
                        Some(prev) => 0.5 * (c[prev] + c[k]),
                        None => c[k],
                    })
                    .collect()
            })
            .collect();
        VectorField::from_raw(space.clone(), components)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            links: self.links.scale(c),
        }
    }
}

mod io {
    use super::*;
    use crate::grid::Boundary;
    use std::fmt::Write as _;
    use std::path::{Path, PathBuf};

    fn meta_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta");
        PathBuf::from(s)
    }

    fn join(v: &[f64]) -> String {
        v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
    }

    /// Sidecar metadata block describing the grid.
    pub fn metadata(space: &ConfigSpace) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dim={}", space.dim());
        let _ = writeln!(s, "extents={}", join(space.extents()));
        let points: Vec<String> = space.points().iter().map(|p| p.to_string()).collect();
        let _ = writeln!(s, "points={}", points.join(" "));
        let _ = writeln!(s, "lower={}", join(space.lower()));
        let _ = writeln!(s, "boundary={}", space.boundary());
        let _ = writeln!(s, "sigma_sq={}", join(space.sigma_sq()));
        let _ = writeln!(s, "particle_dim={}", space.particle_dim());
        s
    }

    pub fn parse_metadata(text: &str) -> Result<ConfigSpace> {
        let mut extents = None;
        let mut points = None;
        let mut lower = None;
        let mut boundary = Boundary::Periodic;
        let mut sigma_sq = None;
        let mut particle_dim = None;
        let floats = |v: &str| -> Result<Vec<f64>> {
            v.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Csv(format!("{t}: {e}"))))
                .collect()
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Csv(format!("bad metadata line `{line}`")))?;
            match key.trim() {
                "dim" => {}
                "extents" => extents = Some(floats(value)?),
                "lower" => lower = Some(floats(value)?),
                "sigma_sq" => sigma_sq = Some(floats(value)?),
                "points" => {
                    points = Some(
                        value
                            .split_whitespace()
                            .map(|t| t.parse::<usize>().map_err(|e| Error::Csv(e.to_string())))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "boundary" => boundary = value.trim().parse()?,
                "particle_dim" => {
                    particle_dim =
                        Some(value.trim().parse::<usize>().map_err(|e| Error::Csv(e.to_string()))?)
                }
                other => return Err(Error::Csv(format!("unknown metadata key `{other}`"))),
            }
        }
        let extents = extents.ok_or_else(|| Error::Csv("missing extents".into()))?;
        let dim = extents.len();
        ConfigSpace::with_layout(
            extents,
            points.ok_or_else(|| Error::Csv("missing points".into()))?,
            lower.ok_or_else(|| Error::Csv("missing lower".into()))?,
            boundary,
            sigma_sq.ok_or_else(|| Error::Csv("missing sigma_sq".into()))?,
            particle_dim.unwrap_or(dim),
        )
    }

    fn header(space: &ConfigSpace, columns: &[&str]) -> String {
        let mut cols: Vec<String> = (0..space.dim()).map(|a| format!("axis{a}")).collect();
        cols.extend(columns.iter().map(|c| c.to_string()));
        cols.join(",")
    }

    fn render(space: &ConfigSpace, columns: &[&str], row: impl Fn(usize) -> Vec<f64>) -> String {
        let mut out = header(space, columns);
        out.push('\n');
        for k in 0..space.len() {
            let mut cells: Vec<String> = space.position(k).iter().map(|x| x.to_string()).collect();
            cells.extend(row(k).iter().map(|x| x.to_string()));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    fn parse_rows(space: &ConfigSpace, text: &str, width: usize) -> Result<Vec<Vec<f64>>> {
        let mut lines = text.lines();
        let head = lines.next().ok_or_else(|| Error::Csv("empty file".into()))?;
        if head.split(',').count() != space.dim() + width {
            return Err(Error::Csv(format!("unexpected header `{head}`")));
        }
        let rows = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let vals = l
                    .split(',')
                    .skip(space.dim())
                    .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Csv(format!("{t}: {e}"))))
                    .collect::<Result<Vec<f64>>>()?;
                if vals.len() != width {
                    return Err(Error::Csv(format!("bad row `{l}`")));
                }
                Ok(vals)
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.len() != space.len() {
            return Err(Error::LengthMismatch {
                expected: space.len(),
                got: rows.len(),
            });
        }
        Ok(rows)
    }

    fn write_pair(path: &Path, space: &ConfigSpace, body: String) -> std::io::Result<()> {
        std::fs::write(path, body)?;
        std::fs::write(meta_path(path), metadata(space))
    }

    fn read_meta(path: &Path) -> Result<ConfigSpace> {
        let text = std::fs::read_to_string(meta_path(path))
            .map_err(|e| Error::Csv(format!("{}: {e}", meta_path(path).display())))?;
        parse_metadata(&text)
    }

    fn read_body(path: &Path) -> Result<String> {
        std::fs::read_to_string(path).map_err(|e| Error::Csv(format!("{}: {e}", path.display())))
    }

    impl ScalarField {
        /// CSV with header `axis0,...,value`, row-major over the grid.
        pub fn to_csv(&self) -> String {
            render(&self.space, &["value"], |k| vec![self.values[k]])
        }

        pub fn from_csv(space: &ConfigSpace, text: &str) -> Result<Self> {
            let rows = parse_rows(space, text, 1)?;
            Self::new(space.clone(), rows.into_iter().map(|r| r[0]).collect())
        }

        /// Write the CSV and its `.meta` sidecar.
        pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
            write_pair(path, &self.space, self.to_csv())
        }

        pub fn read_csv(path: &Path) -> Result<Self> {
            let space = read_meta(path)?;
            Self::from_csv(&space, &read_body(path)?)
        }
    }

    impl VectorField {
        pub fn to_csv(&self) -> String {
            let names: Vec<String> = (0..self.space.dim()).map(|a| format!("v{a}")).collect();
            let names: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            render(&self.space, &names, |k| self.at(k))
        }

        pub fn from_csv(space: &ConfigSpace, text: &str) -> Result<Self> {
            let rows = parse_rows(space, text, space.dim())?;
            let components = (0..space.dim())
                .map(|a| rows.iter().map(|r| r[a]).collect())
                .collect();
            Self::new(space.clone(), components)
        }

        pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
            write_pair(path, &self.space, self.to_csv())
        }

        pub fn read_csv(path: &Path) -> Result<Self> {
            let space = read_meta(path)?;
            Self::from_csv(&space, &read_body(path)?)
        }
    }

    impl ComplexField {
        /// CSV with header `axis0,...,re,im`.
        pub fn to_csv(&self) -> String {
            render(&self.space, &["re", "im"], |k| {
                vec![self.values[k].re, self.values[k].im]
            })
        }

        pub fn from_csv(space: &ConfigSpace, text: &str) -> Result<Self> {
            let rows = parse_rows(space, text, 2)?;
            Self::new(
                space.clone(),
                rows.into_iter().map(|r| Complex64::new(r[0], r[1])).collect(),
            )
        }

        pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
            write_pair(path, &self.space, self.to_csv())
        }

        pub fn read_csv(path: &Path) -> Result<Self> {
            let space = read_meta(path)?;
            Self::from_csv(&space, &read_body(path)?)
        }
    }
}

pub use io::{metadata, parse_metadata};
