//! Grid fields whose pointwise values are time jets, stored coefficient-major.

use rayon::prelude::*;

use crate::grid::TorusGrid;
use crate::jet::Jet;

#[derive(Debug, Clone)]
pub struct JetField {
    /// `coeffs[k][i]` is the normalized `k`-th time coefficient at point `i`.
    pub coeffs: Vec<Vec<f64>>,
}

impl JetField {
    pub fn from_value(v: Vec<f64>) -> Self {
        JetField { coeffs: vec![v] }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.coeffs[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self) -> &[f64] {
        &self.coeffs[0]
    }

    #[inline]
    pub fn at(&self, i: usize) -> Jet {
        let mut c = [0.0; 4];
        for (k, col) in self.coeffs.iter().enumerate() {
            c[k] = col[i];
        }
        Jet::new(&c[..self.coeffs.len()])
    }

    /// Time derivative: coefficients shift down one slot.
    pub fn dt(&self) -> JetField {
        assert!(self.order() >= 1, "time derivative of an order-0 field");
        let coeffs = self.coeffs[1..]
            .iter()
            .enumerate()
            .map(|(k, col)| col.iter().map(|v| (k + 1) as f64 * v).collect())
            .collect();
        JetField { coeffs }
    }

    pub fn truncate(&self, ord: usize) -> JetField {
        JetField {
            coeffs: self.coeffs[..=ord.min(self.order())].to_vec(),
        }
    }

    /// Spatial derivative along 0-based `axis`, coefficient by coefficient.
    pub fn deriv(&self, grid: &TorusGrid, axis: usize) -> JetField {
        JetField {
            coeffs: self.coeffs.iter().map(|c| grid.deriv(c, axis)).collect(),
        }
    }

    /// Spatial derivative of only the coefficients up to `ord`.
    pub fn deriv_to(&self, grid: &TorusGrid, axis: usize, ord: usize) -> JetField {
        self.truncate(ord).deriv(grid, axis)
    }
}

/// Evaluates `f` at every point and splits the `M` jet outputs into fields.
/// Each output field takes the lowest order found across points.
pub fn map_points<const M: usize, E: Send>(
    npts: usize,
    f: impl Fn(usize) -> Result<[Jet; M], E> + Sync,
) -> Result<[JetField; M], E> {
    let vals: Vec<[Jet; M]> = (0..npts).into_par_iter().map(&f).collect::<Result<_, E>>()?;
    Ok(std::array::from_fn(|m| {
        let ord = vals.iter().map(|v| v[m].order()).min().unwrap_or(0);
        let coeffs = (0..=ord).map(|k| vals.iter().map(|v| v[m].coeff(k)).collect()).collect();
        JetField { coeffs }
    }))
}

/// The plain-value analogue of [`map_points`].
pub fn map_values<const M: usize, E: Send>(
    npts: usize,
    f: impl Fn(usize) -> Result<[f64; M], E> + Sync,
) -> Result<[Vec<f64>; M], E> {
    let vals: Vec<[f64; M]> = (0..npts).into_par_iter().map(&f).collect::<Result<_, E>>()?;
    Ok(std::array::from_fn(|m| vals.iter().map(|v| v[m]).collect()))
}
