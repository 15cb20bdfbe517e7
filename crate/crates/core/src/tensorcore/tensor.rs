use crate::error::{Error, Result};
use crate::tensorcore::Grid1D;

/// Region-referenced longitudinal functional observations `Y_i(r, omega, s)`.
///
/// Values are stored flat with the `s` index fastest, then `omega`, region and
/// subject. An optional mask marks which `(subject, omega)` slices were observed;
/// entries of unobserved slices carry no information and are kept at zero.
/// A mask with every slice observed is stored as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridTensor {
    values: Vec<f64>,
    n: usize,
    regions: usize,
    omega_grid: Grid1D,
    s_grid: Grid1D,
    mask: Option<Vec<bool>>,
    omega_weights: Vec<f64>,
}

impl HybridTensor {
    pub fn new(
        values: Vec<f64>,
        n: usize,
        regions: usize,
        omega_grid: Grid1D,
        s_grid: Grid1D,
        mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        if n == 0 || regions == 0 {
            return Err(Error::Shape(format!(
                "need n >= 1 and R >= 1, got n = {n}, R = {regions}"
            )));
        }
        let (nw, ns) = (omega_grid.len(), s_grid.len());
        if values.len() != n * regions * nw * ns {
            return Err(Error::Shape(format!(
                "{} values do not fill {n} x {regions} x {nw} x {ns}",
                values.len()
            )));
        }
        let mut omega_weights = Vec::with_capacity(n * nw);
        match &mask {
            Some(m) => {
                if m.len() != n * nw {
                    return Err(Error::Shape(format!(
                        "mask has {} entries, expected {}",
                        m.len(),
                        n * nw
                    )));
                }
                for i in 0..n {
                    let w = omega_grid
                        .subset_weights(&m[i * nw..(i + 1) * nw])
                        .map_err(|_| {
                            Error::InvalidData(format!(
                                "subject {i} has fewer than 2 observed omega slices"
                            ))
                        })?;
                    omega_weights.extend(w);
                }
            }
            None => {
                for _ in 0..n {
                    omega_weights.extend_from_slice(omega_grid.weights());
                }
            }
        }
        let mask = mask.filter(|m| !m.iter().all(|&o| o));
        let mut t = HybridTensor {
            values,
            n,
            regions,
            omega_grid,
            s_grid,
            mask,
            omega_weights,
        };
        for i in 0..n {
            for w in 0..nw {
                let observed = t.is_observed(i, w);
                for r in 0..regions {
                    let off = t.offset(i, r, w, 0);
                    let row = &mut t.values[off..off + ns];
                    if observed {
                        if row.iter().any(|v| !v.is_finite()) {
                            return Err(Error::InvalidData(format!(
                                "non-finite value at subject {i}, region {r}, omega index {w}"
                            )));
                        }
                    } else {
                        row.fill(0.0);
                    }
                }
            }
        }
        Ok(t)
    }

    /// Builds a dense tensor by evaluating `f(i, r, w, s)` on every index.
    pub fn from_fn(
        n: usize,
        regions: usize,
        omega_grid: Grid1D,
        s_grid: Grid1D,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let (nw, ns) = (omega_grid.len(), s_grid.len());
        let mut values = Vec::with_capacity(n * regions * nw * ns);
        for i in 0..n {
            for r in 0..regions {
                for w in 0..nw {
                    for s in 0..ns {
                        values.push(f(i, r, w, s));
                    }
                }
            }
        }
        Self::new(values, n, regions, omega_grid, s_grid, None)
    }

    #[inline]
    fn offset(&self, i: usize, r: usize, w: usize, s: usize) -> usize {
        ((i * self.regions + r) * self.omega_grid.len() + w) * self.s_grid.len() + s
    }

    #[inline]
    pub fn get(&self, i: usize, r: usize, w: usize, s: usize) -> f64 {
        self.values[self.offset(i, r, w, s)]
    }

    /// The `s`-curve at `(i, r, w)`.
    pub fn fiber(&self, i: usize, r: usize, w: usize) -> &[f64] {
        let off = self.offset(i, r, w, 0);
        &self.values[off..off + self.s_grid.len()]
    }

    /// All values of subject `i`, laid out `(r, w, s)` with `s` fastest.
    pub fn subject(&self, i: usize) -> &[f64] {
        let len = self.regions * self.omega_grid.len() * self.s_grid.len();
        &self.values[i * len..(i + 1) * len]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn regions(&self) -> usize {
        self.regions
    }

    pub fn omega_grid(&self) -> &Grid1D {
        &self.omega_grid
    }

    pub fn s_grid(&self) -> &Grid1D {
        &self.s_grid
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn is_observed(&self, i: usize, w: usize) -> bool {
        self.mask
            .as_ref()
            .map_or(true, |m| m[i * self.omega_grid.len() + w])
    }

    /// Quadrature weights over omega for subject `i` (zero on unobserved slices).
    pub fn omega_weights(&self, i: usize) -> &[f64] {
        let nw = self.omega_grid.len();
        &self.omega_weights[i * nw..(i + 1) * nw]
    }

    /// Same tensor restricted to the listed subjects, in the given order.
    pub fn select_subjects(&self, idx: &[usize]) -> Result<Self> {
        let len = self.regions * self.omega_grid.len() * self.s_grid.len();
        let nw = self.omega_grid.len();
        let mut values = Vec::with_capacity(idx.len() * len);
        let mut mask = self.mask.as_ref().map(|_| Vec::with_capacity(idx.len() * nw));
        for &i in idx {
            if i >= self.n {
                return Err(Error::Shape(format!("subject {i} out of range")));
            }
            values.extend_from_slice(self.subject(i));
            if let (Some(out), Some(m)) = (mask.as_mut(), self.mask.as_ref()) {
                out.extend_from_slice(&m[i * nw..(i + 1) * nw]);
            }
        }
        Self::new(
            values,
            idx.len(),
            self.regions,
            self.omega_grid.clone(),
            self.s_grid.clone(),
            mask,
        )
    }

    /// Weighted squared norm of subject `i`: `sum_r int int Y^2 domega ds`.
    pub fn subject_norm_sq(&self, i: usize) -> f64 {
        let ws = self.s_grid.weights();
        let ww = self.omega_weights(i);
        let mut acc = 0.0;
        for r in 0..self.regions {
            for (w, &wo) in ww.iter().enumerate() {
                if wo == 0.0 {
                    continue;
                }
                let f = self.fiber(i, r, w);
                acc += wo * f.iter().zip(ws).map(|(v, q)| v * v * q).sum::<f64>();
            }
        }
        acc
    }

    /// Pointwise difference `self - other` on identical layouts and masks.
    pub fn sub(&self, other: &HybridTensor) -> Result<Self> {
        self.check_same_layout(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Self::new(
            values,
            self.n,
            self.regions,
            self.omega_grid.clone(),
            self.s_grid.clone(),
            self.mask.clone(),
        )
    }

    /// Linear combination `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &HybridTensor, b: f64) -> Result<Self> {
        self.check_same_layout(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self::new(
            values,
            self.n,
            self.regions,
            self.omega_grid.clone(),
            self.s_grid.clone(),
            self.mask.clone(),
        )
    }

    fn check_same_layout(&self, other: &HybridTensor) -> Result<()> {
        if self.n != other.n
            || self.regions != other.regions
            || self.omega_grid != other.omega_grid
            || self.s_grid != other.s_grid
            || self.mask != other.mask
        {
            return Err(Error::Shape("tensors have different layouts".into()));
        }
        Ok(())
    }
}

/// Across-subject mean over `(r, omega, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanArray {
    pub values: Vec<f64>,
    pub regions: usize,
    pub omega_len: usize,
    pub s_len: usize,
}

impl MeanArray {
    #[inline]
    pub fn get(&self, r: usize, w: usize, s: usize) -> f64 {
        self.values[(r * self.omega_len + w) * self.s_len + s]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Removes the pointwise across-subject mean, using only observed slices.
pub fn center(tensor: &HybridTensor) -> Result<(MeanArray, HybridTensor)> {
    let n = tensor.n();
    if n < 2 {
        return Err(Error::InsufficientSubjects { needed: 2, got: n });
    }
    let (nr, nw, ns) = (tensor.regions(), tensor.omega_grid().len(), tensor.s_grid().len());
    let mut sum = vec![0.0; nr * nw * ns];
    let mut count = vec![0usize; nw];
    for i in 0..n {
        for w in 0..nw {
            if !tensor.is_observed(i, w) {
                continue;
            }
            count[w] += 1;
            for r in 0..nr {
                let base = (r * nw + w) * ns;
                for (acc, v) in sum[base..base + ns].iter_mut().zip(tensor.fiber(i, r, w)) {
                    *acc += v;
                }
            }
        }
    }
    if let Some(w) = count.iter().position(|&c| c == 0) {
        return Err(Error::InvalidData(format!(
            "omega index {w} is not observed for any subject"
        )));
    }
    for r in 0..nr {
        for w in 0..nw {
            let base = (r * nw + w) * ns;
            for v in &mut sum[base..base + ns] {
                *v /= count[w] as f64;
            }
        }
    }
    let mean = MeanArray {
        values: sum,
        regions: nr,
        omega_len: nw,
        s_len: ns,
    };
    let mut values = Vec::with_capacity(tensor.values().len());
    for i in 0..n {
        for r in 0..nr {
            for w in 0..nw {
                let observed = tensor.is_observed(i, w);
                for s in 0..ns {
                    values.push(if observed {
                        tensor.get(i, r, w, s) - mean.get(r, w, s)
                    } else {
                        0.0
                    });
                }
            }
        }
    }
    let demeaned = HybridTensor::new(
        values,
        n,
        nr,
        tensor.omega_grid().clone(),
        tensor.s_grid().clone(),
        tensor.mask().map(<[bool]>::to_vec),
    )?;
    Ok((mean, demeaned))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid1D {
        Grid1D::uniform(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn identical_subjects_center_to_zero() {
        let t = HybridTensor::from_fn(3, 2, grid(3), grid(4), |_, r, w, s| {
            (r + 2 * w + 3 * s) as f64
        })
        .unwrap();
        let (mean, z) = center(&t).unwrap();
        assert!(z.values().iter().all(|v| v.abs() < 1e-15));
        assert_eq!(mean.get(1, 2, 3), 14.0);
    }

    #[test]
    fn antisymmetric_pair_has_zero_mean() {
        let t = HybridTensor::from_fn(2, 2, grid(3), grid(3), |i, r, w, s| {
            let v = (1 + r + w * s) as f64 * 0.3;
            if i == 0 {
                v
            } else {
                -v
            }
        })
        .unwrap();
        let (mean, z) = center(&t).unwrap();
        assert!(mean.max_abs() < 1e-15);
        assert_eq!(z.values(), t.values());
    }

    #[test]
    fn small_tensor_mean_matches_hand_sums() {
        // 2 x 2 x 2 x 2 with entries 1..16 in storage order.
        let values: Vec<f64> = (1..=16).map(f64::from).collect();
        let t = HybridTensor::new(values, 2, 2, grid(2), grid(2), None).unwrap();
        let (mean, z) = center(&t).unwrap();
        // subject 0 holds 1..8, subject 1 holds 9..16; pairwise mean is v + 4.
        let expect: Vec<f64> = (1..=8).map(|v| f64::from(v) + 4.0).collect();
        assert_eq!(mean.values, expect);
        for (k, v) in z.values().iter().enumerate() {
            assert_eq!(*v, if k < 8 { -4.0 } else { 4.0 });
        }
    }

    #[test]
    fn center_requires_two_subjects() {
        let t = HybridTensor::from_fn(1, 1, grid(2), grid(2), |_, _, _, _| 1.0).unwrap();
        assert!(matches!(
            center(&t),
            Err(Error::InsufficientSubjects { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn centering_is_idempotent() {
        let t = HybridTensor::from_fn(4, 3, grid(5), grid(6), |i, r, w, s| {
            ((i * 7 + r * 3 + w * 5 + s) as f64).sin()
        })
        .unwrap();
        let (_, z) = center(&t).unwrap();
        let (m2, _) = center(&z).unwrap();
        assert!(m2.max_abs() <= 1e-10);
    }

    #[test]
    fn masked_mean_uses_observed_subjects_only() {
        let nw = 3;
        let mask = vec![true, true, true, true, false, true];
        let values: Vec<f64> = (0..2 * nw * 2)
            .map(|k| if k / (nw * 2) == 0 { 1.0 } else { 3.0 })
            .collect();
        let t = HybridTensor::new(values, 2, 1, grid(nw), grid(2), Some(mask)).unwrap();
        assert_eq!(t.get(1, 0, 1, 0), 0.0);
        let (mean, z) = center(&t).unwrap();
        assert_eq!(mean.get(0, 0, 0), 2.0);
        assert_eq!(mean.get(0, 1, 0), 1.0);
        assert_eq!(z.get(1, 0, 1, 1), 0.0);
        assert_eq!(t.omega_weights(1), &[0.5, 0.0, 0.5]);
    }

    #[test]
    fn mask_needs_two_observed_slices() {
        let mask = vec![true, false, false, true, true, true];
        let r = HybridTensor::new(vec![0.0; 12], 2, 1, grid(3), grid(2), Some(mask));
        assert!(matches!(r, Err(Error::InvalidData(_))));
    }

    #[test]
    fn rejects_non_finite_observed_values() {
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(HybridTensor::new(v, 1, 1, grid(2), grid(4), None).is_err());
    }
}
