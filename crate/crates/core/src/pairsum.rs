//! Pairwise sums over action nodes that drive every time step.
//!
//! Given a row of node values `v` (utilities or value-function entries) and weights `p`:
//!
//! ```text
//! net flux        F_j = Σ_k [C(v_j − v_k) − C(v_k − v_j)] p_k
//! upward primitive H_j = Σ_k p_k P((v_k − v_j)₊)
//! ```
//!
//! The direct evaluation visits each unordered pair once (`J²/2` rate evaluations). For the
//! exponential families and integer powers the kernel separates into products of functions of
//! `v_j` and `v_k`, so after sorting the nodes by value both sums reduce to prefix/suffix
//! moments: `O(J log J)` per row. Ties contribute nothing in either route.

use crate::rates::{RateFamily, TransitionRateSpec};
use crate::scalar::Scalar;

/// How pairwise sums are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairSumMode {
    /// Sorted moment sums when the rate family allows it, direct otherwise.
    #[default]
    Auto,
    /// Always visit every pair.
    Direct,
}

/// Largest integer power handled by the moment expansion.
const MAX_SEPARABLE_POWER: usize = 4;
/// Bound on `q · (max v − min v)` for the exponential expansions; keeps `e^{±q x}` well scaled.
const MAX_EXPONENT_SPAN: f64 = 40.0;

#[derive(Debug, Clone, Copy)]
enum Separable<T> {
    Exp { q: T, sign: T },
    Poly { n: usize },
}

/// Reusable scratch space; keeps the node ordering between consecutive rows, which are
/// usually almost sorted already.
#[derive(Debug, Clone)]
pub struct PairSums<T> {
    mode: PairSumMode,
    order: Vec<usize>,
    shifted: Vec<T>,
    // moments over strictly-lower and strictly-higher nodes, per sorted position
    below: Vec<T>,
    above: Vec<T>,
    // basis functions per node index, `width` entries each
    basis: Vec<T>,
    acc: Vec<T>,
    width: usize,
}

impl<T: Scalar> PairSums<T> {
    pub fn new(mode: PairSumMode) -> Self {
        Self {
            mode,
            order: Vec::new(),
            shifted: Vec::new(),
            below: Vec::new(),
            above: Vec::new(),
            basis: Vec::new(),
            acc: Vec::new(),
            width: 0,
        }
    }

    pub fn mode(&self) -> PairSumMode {
        self.mode
    }

    fn separable(&self, spec: &TransitionRateSpec<T>, values: &[T]) -> Option<Separable<T>> {
        if self.mode == PairSumMode::Direct || values.len() < 3 {
            return None;
        }
        let (lo, hi) = values
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        if !span.is_finite() {
            return None;
        }
        if let Some(level) = spec.truncation_level() {
            if span > level {
                return None;
            }
        }
        let q = spec.q();
        match spec.family() {
            RateFamily::PositiveExponential | RateFamily::NegativeExponential => {
                if (q * span).as_f64() > MAX_EXPONENT_SPAN {
                    return None;
                }
                let sign = if spec.family() == RateFamily::PositiveExponential {
                    T::one()
                } else {
                    -T::one()
                };
                Some(Separable::Exp { q, sign })
            }
            RateFamily::Power => {
                let n = q.to_usize()?;
                (T::from_usize_lossy(n) == q && n <= MAX_SEPARABLE_POWER)
                    .then_some(Separable::Poly { n })
            }
            RateFamily::Logarithmic => None,
        }
    }

    /// Sorts nodes by value, centers values, tabulates `basis` per node, and fills the
    /// strictly-higher (and, if `with_below`, strictly-lower) weighted moments.
    fn prepare(
        &mut self,
        values: &[T],
        p: &[T],
        width: usize,
        with_below: bool,
        basis: impl Fn(T, &mut [T]),
    ) {
        let n = values.len();
        if self.order.len() != n {
            self.order = (0..n).collect();
        }
        self.order.sort_by(|&a, &b| {
            values[a]
                .partial_cmp(&values[b])
                .expect("finite node values")
        });
        let lo = values[self.order[0]];
        let hi = values[self.order[n - 1]];
        let center = (lo + hi) / T::lit(2.0);
        self.shifted.clear();
        self.shifted.extend(values.iter().map(|&v| v - center));

        self.width = width;
        self.basis.resize(n * width, T::zero());
        for (k, row) in self.basis.chunks_exact_mut(width).enumerate() {
            basis(self.shifted[k], row);
        }
        self.above.resize(n * width, T::zero());
        self.below
            .resize(if with_below { n * width } else { 0 }, T::zero());
        self.acc.clear();
        self.acc.resize(width, T::zero());

        // groups of equal values share one entry and are excluded from each other's moments
        let mut end = n;
        while end > 0 {
            let value = values[self.order[end - 1]];
            let mut start = end;
            while start > 0 && values[self.order[start - 1]] == value {
                start -= 1;
            }
            for pos in start..end {
                self.above[pos * width..(pos + 1) * width].copy_from_slice(&self.acc);
            }
            for pos in start..end {
                let k = self.order[pos];
                let row = &self.basis[k * width..(k + 1) * width];
                for (a, &r) in self.acc.iter_mut().zip(row) {
                    *a = *a + p[k] * r;
                }
            }
            end = start;
        }
        if !with_below {
            return;
        }
        self.acc.iter_mut().for_each(|a| *a = T::zero());
        let mut start = 0;
        while start < n {
            let value = values[self.order[start]];
            let mut end = start;
            while end < n && values[self.order[end]] == value {
                end += 1;
            }
            for pos in start..end {
                self.below[pos * width..(pos + 1) * width].copy_from_slice(&self.acc);
            }
            for pos in start..end {
                let k = self.order[pos];
                let row = &self.basis[k * width..(k + 1) * width];
                for (a, &r) in self.acc.iter_mut().zip(row) {
                    *a = *a + p[k] * r;
                }
            }
            start = end;
        }
    }

    /// `out[j] = Σ_k [C(v_j − v_k) − C(v_k − v_j)] p_k`.
    pub fn net_flux(&mut self, spec: &TransitionRateSpec<T>, values: &[T], p: &[T], out: &mut [T]) {
        assert_eq!(values.len(), p.len());
        assert_eq!(values.len(), out.len());
        match self.separable(spec, values) {
            None => net_flux_direct(spec, values, p, out),
            Some(Separable::Exp { q, sign }) => {
                // basis: [1, e^{q x}, e^{-q x}]
                self.prepare(values, p, 3, true, |x, row| {
                    let e = (q * x).exp();
                    row[0] = T::one();
                    row[1] = e;
                    row[2] = e.recip();
                });
                for pos in 0..values.len() {
                    let j = self.order[pos];
                    let e = self.basis[j * 3 + 1];
                    let b = &self.below[pos * 3..pos * 3 + 3];
                    let a = &self.above[pos * 3..pos * 3 + 3];
                    out[j] = if sign > T::zero() {
                        // C(d) = e^{q d} − 1
                        let inflow = e * b[2] - b[0];
                        let outflow = a[1] / e - a[0];
                        inflow - outflow
                    } else {
                        // C(d) = 1 − e^{−q d}
                        let inflow = b[0] - b[1] / e;
                        let outflow = a[0] - e * a[2];
                        inflow - outflow
                    };
                }
            }
            Some(Separable::Poly { n }) => {
                let binom = binomials::<T>(n);
                self.prepare(values, p, n + 1, true, |x, row| {
                    let mut pow = T::one();
                    for r in row.iter_mut() {
                        *r = pow;
                        pow = pow * x;
                    }
                });
                let w = n + 1;
                for pos in 0..values.len() {
                    let j = self.order[pos];
                    let x = self.shifted[j];
                    let b = &self.below[pos * w..(pos + 1) * w];
                    let a = &self.above[pos * w..(pos + 1) * w];
                    // Σ_below (x − x_k)^n and Σ_above (x_k − x)^n
                    let mut inflow = T::zero();
                    let mut outflow = T::zero();
                    for m in 0..=n {
                        let xp = x.powi((n - m) as i32);
                        let odd = (n - m) % 2 == 1;
                        let coef = binom[m] * xp;
                        let term_in = if m % 2 == 1 {
                            -coef * b[m]
                        } else {
                            coef * b[m]
                        };
                        let term_out = if odd { -coef * a[m] } else { coef * a[m] };
                        inflow = inflow + term_in;
                        outflow = outflow + term_out;
                    }
                    out[j] = inflow - outflow;
                }
            }
        }
    }

    /// `out[j] = Σ_k p_k P((v_k − v_j)₊)`.
    pub fn upward_primitive(
        &mut self,
        spec: &TransitionRateSpec<T>,
        values: &[T],
        p: &[T],
        out: &mut [T],
    ) {
        assert_eq!(values.len(), p.len());
        assert_eq!(values.len(), out.len());
        match self.separable(spec, values) {
            None => upward_primitive_direct(spec, values, p, out),
            Some(Separable::Exp { q, sign }) => {
                // basis: [1, x, e^{s q x}]
                self.prepare(values, p, 3, false, |x, row| {
                    row[0] = T::one();
                    row[1] = x;
                    row[2] = (sign * q * x).exp();
                });
                for pos in 0..values.len() {
                    let j = self.order[pos];
                    let x = self.shifted[j];
                    let a = &self.above[pos * 3..pos * 3 + 3];
                    let e = self.basis[j * 3 + 2];
                    // Σ_above (x_k − x)
                    let lin = a[1] - x * a[0];
                    // pos: (e^{qd} − q d − 1)/q ; neg: (e^{−qd} + q d − 1)/q
                    let h = (a[2] / e - sign * q * lin - a[0]) / q;
                    out[j] = h.max(T::zero());
                }
            }
            Some(Separable::Poly { n }) => {
                let deg = n + 1;
                let binom = binomials::<T>(deg);
                self.prepare(values, p, deg + 1, false, |x, row| {
                    let mut pow = T::one();
                    for r in row.iter_mut() {
                        *r = pow;
                        pow = pow * x;
                    }
                });
                let w = deg + 1;
                let scale = T::from_usize_lossy(deg).recip();
                for pos in 0..values.len() {
                    let j = self.order[pos];
                    let x = self.shifted[j];
                    let a = &self.above[pos * w..(pos + 1) * w];
                    let mut acc = T::zero();
                    for m in 0..=deg {
                        let coef = binom[m] * x.powi((deg - m) as i32);
                        acc = if (deg - m) % 2 == 1 {
                            acc - coef * a[m]
                        } else {
                            acc + coef * a[m]
                        };
                    }
                    out[j] = (acc * scale).max(T::zero());
                }
            }
        }
    }
}

fn binomials<T: Scalar>(n: usize) -> Vec<T> {
    let mut row = vec![T::one(); n + 1];
    for m in 1..n {
        let mut c = 1u64;
        for i in 0..m {
            c = c * (n - i) as u64 / (i + 1) as u64;
        }
        row[m] = T::from_u64(c).expect("small binomial");
    }
    row
}

/// Reference evaluation of the net flux, one rate evaluation per unordered pair.
pub fn net_flux_direct<T: Scalar>(
    spec: &TransitionRateSpec<T>,
    values: &[T],
    p: &[T],
    out: &mut [T],
) {
    let n = values.len();
    out.iter_mut().for_each(|o| *o = T::zero());
    for j in 0..n {
        let vj = values[j];
        let pj = p[j];
        let mut acc = T::zero();
        for k in (j + 1)..n {
            let d = vj - values[k];
            // g(d) = C(d) − C(−d); one of the two terms is always zero
            let g = if d > T::zero() {
                spec.rate(d)
            } else if d < T::zero() {
                -spec.rate(-d)
            } else {
                continue;
            };
            acc = acc + g * p[k];
            out[k] = out[k] - g * pj;
        }
        out[j] = out[j] + acc;
    }
}

/// Reference evaluation of `Σ_k p_k P((v_k − v_j)₊)`.
pub fn upward_primitive_direct<T: Scalar>(
    spec: &TransitionRateSpec<T>,
    values: &[T],
    p: &[T],
    out: &mut [T],
) {
    let n = values.len();
    out.iter_mut().for_each(|o| *o = T::zero());
    for j in 0..n {
        let vj = values[j];
        let pj = p[j];
        let mut acc = T::zero();
        for k in (j + 1)..n {
            let d = values[k] - vj;
            if d > T::zero() {
                acc = acc + p[k] * spec.primitive(d);
            } else if d < T::zero() {
                out[k] = out[k] + pj * spec.primitive(-d);
            }
        }
        out[j] = out[j] + acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_flux(spec: &TransitionRateSpec<f64>, v: &[f64], p: &[f64]) -> Vec<f64> {
        (0..v.len())
            .map(|j| {
                (0..v.len())
                    .map(|k| (spec.rate(v[j] - v[k]) - spec.rate(v[k] - v[j])) * p[k])
                    .sum()
            })
            .collect()
    }

    fn brute_primitive(spec: &TransitionRateSpec<f64>, v: &[f64], p: &[f64]) -> Vec<f64> {
        (0..v.len())
            .map(|j| {
                (0..v.len())
                    .map(|k| p[k] * spec.primitive(v[k] - v[j]))
                    .sum()
            })
            .collect()
    }

    fn specs() -> Vec<TransitionRateSpec<f64>> {
        vec![
            TransitionRateSpec::power(1.0).unwrap(),
            TransitionRateSpec::power(2.0).unwrap(),
            TransitionRateSpec::power(3.0).unwrap(),
            TransitionRateSpec::power(1.5).unwrap(),
            TransitionRateSpec::logarithmic(0.5).unwrap(),
            TransitionRateSpec::positive_exponential(2.0).unwrap(),
            TransitionRateSpec::positive_exponential(1.5).unwrap(),
            TransitionRateSpec::negative_exponential(2.0).unwrap(),
        ]
    }

    #[test]
    fn both_routes_agree_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [3usize, 17, 64] {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // force ties
            v[1] = v[0];
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
            for spec in specs() {
                let want_f = brute_flux(&spec, &v, &p);
                let want_h = brute_primitive(&spec, &v, &p);
                for mode in [PairSumMode::Auto, PairSumMode::Direct] {
                    let mut ws = PairSums::new(mode);
                    let mut f = vec![0.0; n];
                    let mut h = vec![0.0; n];
                    ws.net_flux(&spec, &v, &p, &mut f);
                    ws.upward_primitive(&spec, &v, &p, &mut h);
                    for j in 0..n {
                        assert!(
                            (f[j] - want_f[j]).abs() < 1e-12 * (1.0 + want_f[j].abs()),
                            "{spec} {mode:?} flux j={j}: {} vs {}",
                            f[j],
                            want_f[j]
                        );
                        assert!(
                            (h[j] - want_h[j]).abs() < 1e-12 * (1.0 + want_h[j].abs()),
                            "{spec} {mode:?} primitive j={j}: {} vs {}",
                            h[j],
                            want_h[j]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn constant_values_give_zero() {
        let v = vec![0.3; 10];
        let p = vec![1.0; 10];
        for spec in specs() {
            let mut ws = PairSums::new(PairSumMode::Auto);
            let mut f = vec![1.0; 10];
            let mut h = vec![1.0; 10];
            ws.net_flux(&spec, &v, &p, &mut f);
            ws.upward_primitive(&spec, &v, &p, &mut h);
            assert!(f.iter().all(|&x| x == 0.0));
            assert!(h.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn falls_back_when_truncation_binds() {
        let spec = TransitionRateSpec::positive_exponential(1.0)
            .unwrap()
            .with_truncation(0.5)
            .unwrap();
        let v = vec![0.0, 0.2, 1.0, 0.9];
        let p = vec![1.0, 0.5, 0.25, 2.0];
        let mut ws = PairSums::new(PairSumMode::Auto);
        let mut f = vec![0.0; 4];
        ws.net_flux(&spec, &v, &p, &mut f);
        let want = brute_flux(&spec, &v, &p);
        for j in 0..4 {
            assert!((f[j] - want[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn binomial_rows() {
        assert_eq!(binomials::<f64>(4), vec![1.0, 4.0, 6.0, 4.0, 1.0]);
        assert_eq!(binomials::<f64>(1), vec![1.0, 1.0]);
    }
}
