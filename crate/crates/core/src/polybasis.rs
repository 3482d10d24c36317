//! Orthonormal multivariate polynomial bases and Gauss-Lobatto quadrature.
//!
//! Univariate families are orthonormal with respect to a probability measure on
//! a bounded interval: the uniform law (Legendre) or a Beta law of the first
//! kind (Jacobi). Every family is evaluated on the reference interval `[-1, 1]`
//! through the affine map of its support, using the three-term recurrence of the
//! monic Jacobi polynomials rescaled to unit norm.
//!
//! Multivariate basis functions are tensor products indexed by a total-order
//! multi-index set in graded reverse-lexicographic order, so that a coefficient
//! index always designates the same polynomial.

use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of tensor quadrature nodes.
pub const DEFAULT_NODE_GUARD: u64 = 10_000_000;

/// `binomial(n, k)` or `None` when it does not fit in a `usize`.
pub fn binomial(n: usize, k: usize) -> Option<usize> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    usize::try_from(acc).ok()
}

/// Total-order multi-index set `{ i in N^d : |i|_1 <= p }`.
///
/// Tuples are sorted by total degree and, within one degree, by decreasing
/// lexicographic order: for `d = 3` the first entries are `(0,0,0)`,
/// `(1,0,0)`, `(0,1,0)`, `(0,0,1)`, `(2,0,0)`, `(1,1,0)`, ...
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    d: usize,
    p: usize,
    indices: Vec<Vec<usize>>,
}

impl MultiIndexSet {
    pub fn total_order(d: usize, p: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("multi-index dimension must be at least 1"));
        }
        let card = binomial(p + d, d).ok_or_else(|| {
            Error::SizeOverflow(format!("binomial({}, {}) does not fit in usize", p + d, d))
        })?;
        // Refuse absurd allocations before trying them.
        if card > (isize::MAX as usize) / (d * std::mem::size_of::<usize>()) {
            return Err(Error::SizeOverflow(format!(
                "{card} multi-indices of dimension {d} cannot be stored"
            )));
        }
        let mut indices = Vec::with_capacity(card);
        let mut buf = vec![0usize; d];
        for degree in 0..=p {
            compositions(degree, 0, &mut buf, &mut indices);
        }
        debug_assert_eq!(indices.len(), card);
        Ok(Self { d, p, indices })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, k: usize) -> Option<&[usize]> {
        self.indices.get(k).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.indices.iter().map(Vec::as_slice)
    }

    /// Position of a multi-index in the set.
    pub fn position(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.d {
            return None;
        }
        self.indices.iter().position(|i| i == index)
    }
}

// Fills `out` with all compositions of `remaining` into the slots `pos..`,
// in decreasing lexicographic order.
fn compositions(remaining: usize, pos: usize, buf: &mut [usize], out: &mut Vec<Vec<usize>>) {
    if pos + 1 == buf.len() {
        buf[pos] = remaining;
        out.push(buf.to_vec());
        return;
    }
    for v in (0..=remaining).rev() {
        buf[pos] = v;
        compositions(remaining - v, pos + 1, buf, out);
    }
    buf[pos] = 0;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    LegendreUniform,
    JacobiBeta,
}

/// One univariate orthonormal polynomial family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilyDescriptor", into = "FamilyDescriptor")]
pub struct UnivariateFamily {
    kind: FamilyKind,
    lo: f64,
    hi: f64,
    shape: Option<(f64, f64)>,
    // classical Jacobi exponents of (1-t) and (1+t)
    jacobi: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FamilyDescriptor {
    kind: FamilyKind,
    support: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<[f64; 2]>,
}

impl TryFrom<FamilyDescriptor> for UnivariateFamily {
    type Error = Error;

    fn try_from(d: FamilyDescriptor) -> Result<Self> {
        let [lo, hi] = d.support;
        match (d.kind, d.beta) {
            (FamilyKind::LegendreUniform, None) => Self::legendre(lo, hi),
            (FamilyKind::JacobiBeta, Some([a, b])) => Self::jacobi_beta(lo, hi, a, b),
            (FamilyKind::LegendreUniform, Some(_)) => {
                Err(Error::invalid("legendre-uniform family takes no beta parameters"))
            }
            (FamilyKind::JacobiBeta, None) => {
                Err(Error::invalid("jacobi-beta family requires beta parameters"))
            }
        }
    }
}

impl From<UnivariateFamily> for FamilyDescriptor {
    fn from(f: UnivariateFamily) -> Self {
        FamilyDescriptor {
            kind: f.kind,
            support: [f.lo, f.hi],
            beta: f.shape.map(|(a, b)| [a, b]),
        }
    }
}

impl UnivariateFamily {
    /// Legendre polynomials, orthonormal for the uniform law on `[lo, hi]`.
    pub fn legendre(lo: f64, hi: f64) -> Result<Self> {
        check_support(lo, hi)?;
        Ok(Self {
            kind: FamilyKind::LegendreUniform,
            lo,
            hi,
            shape: None,
            jacobi: (0.0, 0.0),
        })
    }

    /// Jacobi polynomials, orthonormal for the Beta law with density
    /// proportional to `(x - lo)^(a-1) (hi - x)^(b-1)` on `[lo, hi]`.
    pub fn jacobi_beta(lo: f64, hi: f64, a: f64, b: f64) -> Result<Self> {
        check_support(lo, hi)?;
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::invalid(format!(
                "beta shape parameters must be positive, got ({a}, {b})"
            )));
        }
        Ok(Self {
            kind: FamilyKind::JacobiBeta,
            lo,
            hi,
            shape: Some((a, b)),
            jacobi: (b - 1.0, a - 1.0),
        })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn beta_params(&self) -> Option<(f64, f64)> {
        self.shape
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn to_reference(&self, x: f64) -> f64 {
        2.0 * (x - self.lo) / (self.hi - self.lo) - 1.0
    }

    pub fn from_reference(&self, t: f64) -> f64 {
        self.lo + 0.5 * (t + 1.0) * (self.hi - self.lo)
    }

    /// Monic recurrence coefficients `(a_n, b_n)`, `n = 0..count`, on the
    /// reference interval. `b_0` is the total mass (1 for a probability law).
    pub fn recurrence(&self, count: usize) -> (Vec<f64>, Vec<f64>) {
        let (al, be) = self.jacobi;
        let s = al + be;
        let mut a = Vec::with_capacity(count);
        let mut b = Vec::with_capacity(count);
        for n in 0..count {
            let nf = n as f64;
            let an = if n == 0 {
                (be - al) / (s + 2.0)
            } else {
                (be * be - al * al) / ((2.0 * nf + s) * (2.0 * nf + s + 2.0))
            };
            let bn = match n {
                0 => 1.0,
                1 => 4.0 * (1.0 + al) * (1.0 + be) / ((2.0 + s).powi(2) * (3.0 + s)),
                _ => {
                    let m = 2.0 * nf + s;
                    4.0 * nf * (nf + al) * (nf + be) * (nf + s) / (m * m * (m + 1.0) * (m - 1.0))
                }
            };
            a.push(an);
            b.push(bn);
        }
        (a, b)
    }

    /// Degree-`k` orthonormal polynomial at `x`. Points outside the support
    /// are extrapolated; see [`UnivariateFamily::contains`].
    pub fn eval(&self, k: usize, x: f64) -> f64 {
        let table = RecurrenceTable::new(self, k);
        let mut out = vec![0.0; k + 1];
        table.eval_all(self.to_reference(x), &mut out);
        out[k]
    }

    /// Gauss-Lobatto rule with `q` nodes including both ends of the support.
    /// Exact for polynomials of degree `2q - 3` under the family's measure.
    pub fn lobatto_rule(&self, q: usize) -> Result<Rule1d> {
        if q < 2 {
            return Err(Error::invalid(format!("Lobatto rule needs q >= 2, got {q}")));
        }
        let (a, b) = self.recurrence(q);
        let n = q;
        // Modify the last recurrence step so that the degree-n polynomial
        // vanishes at both endpoints -1 and +1.
        let ratio = |t: f64| {
            // r_k = pi_{k-1}(t) / pi_k(t), starting at r_1
            let mut r = 1.0 / (t - a[0]);
            for k in 2..n {
                r = 1.0 / ((t - a[k - 1]) - b[k - 1] * r);
            }
            r
        };
        let (ra, rb) = (ratio(-1.0), ratio(1.0));
        let b_mod = (-1.0 - 1.0) / (ra - rb);
        let a_mod = -1.0 - b_mod * ra;

        let mut jac = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            jac[(i, i)] = if i + 1 == n { a_mod } else { a[i] };
            if i + 1 < n {
                let off = if i + 2 == n { b_mod.sqrt() } else { b[i + 1].sqrt() };
                jac[(i, i + 1)] = off;
                jac[(i + 1, i)] = off;
            }
        }
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        pairs[0].0 = -1.0;
        pairs[n - 1].0 = 1.0;
        if pairs.iter().any(|&(_, w)| !(w > 0.0)) {
            return Err(Error::Numerical(format!(
                "Lobatto rule with {q} nodes produced a non-positive weight"
            )));
        }
        Ok(Rule1d {
            nodes: pairs.iter().map(|&(t, _)| self.from_reference(t)).collect(),
            weights: pairs.iter().map(|&(_, w)| w).collect(),
        })
    }
}

fn check_support(lo: f64, hi: f64) -> Result<()> {
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::invalid(format!("support must satisfy lo < hi, got [{lo}, {hi}]")));
    }
    Ok(())
}

/// Precomputed orthonormal recurrence up to a maximum degree.
#[derive(Debug, Clone)]
struct RecurrenceTable {
    a: Vec<f64>,
    sqrt_b: Vec<f64>,
}

impl RecurrenceTable {
    fn new(family: &UnivariateFamily, max_degree: usize) -> Self {
        let (a, b) = family.recurrence(max_degree + 1);
        Self {
            a,
            sqrt_b: b.iter().map(|v| v.sqrt()).collect(),
        }
    }

    /// Writes the orthonormal values of degrees `0..out.len()` at reference point `t`.
    fn eval_all(&self, t: f64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        out[0] = 1.0;
        if out.len() > 1 {
            out[1] = (t - self.a[0]) / self.sqrt_b[1];
        }
        for k in 1..out.len() - 1 {
            out[k + 1] = ((t - self.a[k]) * out[k] - self.sqrt_b[k] * out[k - 1]) / self.sqrt_b[k + 1];
        }
    }
}

/// Tensor-product orthonormal basis over a total-order multi-index set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "BasisDescriptor", into = "BasisDescriptor")]
pub struct TensorBasis {
    families: Vec<UnivariateFamily>,
    mindex: MultiIndexSet,
    tables: Vec<RecurrenceTable>,
}

/// JSON form of a basis: one family per dimension plus `d` and `p`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub d: usize,
    pub p: usize,
    pub families: Vec<UnivariateFamily>,
}

impl TryFrom<BasisDescriptor> for TensorBasis {
    type Error = Error;

    fn try_from(desc: BasisDescriptor) -> Result<Self> {
        if desc.families.len() != desc.d {
            return Err(Error::DimensionMismatch {
                expected: desc.d,
                found: desc.families.len(),
            });
        }
        TensorBasis::new(desc.families, desc.p)
    }
}

impl From<TensorBasis> for BasisDescriptor {
    fn from(b: TensorBasis) -> Self {
        BasisDescriptor {
            d: b.dim(),
            p: b.order(),
            families: b.families,
        }
    }
}

impl PartialEq for TensorBasis {
    fn eq(&self, other: &Self) -> bool {
        self.families == other.families && self.mindex == other.mindex
    }
}

impl TensorBasis {
    pub fn new(families: Vec<UnivariateFamily>, p: usize) -> Result<Self> {
        let mindex = MultiIndexSet::total_order(families.len(), p)?;
        let tables = families.iter().map(|f| RecurrenceTable::new(f, p)).collect();
        Ok(Self {
            families,
            mindex,
            tables,
        })
    }

    /// Same family in every dimension.
    pub fn isotropic(family: UnivariateFamily, d: usize, p: usize) -> Result<Self> {
        Self::new(vec![family; d], p)
    }

    pub fn dim(&self) -> usize {
        self.families.len()
    }

    pub fn order(&self) -> usize {
        self.mindex.order()
    }

    /// Number of basis functions `R`.
    pub fn len(&self) -> usize {
        self.mindex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mindex.is_empty()
    }

    pub fn families(&self) -> &[UnivariateFamily] {
        &self.families
    }

    pub fn multi_indices(&self) -> &MultiIndexSet {
        &self.mindex
    }

    pub fn descriptor(&self) -> BasisDescriptor {
        self.clone().into()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    // Univariate values of degrees 0..=p for each dimension, flattened as
    // `d` consecutive blocks of length `p + 1`.
    fn univariate_table(&self, x: &[f64]) -> Vec<f64> {
        let stride = self.order() + 1;
        let mut table = vec![0.0; stride * self.dim()];
        for (j, ((fam, tab), xj)) in self.families.iter().zip(&self.tables).zip(x).enumerate() {
            tab.eval_all(fam.to_reference(*xj), &mut table[j * stride..(j + 1) * stride]);
        }
        table
    }

    /// Value of basis function `k` at `x`.
    pub fn eval(&self, k: usize, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let index = self.mindex.get(k).ok_or(Error::IndexOutOfRange {
            index: k,
            len: self.len(),
        })?;
        let table = self.univariate_table(x);
        let stride = self.order() + 1;
        Ok(index
            .iter()
            .enumerate()
            .map(|(j, &deg)| table[j * stride + deg])
            .product())
    }

    /// All `R` basis functions at `x`.
    pub fn eval_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut out = vec![0.0; self.len()];
        self.eval_all_into(x, &mut out);
        Ok(out)
    }

    /// Basis functions at `x` restricted to the listed indices.
    pub fn eval_subset(&self, subset: &[usize], x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let table = self.univariate_table(x);
        let stride = self.order() + 1;
        subset
            .iter()
            .map(|&k| {
                let index = self.mindex.get(k).ok_or(Error::IndexOutOfRange {
                    index: k,
                    len: self.len(),
                })?;
                Ok(index
                    .iter()
                    .enumerate()
                    .map(|(j, &deg)| table[j * stride + deg])
                    .product())
            })
            .collect()
    }

    pub(crate) fn eval_all_into(&self, x: &[f64], out: &mut [f64]) {
        let table = self.univariate_table(x);
        let stride = self.order() + 1;
        for (o, index) in out.iter_mut().zip(self.mindex.iter()) {
            *o = index
                .iter()
                .enumerate()
                .map(|(j, &deg)| table[j * stride + deg])
                .product();
        }
    }
}

/// Nodes and probability weights of a one-dimensional rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Fully tensorized quadrature rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    rules: Vec<Rule1d>,
    total: usize,
}

/// Node count of a tensor rule, as a decimal string when it overflows `u128`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeCount(Option<u128>);

impl fmt::Display for NodeCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(n) => write!(f, "{n}"),
            None => write!(f, "more than {}", u128::MAX),
        }
    }
}

pub fn tensor_node_count(q_per_dim: &[usize]) -> NodeCount {
    NodeCount(
        q_per_dim
            .iter()
            .try_fold(1u128, |acc, &q| acc.checked_mul(q as u128)),
    )
}

impl QuadratureRule {
    /// Tensor product of per-dimension Lobatto rules under the default node guard.
    pub fn tensor(basis: &TensorBasis, q_per_dim: &[usize]) -> Result<Self> {
        Self::tensor_with_guard(basis, q_per_dim, DEFAULT_NODE_GUARD)
    }

    pub fn tensor_with_guard(basis: &TensorBasis, q_per_dim: &[usize], limit: u64) -> Result<Self> {
        if q_per_dim.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: q_per_dim.len(),
            });
        }
        if let Some(&q) = q_per_dim.iter().find(|&&q| q < 2) {
            return Err(Error::invalid(format!("Lobatto rule needs q >= 2, got {q}")));
        }
        let count = tensor_node_count(q_per_dim);
        let total = match count.0 {
            Some(n) if n <= limit as u128 => n as usize,
            _ => {
                return Err(Error::NodeGuard {
                    nodes: count.to_string(),
                    limit,
                })
            }
        };
        let rules = basis
            .families()
            .iter()
            .zip(q_per_dim)
            .map(|(fam, &q)| fam.lobatto_rule(q))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rules, total })
    }

    /// Rule whose per-dimension exactness `2q - 3` covers `degree`.
    pub fn exact_for_degree(basis: &TensorBasis, degree: usize) -> Result<Self> {
        let q = lobatto_nodes_for_degree(degree);
        Self::tensor(basis, &vec![q; basis.dim()])
    }

    pub fn from_rules(rules: Vec<Rule1d>) -> Result<Self> {
        let total = rules
            .iter()
            .try_fold(1usize, |acc, r| acc.checked_mul(r.len()))
            .ok_or_else(|| Error::SizeOverflow("tensor node count".into()))?;
        Ok(Self { rules, total })
    }

    pub fn dim(&self) -> usize {
        self.rules.len()
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn rules(&self) -> &[Rule1d] {
        &self.rules
    }

    /// Node `l` (mixed-radix, first dimension fastest) and its weight.
    pub fn node(&self, l: usize) -> (Vec<f64>, f64) {
        let mut rem = l;
        let mut x = Vec::with_capacity(self.dim());
        let mut w = 1.0;
        for r in &self.rules {
            let i = rem % r.len();
            rem /= r.len();
            x.push(r.nodes[i]);
            w *= r.weights[i];
        }
        (x, w)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        (0..self.total).map(move |l| self.node(l))
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * f(&x)).sum()
    }

    /// Writes one row per node: `x1,...,xd,weight`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim()).map(|j| format!("x{j}")).collect();
        header.push("weight".into());
        wtr.write_record(&header)?;
        for (x, w) in self.iter() {
            let mut row: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
            row.push(format!("{w:e}"));
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Smallest Lobatto node count whose exactness `2q - 3` reaches `degree`.
pub fn lobatto_nodes_for_degree(degree: usize) -> usize {
    ((degree + 3).div_ceil(2)).max(2)
}

/// Largest deviation of the quadrature Gram matrix of `basis` from identity.
pub fn orthonormality_defect(basis: &TensorBasis, rule: &QuadratureRule) -> Result<f64> {
    if rule.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: rule.dim(),
        });
    }
    let r = basis.len();
    let n = rule.len();
    let mut a = DMatrix::<f64>::zeros(n, r);
    let mut row = vec![0.0; r];
    for (l, (x, w)) in rule.iter().enumerate() {
        basis.eval_all_into(&x, &mut row);
        let sw = w.sqrt();
        for (k, v) in row.iter().enumerate() {
            a[(l, k)] = sw * v;
        }
    }
    let gram = a.tr_mul(&a);
    let mut defect = 0.0f64;
    for j in 0..r {
        for k in 0..r {
            let target = if j == k { 1.0 } else { 0.0 };
            defect = defect.max((gram[(j, k)] - target).abs());
        }
    }
    Ok(defect)
}
