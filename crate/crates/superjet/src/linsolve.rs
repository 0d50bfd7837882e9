//! Sparse Gauss–Jordan elimination over ℚ(params).

use crate::coeff::Rf;
use std::collections::BTreeMap;

pub type Row = BTreeMap<usize, Rf>;

#[derive(Debug, Clone)]
pub struct Solution {
    /// Solution with all free unknowns set to zero.
    pub particular: Vec<Rf>,
    /// Basis of the homogeneous solution space.
    pub kernel: Vec<Vec<Rf>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inconsistent;

fn complexity(c: &Rf) -> usize {
    c.num().num_terms() + c.den().num_terms()
}

fn axpy(row: &mut Row, rhs: &mut Rf, k: &Rf, other: &Row, orhs: &Rf) {
    for (j, c) in other {
        let e = row.entry(*j).or_insert_with(Rf::zero);
        *e = e.sub(&k.mul(c));
        if e.is_zero() {
            row.remove(j);
        }
    }
    *rhs = rhs.sub(&k.mul(orhs));
}

/// Incremental reduced row echelon form.
#[derive(Default)]
pub struct Echelon {
    n: usize,
    pivots: BTreeMap<usize, (Row, Rf)>,
    inconsistent: bool,
}

impl Echelon {
    pub fn new(n: usize) -> Self {
        Echelon { n, pivots: BTreeMap::new(), inconsistent: false }
    }

    pub fn push(&mut self, mut row: Row, mut rhs: Rf) {
        row.retain(|_, c| !c.is_zero());
        let cols: Vec<usize> = row.keys().copied().filter(|j| self.pivots.contains_key(j)).collect();
        for j in cols {
            if let Some(k) = row.get(&j).cloned() {
                let (pr, prhs) = &self.pivots[&j];
                axpy(&mut row, &mut rhs, &k, pr, prhs);
            }
        }
        if row.is_empty() {
            if !rhs.is_zero() {
                self.inconsistent = true;
            }
            return;
        }
        let (&p, _) = row.iter().min_by_key(|(j, c)| (complexity(c), **j)).unwrap();
        let inv = row[&p].inv();
        let row: Row = row.into_iter().map(|(j, c)| (j, c.mul(&inv))).collect();
        let rhs = rhs.mul(&inv);
        for (_, (r, rr)) in self.pivots.iter_mut() {
            if let Some(k) = r.get(&p).cloned() {
                axpy(r, rr, &k, &row, &rhs);
            }
        }
        self.pivots.insert(p, (row, rhs));
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn solve(&self) -> Result<Solution, Inconsistent> {
        if self.inconsistent {
            return Err(Inconsistent);
        }
        let mut x = vec![Rf::zero(); self.n];
        for (p, (_, rhs)) in &self.pivots {
            x[*p] = rhs.clone();
        }
        let mut kernel = Vec::new();
        for f in 0..self.n {
            if self.pivots.contains_key(&f) {
                continue;
            }
            let mut v = vec![Rf::zero(); self.n];
            v[f] = Rf::one();
            for (p, (r, _)) in &self.pivots {
                if let Some(c) = r.get(&f) {
                    v[*p] = c.neg();
                }
            }
            kernel.push(v);
        }
        Ok(Solution { particular: x, kernel })
    }
}

pub fn solve(n: usize, rows: Vec<(Row, Rf)>) -> Result<Solution, Inconsistent> {
    let mut e = Echelon::new(n);
    for (r, b) in rows {
        e.push(r, b);
    }
    e.solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::Poly;

    fn row(v: &[(usize, Rf)]) -> Row {
        v.iter().cloned().collect()
    }

    #[test]
    fn unique_solution_over_function_field() {
        let c = Rf::var(0);
        // c x + y = 1, x - y = c
        let rows = vec![
            (row(&[(0, c.clone()), (1, Rf::one())]), Rf::one()),
            (row(&[(0, Rf::one()), (1, Rf::int(-1))]), c.clone()),
        ];
        let s = solve(2, rows).unwrap();
        assert!(s.kernel.is_empty());
        let x = &s.particular[0];
        let y = &s.particular[1];
        assert_eq!(c.mul(x).add(y), Rf::one());
        assert_eq!(x.sub(y), c);
        let one_plus_c = Rf::from_poly(Poly::var(0).add(&Poly::one()));
        assert_eq!(x, &Rf::one().add(&c).div(&one_plus_c));
    }

    #[test]
    fn kernel_and_inconsistency() {
        let rows = vec![(row(&[(0, Rf::one()), (1, Rf::one())]), Rf::int(2))];
        let s = solve(3, rows).unwrap();
        assert_eq!(s.kernel.len(), 2);
        let bad = vec![
            (row(&[(0, Rf::one())]), Rf::one()),
            (row(&[(0, Rf::int(2))]), Rf::one()),
        ];
        assert!(solve(1, bad).is_err());
    }
}
