//! Dense rank-3/4/5 tensors over `f64`, square in every axis.
//!
//! nalgebra covers ranks 1 and 2; the geometry code needs a handful of
//! higher ranks with explicit index contractions, so these stay minimal:
//! storage, tuple indexing, `from_fn` constructors, and max-abs norms.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

macro_rules! dense_tensor {
    ($name:ident, $rank:literal, ($($idx:ident),+)) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            n: usize,
            data: Vec<f64>,
        }

        impl $name {
            pub fn zeros(n: usize) -> Self {
                Self { n, data: vec![0.0; n.pow($rank)] }
            }

            pub fn from_fn(n: usize, mut f: impl FnMut($(dense_tensor!(@ty $idx)),+) -> f64) -> Self {
                let mut t = Self::zeros(n);
                t.fill_from(&mut f);
                t
            }

            pub fn dim(&self) -> usize {
                self.n
            }

            fn flat(&self, idx: [usize; $rank]) -> usize {
                let mut k = 0usize;
                for &i in idx.iter() {
                    debug_assert!(i < self.n);
                    k = k * self.n + i;
                }
                k
            }

            /// Largest absolute entry; NaN if any entry is NaN.
            pub fn max_abs(&self) -> f64 {
                let mut m = 0.0f64;
                for &x in &self.data {
                    if x.is_nan() {
                        return f64::NAN;
                    }
                    m = m.max(x.abs());
                }
                m
            }

            pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
                Self { n: self.n, data: self.data.iter().map(|&x| f(x)).collect() }
            }
        }

        impl Index<($(dense_tensor!(@ty $idx)),+)> for $name {
            type Output = f64;
            fn index(&self, ($($idx),+): ($(dense_tensor!(@ty $idx)),+)) -> &f64 {
                &self.data[self.flat([$($idx),+])]
            }
        }

        impl IndexMut<($(dense_tensor!(@ty $idx)),+)> for $name {
            fn index_mut(&mut self, ($($idx),+): ($(dense_tensor!(@ty $idx)),+)) -> &mut f64 {
                let k = self.flat([$($idx),+]);
                &mut self.data[k]
            }
        }

        impl Add for &$name {
            type Output = $name;
            fn add(self, rhs: &$name) -> $name {
                assert_eq!(self.n, rhs.n);
                $name {
                    n: self.n,
                    data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
                }
            }
        }

        impl Sub for &$name {
            type Output = $name;
            fn sub(self, rhs: &$name) -> $name {
                assert_eq!(self.n, rhs.n);
                $name {
                    n: self.n,
                    data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
                }
            }
        }

        impl Mul<f64> for &$name {
            type Output = $name;
            fn mul(self, s: f64) -> $name {
                $name { n: self.n, data: self.data.iter().map(|x| x * s).collect() }
            }
        }
    };
    (@ty $idx:ident) => { usize };
}

dense_tensor!(T3, 3, (i, j, k));
dense_tensor!(T4, 4, (i, j, k, l));
dense_tensor!(T5, 5, (i, j, k, l, m));

impl T3 {
    fn fill_from(&mut self, f: &mut impl FnMut(usize, usize, usize) -> f64) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = f(i, j, k);
                    self[(i, j, k)] = v;
                }
            }
        }
    }
}

impl T4 {
    fn fill_from(&mut self, f: &mut impl FnMut(usize, usize, usize, usize) -> f64) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = f(i, j, k, l);
                        self[(i, j, k, l)] = v;
                    }
                }
            }
        }
    }
}

impl T5 {
    fn fill_from(&mut self, f: &mut impl FnMut(usize, usize, usize, usize, usize) -> f64) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        for m in 0..n {
                            let v = f(i, j, k, l, m);
                            self[(i, j, k, l, m)] = v;
                        }
                    }
                }
            }
        }
    }
}
