use std::sync::Arc;

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

impl Graph {
    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Var {
        let xv = self.value_arc(x);
        let out = xv.map(f);
        let yv = Arc::new(out.clone());
        self.custom(&[x], out, move |g| {
            let mut dx = g.clone();
            for ((d, &xi), &yi) in dx.data_mut().iter_mut().zip(xv.data()).zip(yv.data()) {
                *d *= df(xi, yi);
            }
            vec![Some(dx)]
        })
    }

    fn check_same(&self, a: Var, b: Var, op: &str) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "{op}: shape mismatch {:?} vs {:?}",
            self.shape(a),
            self.shape(b)
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "add");
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.custom(&[a, b], out, |g| vec![Some(g.clone()), Some(g.clone())])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "sub");
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.custom(&[a, b], out, |g| vec![Some(g.clone()), Some(g.scale(-1.0))])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "mul");
        let (av, bv) = (self.value_arc(a), self.value_arc(b));
        let out = av.zip_map(&bv, |x, y| x * y);
        self.custom(&[a, b], out, move |g| {
            vec![
                Some(g.zip_map(&bv, |gi, y| gi * y)),
                Some(g.zip_map(&av, |gi, x| gi * x)),
            ]
        })
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "div");
        let (av, bv) = (self.value_arc(a), self.value_arc(b));
        let out = av.zip_map(&bv, |x, y| x / y);
        self.custom(&[a, b], out, move |g| {
            let da = g.zip_map(&bv, |gi, y| gi / y);
            let mut db = g.clone();
            for ((d, &x), &y) in db.data_mut().iter_mut().zip(av.data()).zip(bv.data()) {
                *d *= -x / (y * y);
            }
            vec![Some(da), Some(db)]
        })
    }

    /// Sum of several equally shaped nodes.
    pub fn add_n(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "add_n of nothing");
        let mut out = self.value(xs[0]).clone();
        for &x in &xs[1..] {
            self.check_same(xs[0], x, "add_n");
            out.add_assign(self.value(x));
        }
        let n = xs.len();
        self.custom(xs, out, move |g| (0..n).map(|_| Some(g.clone())).collect())
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).scale(s);
        self.custom(&[x], out, move |g| vec![Some(g.scale(s))])
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v + s);
        self.custom(&[x], out, |g| vec![Some(g.clone())])
    }

    /// Elementwise product with a constant tensor (e.g. a mask).
    pub fn mul_const(&mut self, x: Var, c: &Tensor) -> Var {
        assert_eq!(self.shape(x), c.shape(), "mul_const: shape mismatch");
        let c = Arc::new(c.clone());
        let out = self.value(x).zip_map(&c, |a, b| a * b);
        self.custom(&[x], out, move |g| vec![Some(g.zip_map(&c, |gi, ci| gi * ci))])
    }

    pub fn add_const(&mut self, x: Var, c: &Tensor) -> Var {
        assert_eq!(self.shape(x), c.shape(), "add_const: shape mismatch");
        let out = self.value(x).zip_map(c, |a, b| a + b);
        self.custom(&[x], out, |g| vec![Some(g.clone())])
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, |x, _| 2.0 * x)
    }

    /// Subgradient 0 at the origin.
    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn recip(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / v, |_, y| -y * y)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn elu(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| if v > 0.0 { v } else { v.exp_m1() },
            |x, y| if x > 0.0 { 1.0 } else { y + 1.0 },
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, |_, y| y * (1.0 - y))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "minimum");
        let (av, bv) = (self.value_arc(a), self.value_arc(b));
        let out = av.zip_map(&bv, f64::min);
        self.custom(&[a, b], out, move |g| {
            let mut da = g.clone();
            let mut db = g.clone();
            for i in 0..g.numel() {
                if av.data()[i] <= bv.data()[i] {
                    db.data_mut()[i] = 0.0;
                } else {
                    da.data_mut()[i] = 0.0;
                }
            }
            vec![Some(da), Some(db)]
        })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let old = self.shape(x).to_vec();
        let out = self.value(x).reshape(shape);
        self.custom(&[x], out, move |g| vec![Some(g.reshape(&old))])
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
