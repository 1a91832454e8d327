//! Exact polynomial and rational-function arithmetic over a field.
//!
//! Used by the identity verifier, which needs two towers:
//! `Poly<Rational>` / `Rf<Rational>` for expressions in one symbol, and
//! `Poly<Rf<Rational>>` for polynomials whose coefficients are rational
//! functions of another symbol (partial fractions in `v` with coefficients
//! in the field of rational functions of `t`).

use rug::Rational;

/// Minimal field interface: exact arithmetic with decidable zero test.
pub trait Field: Clone + PartialEq + std::fmt::Debug + Send + Sync {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Multiplicative inverse; `None` for zero.
    fn inv(&self) -> Option<Self>;
    fn is_zero(&self) -> bool;
}

impl Field for Rational {
    fn zero() -> Self {
        Rational::new()
    }
    fn one() -> Self {
        Rational::from(1)
    }
    fn from_i64(v: i64) -> Self {
        Rational::from(v)
    }
    fn add(&self, o: &Self) -> Self {
        Rational::from(self + o)
    }
    fn sub(&self, o: &Self) -> Self {
        Rational::from(self - o)
    }
    fn mul(&self, o: &Self) -> Self {
        Rational::from(self * o)
    }
    fn neg(&self) -> Self {
        Rational::from(-self)
    }
    fn inv(&self) -> Option<Self> {
        if self.cmp0() == std::cmp::Ordering::Equal {
            None
        } else {
            Some(Rational::from(self.recip_ref()))
        }
    }
    fn is_zero(&self) -> bool {
        self.cmp0() == std::cmp::Ordering::Equal
    }
}

/// Dense univariate polynomial, ascending coefficients, trailing zeros
/// trimmed (so the zero polynomial has an empty coefficient vector).
#[derive(Clone, Debug, PartialEq)]
pub struct Poly<F: Field> {
    coeffs: Vec<F>,
}

impl<F: Field> Poly<F> {
    pub fn new(mut coeffs: Vec<F>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![] }
    }

    pub fn one() -> Self {
        Poly::constant(F::one())
    }

    pub fn constant(c: F) -> Self {
        Poly::new(vec![c])
    }

    /// The monomial `x`.
    pub fn x() -> Self {
        Poly::new(vec![F::zero(), F::one()])
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, or `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeff(&self, i: usize) -> F {
        self.coeffs.get(i).cloned().unwrap_or_else(F::zero)
    }

    pub fn coeffs(&self) -> &[F] {
        &self.coeffs
    }

    pub fn leading(&self) -> Option<&F> {
        self.coeffs.last()
    }

    pub fn add(&self, o: &Self) -> Self {
        let n = self.coeffs.len().max(o.coeffs.len());
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push(self.coeff(i).add(&o.coeff(i)));
        }
        Poly::new(out)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Self {
        Poly::new(self.coeffs.iter().map(|c| c.neg()).collect())
    }

    pub fn scale(&self, c: &F) -> Self {
        Poly::new(self.coeffs.iter().map(|a| a.mul(c)).collect())
    }

    pub fn mul(&self, o: &Self) -> Self {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![F::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].add(&a.mul(b));
            }
        }
        Poly::new(out)
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Poly::one();
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    /// Euclidean division: `self = q * d + r` with `deg r < deg d`.
    pub fn divrem(&self, d: &Self) -> (Self, Self) {
        assert!(!d.is_zero(), "division by the zero polynomial");
        let dlead = d.leading().unwrap().clone();
        let dinv = dlead.inv().expect("leading coefficient invertible");
        let dd = d.degree().unwrap();
        let mut r = self.clone();
        let mut q = vec![F::zero(); self.coeffs.len().saturating_sub(dd)];
        while !r.is_zero() && r.degree().unwrap() >= dd {
            let rd = r.degree().unwrap();
            let c = r.leading().unwrap().mul(&dinv);
            let shift = rd - dd;
            // r -= c * x^shift * d
            let mut sub = vec![F::zero(); shift];
            sub.extend(d.coeffs.iter().map(|a| a.mul(&c)));
            r = r.sub(&Poly::new(sub));
            if r.degree().is_some_and(|nd| nd >= rd) && !r.is_zero() {
                // Exact arithmetic always reduces the degree; guard anyway.
                panic!("division failed to reduce degree");
            }
            q[shift] = c;
        }
        (Poly::new(q), r)
    }

    /// Monic greatest common divisor.
    pub fn gcd(&self, o: &Self) -> Self {
        let mut a = self.clone();
        let mut b = o.clone();
        while !b.is_zero() {
            let (_, r) = a.divrem(&b);
            a = b;
            b = r;
        }
        if let Some(lead) = a.leading() {
            let inv = lead.inv().expect("leading coefficient invertible");
            a = a.scale(&inv);
        }
        a
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        let mut out = Vec::with_capacity(self.coeffs.len() - 1);
        for (i, c) in self.coeffs.iter().enumerate().skip(1) {
            out.push(c.mul(&F::from_i64(i as i64)));
        }
        Poly::new(out)
    }

    pub fn eval(&self, x: &F) -> F {
        let mut acc = F::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(x).add(c);
        }
        acc
    }

    /// Taylor shift: the polynomial `p(x + c)`.
    pub fn shift(&self, c: &F) -> Self {
        // Horner in (x + c): acc <- acc * (x + c) + a_i from the top.
        let linear = Poly::new(vec![c.clone(), F::one()]);
        let mut acc = Poly::zero();
        for a in self.coeffs.iter().rev() {
            acc = acc.mul(&linear).add(&Poly::constant(a.clone()));
        }
        acc
    }
}

/// Reduced rational function `num/den` with monic denominator.
#[derive(Clone, Debug)]
pub struct Rf<F: Field> {
    num: Poly<F>,
    den: Poly<F>,
}

impl<F: Field> Rf<F> {
    pub fn new(num: Poly<F>, den: Poly<F>) -> Self {
        assert!(!den.is_zero(), "zero denominator");
        let mut rf = Rf { num, den };
        rf.reduce();
        rf
    }

    pub fn from_poly(p: Poly<F>) -> Self {
        Rf {
            num: p,
            den: Poly::one(),
        }
    }

    pub fn constant(c: F) -> Self {
        Rf::from_poly(Poly::constant(c))
    }

    pub fn zero() -> Self {
        Rf::from_poly(Poly::zero())
    }

    pub fn one() -> Self {
        Rf::from_poly(Poly::one())
    }

    pub fn num(&self) -> &Poly<F> {
        &self.num
    }

    pub fn den(&self) -> &Poly<F> {
        &self.den
    }

    fn reduce(&mut self) {
        if self.num.is_zero() {
            self.den = Poly::one();
            return;
        }
        let g = self.num.gcd(&self.den);
        if g.degree().unwrap_or(0) > 0 {
            self.num = self.num.divrem(&g).0;
            self.den = self.den.divrem(&g).0;
        }
        let lead_inv = self
            .den
            .leading()
            .unwrap()
            .inv()
            .expect("leading coefficient invertible");
        self.num = self.num.scale(&lead_inv);
        self.den = self.den.scale(&lead_inv);
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn add(&self, o: &Self) -> Self {
        Rf::new(
            self.num.mul(&o.den).add(&o.num.mul(&self.den)),
            self.den.mul(&o.den),
        )
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Self {
        Rf {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        Rf::new(self.num.mul(&o.num), self.den.mul(&o.den))
    }

    pub fn div(&self, o: &Self) -> Self {
        assert!(!o.is_zero(), "division by zero rational function");
        Rf::new(self.num.mul(&o.den), self.den.mul(&o.num))
    }

    pub fn inv(&self) -> Option<Self> {
        if self.is_zero() {
            None
        } else {
            Some(Rf::new(self.den.clone(), self.num.clone()))
        }
    }

    pub fn pow(&self, e: u32) -> Self {
        Rf {
            num: self.num.pow(e),
            den: self.den.pow(e),
        }
    }

    /// Quotient-rule derivative.
    pub fn derivative(&self) -> Self {
        let num = self
            .num
            .derivative()
            .mul(&self.den)
            .sub(&self.num.mul(&self.den.derivative()));
        Rf::new(num, self.den.mul(&self.den))
    }

    /// `None` if `x` is a pole.
    pub fn eval(&self, x: &F) -> Option<F> {
        let d = self.den.eval(x);
        d.inv().map(|di| self.num.eval(x).mul(&di))
    }

    /// The polynomial itself when the denominator is 1.
    pub fn as_poly(&self) -> Option<&Poly<F>> {
        if self.den.degree() == Some(0) && self.den.coeff(0) == F::one() {
            Some(&self.num)
        } else {
            None
        }
    }
}

impl<F: Field> PartialEq for Rf<F> {
    fn eq(&self, other: &Self) -> bool {
        // both reduced with monic denominators
        self.num == other.num && self.den == other.den
    }
}

/// Rational functions over a field form a field.
impl<F: Field> Field for Rf<F> {
    fn zero() -> Self {
        Rf::zero()
    }
    fn one() -> Self {
        Rf::one()
    }
    fn from_i64(v: i64) -> Self {
        Rf::constant(F::from_i64(v))
    }
    fn add(&self, o: &Self) -> Self {
        Rf::add(self, o)
    }
    fn sub(&self, o: &Self) -> Self {
        Rf::sub(self, o)
    }
    fn mul(&self, o: &Self) -> Self {
        Rf::mul(self, o)
    }
    fn neg(&self) -> Self {
        Rf::neg(self)
    }
    fn inv(&self) -> Option<Self> {
        Rf::inv(self)
    }
    fn is_zero(&self) -> bool {
        Rf::is_zero(self)
    }
}
