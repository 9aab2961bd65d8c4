//! Double-double scalar (about 32 significant digits) for finite-difference
//! oracles whose f64 noise floor, ulp(L)/2h, is too coarse.
//!
//! Arithmetic, `sqrt`, `exp`, `ln` and their base-2 forms are full
//! precision. The trigonometric and hyperbolic members of `Float` only
//! round through `f64`; nothing under test calls them.

use num_traits::{Float, FromPrimitive, Num, NumCast, One, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::fmt;
use std::num::FpCategory;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, Sub, SubAssign};
use tsee::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const fn new(hi: f64) -> Self {
        Dd { hi, lo: 0.0 }
    }

    fn norm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    fn ldexp(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    fn expm1_small(r: Dd) -> Dd {
        // Taylor series; |r| <= ln2/1024 so 12 terms reach 2^-104
        let mut term = r;
        let mut sum = r;
        for k in 2..=14 {
            term = term * r / Dd::new(k as f64);
            sum += term;
            if term.hi.abs() < 1e-33 {
                break;
            }
        }
        sum
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, b.hi);
        let (t1, t2) = two_sum(self.lo, b.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        Dd::norm(s1, s2 + t2)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p1, p2) = two_prod(self.hi, b.hi);
        Dd::norm(p1, p2 + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        if !q1.is_finite() || q1 == 0.0 {
            return Dd::new(q1);
        }
        let r = self - b * Dd::new(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::new(q2);
        let q3 = r.hi / b.hi;
        Dd::norm(q1, q2) + Dd::new(q3)
    }
}

impl Rem for Dd {
    type Output = Dd;
    fn rem(self, b: Dd) -> Dd {
        self - (self / b).trunc() * b
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

macro_rules! assign_ops {
    ($($tr:ident $m:ident $op:tt),*) => {$(
        impl $tr for Dd {
            fn $m(&mut self, b: Dd) {
                *self = *self $op b;
            }
        }
    )*};
}
assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /);

impl PartialOrd for Dd {
    fn partial_cmp(&self, b: &Dd) -> Option<Ordering> {
        match self.hi.partial_cmp(&b.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&b.lo),
            o => Some(o),
        }
    }
}

impl std::iter::Sum for Dd {
    fn sum<I: Iterator<Item = Dd>>(it: I) -> Dd {
        it.fold(Dd::new(0.0), |a, b| a + b)
    }
}

impl fmt::Display for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.hi, f)
    }
}

impl Zero for Dd {
    fn zero() -> Dd {
        Dd::new(0.0)
    }
    fn is_zero(&self) -> bool {
        self.hi == 0.0
    }
}

impl One for Dd {
    fn one() -> Dd {
        Dd::new(1.0)
    }
}

impl Num for Dd {
    type FromStrRadixErr = num_traits::ParseFloatError;
    fn from_str_radix(s: &str, radix: u32) -> Result<Dd, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Dd::new)
    }
}

impl ToPrimitive for Dd {
    fn to_i64(&self) -> Option<i64> {
        let t = self.trunc();
        Some(t.hi.to_i64()? + t.lo.to_i64()?)
    }
    fn to_u64(&self) -> Option<u64> {
        u64::try_from(self.to_i128()?).ok()
    }
    fn to_i128(&self) -> Option<i128> {
        let t = self.trunc();
        Some(t.hi.to_i128()? + t.lo.to_i128()?)
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.hi + self.lo)
    }
}

impl FromPrimitive for Dd {
    fn from_i64(n: i64) -> Option<Dd> {
        let hi = n as f64;
        Some(Dd::norm(hi, (n as i128 - hi as i128) as f64))
    }
    fn from_u64(n: u64) -> Option<Dd> {
        let hi = n as f64;
        Some(Dd::norm(hi, (n as i128 - hi as i128) as f64))
    }
    fn from_f64(x: f64) -> Option<Dd> {
        Some(Dd::new(x))
    }
}

impl NumCast for Dd {
    fn from<T: ToPrimitive>(n: T) -> Option<Dd> {
        n.to_f64().map(Dd::new)
    }
}

macro_rules! via_f64 {
    ($($m:ident),*) => {$(
        fn $m(self) -> Dd {
            Dd::new(self.hi.$m())
        }
    )*};
}

impl Float for Dd {
    fn nan() -> Dd {
        Dd::new(f64::NAN)
    }
    fn infinity() -> Dd {
        Dd::new(f64::INFINITY)
    }
    fn neg_infinity() -> Dd {
        Dd::new(f64::NEG_INFINITY)
    }
    fn neg_zero() -> Dd {
        Dd::new(-0.0)
    }
    fn min_value() -> Dd {
        Dd::new(f64::MIN)
    }
    fn min_positive_value() -> Dd {
        Dd::new(f64::MIN_POSITIVE)
    }
    fn epsilon() -> Dd {
        Dd::new(2f64.powi(-104))
    }
    fn max_value() -> Dd {
        Dd::new(f64::MAX)
    }
    fn is_nan(self) -> bool {
        self.hi.is_nan()
    }
    fn is_infinite(self) -> bool {
        self.hi.is_infinite()
    }
    fn is_finite(self) -> bool {
        self.hi.is_finite()
    }
    fn is_normal(self) -> bool {
        self.hi.is_normal()
    }
    fn classify(self) -> FpCategory {
        self.hi.classify()
    }
    fn floor(self) -> Dd {
        let hi = self.hi.floor();
        if hi == self.hi {
            Dd::norm(hi, self.lo.floor())
        } else {
            Dd::new(hi)
        }
    }
    fn ceil(self) -> Dd {
        let hi = self.hi.ceil();
        if hi == self.hi {
            Dd::norm(hi, self.lo.ceil())
        } else {
            Dd::new(hi)
        }
    }
    fn round(self) -> Dd {
        (self + Dd::new(0.5)).floor()
    }
    fn trunc(self) -> Dd {
        if self.hi >= 0.0 {
            self.floor()
        } else {
            self.ceil()
        }
    }
    fn fract(self) -> Dd {
        self - self.trunc()
    }
    fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }
    fn signum(self) -> Dd {
        Dd::new(self.hi.signum())
    }
    fn is_sign_positive(self) -> bool {
        self.hi.is_sign_positive()
    }
    fn is_sign_negative(self) -> bool {
        self.hi.is_sign_negative()
    }
    fn mul_add(self, a: Dd, b: Dd) -> Dd {
        self * a + b
    }
    fn recip(self) -> Dd {
        Dd::new(1.0) / self
    }
    fn powi(self, n: i32) -> Dd {
        let mut base = self;
        let mut e = n.unsigned_abs();
        let mut acc = Dd::new(1.0);
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base *= base;
            e >>= 1;
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }
    fn powf(self, n: Dd) -> Dd {
        (n * self.ln()).exp()
    }
    fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::new(self.hi.sqrt());
        }
        let x = 1.0 / self.hi.sqrt();
        let ax = Dd::new(self.hi * x);
        ax + Dd::new((self - ax * ax).hi * x * 0.5)
    }
    fn exp(self) -> Dd {
        if self.hi > 709.0 {
            return Dd::infinity();
        }
        if self.hi < -745.0 {
            return Dd::zero();
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Dd::new(k)).ldexp(-10);
        // expm1 squared back up: e^{2r} - 1 = s (s + 2)
        let mut s = Dd::expm1_small(r);
        for _ in 0..10 {
            s = s * (s + Dd::new(2.0));
        }
        (s + Dd::new(1.0)).ldexp(k as i32)
    }
    fn exp2(self) -> Dd {
        (self * LN2).exp()
    }
    fn ln(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::new(self.hi.ln());
        }
        if self.hi.is_infinite() {
            return self;
        }
        // two Newton steps on exp(x) = a from the f64 logarithm
        let mut x = Dd::new(self.hi.ln());
        for _ in 0..2 {
            x = x + self * (-x).exp() - Dd::new(1.0);
        }
        x
    }
    fn log(self, base: Dd) -> Dd {
        self.ln() / base.ln()
    }
    fn log2(self) -> Dd {
        self.ln() / LN2
    }
    fn log10(self) -> Dd {
        self.ln() / Dd::new(10.0).ln()
    }
    fn max(self, b: Dd) -> Dd {
        if self.is_nan() || b > self {
            b
        } else {
            self
        }
    }
    fn min(self, b: Dd) -> Dd {
        if self.is_nan() || b < self {
            b
        } else {
            self
        }
    }
    fn abs_sub(self, b: Dd) -> Dd {
        (self - b).max(Dd::zero())
    }
    fn hypot(self, b: Dd) -> Dd {
        (self * self + b * b).sqrt()
    }
    fn exp_m1(self) -> Dd {
        self.exp() - Dd::new(1.0)
    }
    fn ln_1p(self) -> Dd {
        (self + Dd::new(1.0)).ln()
    }
    fn atan2(self, b: Dd) -> Dd {
        Dd::new(self.hi.atan2(b.hi))
    }
    fn sin_cos(self) -> (Dd, Dd) {
        (self.sin(), self.cos())
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        self.hi.integer_decode()
    }
    via_f64!(cbrt, sin, cos, tan, asin, acos, atan, sinh, cosh, tanh, asinh, acosh, atanh);
}

impl Real for Dd {
    const NAME: &'static str = "dd";

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Dd,
        a: &[Dd],
        (rsa, csa): (isize, isize),
        b: &[Dd],
        (rsb, csb): (isize, isize),
        beta: Dd,
        c: &mut [Dd],
        (rsc, csc): (isize, isize),
    ) {
        let at = |s: &[Dd], r: usize, c: usize, rs: isize, cs: isize| s[r * rs as usize + c * cs as usize];
        for i in 0..m {
            for j in 0..n {
                let mut acc = Dd::zero();
                for l in 0..k {
                    acc += at(a, i, l, rsa, csa) * at(b, l, j, rsb, csb);
                }
                let idx = i * rsc as usize + j * csc as usize;
                c[idx] = if beta.is_zero() { alpha * acc } else { alpha * acc + beta * c[idx] };
            }
        }
    }
}
