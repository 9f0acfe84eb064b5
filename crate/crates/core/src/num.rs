//! Probability values: exact rationals by default, floats as an opt-in.
//!
//! Arithmetic stays exact as long as both operands are rational; any
//! operation touching a float contaminates the result, so exact comparisons
//! degrade to tolerance comparisons only where a model genuinely introduces
//! irrational quantities (MLN weights given as raw reals).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::ser::Serializer;
use serde::Serialize;
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

/// Default comparison tolerance for float-mode probabilities.
pub const FLOAT_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub enum Num {
    Rat(BigRational),
    Float(f64),
}

impl Num {
    pub fn zero() -> Self {
        Num::Rat(BigRational::zero())
    }

    pub fn one() -> Self {
        Num::Rat(BigRational::one())
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Num::Rat(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_rational(r: BigRational) -> Self {
        Num::Rat(r)
    }

    pub fn float(x: f64) -> Self {
        Num::Float(x)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Num::Rat(_))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Num::Rat(r) => r.is_zero(),
            Num::Float(x) => *x == 0.0,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Num::Rat(r) => r.to_f64().unwrap_or(f64::NAN),
            Num::Float(x) => *x,
        }
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Num::Rat(r) => Some(r),
            Num::Float(_) => None,
        }
    }

    /// Exact equality when both sides are rational, tolerance otherwise.
    pub fn approx_eq(&self, other: &Num, tol: f64) -> bool {
        match (self, other) {
            (Num::Rat(a), Num::Rat(b)) => a == b,
            _ => (self.to_f64() - other.to_f64()).abs() <= tol,
        }
    }

    pub fn abs_diff(&self, other: &Num) -> Num {
        match (self, other) {
            (Num::Rat(a), Num::Rat(b)) => Num::Rat((a - b).abs()),
            _ => Num::Float((self.to_f64() - other.to_f64()).abs()),
        }
    }

    /// Parse "1/2", "0.25" or "3" into an exact rational; bare floats that
    /// are not finite decimals are rejected.
    pub fn parse_exact(s: &str) -> Option<Num> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                return None;
            }
            return Some(Num::Rat(BigRational::new(n, d)));
        }
        if let Some((int, frac)) = s.split_once('.') {
            let int = if int.is_empty() { "0" } else { int };
            let num: BigInt = format!("{int}{frac}").parse().ok()?;
            let den = BigInt::from(10u32).pow(frac.len() as u32);
            return Some(Num::Rat(BigRational::new(num, den)));
        }
        let n: BigInt = s.parse().ok()?;
        Some(Num::Rat(BigRational::from(n)))
    }

    pub fn pow(&self, exp: usize) -> Num {
        match self {
            Num::Rat(r) => {
                let mut acc = BigRational::one();
                for _ in 0..exp {
                    acc *= r;
                }
                Num::Rat(acc)
            }
            Num::Float(x) => Num::Float(x.powi(exp as i32)),
        }
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num::Rat(r) => write!(f, "{r}"),
            Num::Float(x) => write!(f, "{x}"),
        }
    }
}

impl<'de> serde::Deserialize<'de> for Num {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = Num;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "a probability as \"num/den\", decimal string, or number")
            }
            fn visit_str<E: serde::de::Error>(self, s: &str) -> Result<Num, E> {
                Num::parse_exact(s).ok_or_else(|| E::custom(format!("invalid rational `{s}`")))
            }
            fn visit_f64<E: serde::de::Error>(self, x: f64) -> Result<Num, E> {
                Ok(Num::Float(x))
            }
            fn visit_u64<E: serde::de::Error>(self, x: u64) -> Result<Num, E> {
                Ok(Num::Rat(BigRational::from_integer(x.into())))
            }
            fn visit_i64<E: serde::de::Error>(self, x: i64) -> Result<Num, E> {
                Ok(Num::Rat(BigRational::from_integer(x.into())))
            }
        }
        d.deserialize_any(V)
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Num::Rat(r) => s.serialize_str(&format!("{}/{}", r.numer(), r.denom())),
            Num::Float(x) => s.serialize_f64(*x),
        }
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait for &Num {
            type Output = Num;
            fn $method(self, rhs: &Num) -> Num {
                match (self, rhs) {
                    (Num::Rat(a), Num::Rat(b)) => Num::Rat(a $op b),
                    _ => Num::Float(self.to_f64() $op rhs.to_f64()),
                }
            }
        }
        impl $trait for Num {
            type Output = Num;
            fn $method(self, rhs: Num) -> Num {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Num> for Num {
            type Output = Num;
            fn $method(self, rhs: &Num) -> Num {
                (&self).$method(rhs)
            }
        }
        impl $trait<Num> for &Num {
            type Output = Num;
            fn $method(self, rhs: Num) -> Num {
                self.$method(&rhs)
            }
        }
    };
}

impl PartialEq for Num {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Num::Rat(a), Num::Rat(b)) => a == b,
            _ => self.to_f64() == other.to_f64(),
        }
    }
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);
binop!(Div, div, /);
