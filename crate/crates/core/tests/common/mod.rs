#![allow(dead_code)]

use astro_float::{BigFloat, Consts, Radix, RoundingMode};

pub const PREC: usize = 256;
pub const RM: RoundingMode = RoundingMode::ToEven;

pub struct Oracle {
    cc: Consts,
}

impl Oracle {
    pub fn new() -> Self {
        Oracle {
            cc: Consts::new().expect("constants cache"),
        }
    }

    pub fn big(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, PREC)
    }

    pub fn to_f64(&mut self, x: &BigFloat) -> f64 {
        let s = x.format(Radix::Dec, RM, &mut self.cc).expect("format");
        s.parse::<f64>().unwrap_or_else(|_| panic!("unparsable {s}"))
    }

    pub fn ln(&mut self, x: &BigFloat) -> BigFloat {
        x.ln(PREC, RM, &mut self.cc)
    }

    /// `(b - a)/(ln b - ln a)` in extended precision.
    pub fn logmean(&mut self, a: f64, b: f64) -> f64 {
        if a == b {
            return a;
        }
        let (ba, bb) = (self.big(a), self.big(b));
        let num = bb.sub(&ba, PREC, RM);
        let den = self.ln(&bb).sub(&self.ln(&ba), PREC, RM);
        let r = num.div(&den, PREC, RM);
        self.to_f64(&r)
    }
}
