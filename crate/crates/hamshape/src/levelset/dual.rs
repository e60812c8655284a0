//! Second-order dual numbers over (x1, x2): one evaluation of an expression on
//! [`Dual2`] yields its value, gradient, and Hessian exactly (up to rounding),
//! which is what the analytic level-set backend hands to the tracer and the
//! derivative formulas.

/// Value, first derivatives, and second derivatives at a point.
#[derive(Clone, Copy, Debug, Default)]
pub struct Dual2 {
    pub v: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dxy: f64,
    pub dyy: f64,
}

impl Dual2 {
    pub fn constant(v: f64) -> Dual2 {
        Dual2 { v, ..Default::default() }
    }

    pub fn var_x(v: f64) -> Dual2 {
        Dual2 { v, dx: 1.0, ..Default::default() }
    }

    pub fn var_y(v: f64) -> Dual2 {
        Dual2 { v, dy: 1.0, ..Default::default() }
    }

    pub fn add(a: Dual2, b: Dual2) -> Dual2 {
        Dual2 {
            v: a.v + b.v,
            dx: a.dx + b.dx,
            dy: a.dy + b.dy,
            dxx: a.dxx + b.dxx,
            dxy: a.dxy + b.dxy,
            dyy: a.dyy + b.dyy,
        }
    }

    pub fn sub(a: Dual2, b: Dual2) -> Dual2 {
        Dual2 {
            v: a.v - b.v,
            dx: a.dx - b.dx,
            dy: a.dy - b.dy,
            dxx: a.dxx - b.dxx,
            dxy: a.dxy - b.dxy,
            dyy: a.dyy - b.dyy,
        }
    }

    pub fn neg(a: Dual2) -> Dual2 {
        Dual2 { v: -a.v, dx: -a.dx, dy: -a.dy, dxx: -a.dxx, dxy: -a.dxy, dyy: -a.dyy }
    }

    pub fn mul(a: Dual2, b: Dual2) -> Dual2 {
        Dual2 {
            v: a.v * b.v,
            dx: a.dx * b.v + a.v * b.dx,
            dy: a.dy * b.v + a.v * b.dy,
            dxx: a.dxx * b.v + 2.0 * a.dx * b.dx + a.v * b.dxx,
            dxy: a.dxy * b.v + a.dx * b.dy + a.dy * b.dx + a.v * b.dxy,
            dyy: a.dyy * b.v + 2.0 * a.dy * b.dy + a.v * b.dyy,
        }
    }

    pub fn recip(b: Dual2) -> Dual2 {
        let u = b.v;
        let u2 = u * u;
        let u3 = u2 * u;
        Dual2 {
            v: 1.0 / u,
            dx: -b.dx / u2,
            dy: -b.dy / u2,
            dxx: 2.0 * b.dx * b.dx / u3 - b.dxx / u2,
            dxy: 2.0 * b.dx * b.dy / u3 - b.dxy / u2,
            dyy: 2.0 * b.dy * b.dy / u3 - b.dyy / u2,
        }
    }

    pub fn div(a: Dual2, b: Dual2) -> Dual2 {
        Dual2::mul(a, Dual2::recip(b))
    }

    /// `a` raised to the constant exponent `c`.
    pub fn powc(a: Dual2, c: f64) -> Dual2 {
        if c == 0.0 {
            return Dual2::constant(1.0);
        }
        if c == 1.0 {
            return a;
        }
        let u = a.v;
        let f = u.powf(c);
        let f1 = c * u.powf(c - 1.0);
        let f2 = c * (c - 1.0) * u.powf(c - 2.0);
        Dual2 {
            v: f,
            dx: f1 * a.dx,
            dy: f1 * a.dy,
            dxx: f2 * a.dx * a.dx + f1 * a.dxx,
            dxy: f2 * a.dx * a.dy + f1 * a.dxy,
            dyy: f2 * a.dy * a.dy + f1 * a.dyy,
        }
    }

    pub fn exp(a: Dual2) -> Dual2 {
        let e = a.v.exp();
        Dual2 {
            v: e,
            dx: e * a.dx,
            dy: e * a.dy,
            dxx: e * (a.dx * a.dx + a.dxx),
            dxy: e * (a.dx * a.dy + a.dxy),
            dyy: e * (a.dy * a.dy + a.dyy),
        }
    }

    pub fn ln(a: Dual2) -> Dual2 {
        let u = a.v;
        Dual2 {
            v: u.ln(),
            dx: a.dx / u,
            dy: a.dy / u,
            dxx: a.dxx / u - a.dx * a.dx / (u * u),
            dxy: a.dxy / u - a.dx * a.dy / (u * u),
            dyy: a.dyy / u - a.dy * a.dy / (u * u),
        }
    }

    /// General power; requires a positive base unless the exponent is constant
    /// (use [`Dual2::powc`] for that case).
    pub fn pow(a: Dual2, b: Dual2) -> Dual2 {
        Dual2::exp(Dual2::mul(b, Dual2::ln(a)))
    }

    /// Smaller-valued branch; ties take the first argument, so derivatives come
    /// from the active branch.
    pub fn min(a: Dual2, b: Dual2) -> Dual2 {
        if a.v <= b.v {
            a
        } else {
            b
        }
    }

    /// Larger-valued branch; ties take the first argument.
    pub fn max(a: Dual2, b: Dual2) -> Dual2 {
        if a.v >= b.v {
            a
        } else {
            b
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Evaluates f(x, y) = (x² + x y - 2) / (y² + 3) on duals and compares all
    /// six slots against hand-derived values at a generic point.
    #[test]
    fn rational_function_derivatives() {
        let (x, y) = (0.7, -1.3);
        let xd = Dual2::var_x(x);
        let yd = Dual2::var_y(y);
        let num = Dual2::sub(
            Dual2::add(Dual2::mul(xd, xd), Dual2::mul(xd, yd)),
            Dual2::constant(2.0),
        );
        let den = Dual2::add(Dual2::mul(yd, yd), Dual2::constant(3.0));
        let f = Dual2::div(num, den);

        let h = 1e-5;
        let eval = |x: f64, y: f64| (x * x + x * y - 2.0) / (y * y + 3.0);
        let fd_x = (eval(x + h, y) - eval(x - h, y)) / (2.0 * h);
        let fd_y = (eval(x, y + h) - eval(x, y - h)) / (2.0 * h);
        let fd_xx = (eval(x + h, y) - 2.0 * eval(x, y) + eval(x - h, y)) / (h * h);
        let fd_yy = (eval(x, y + h) - 2.0 * eval(x, y) + eval(x, y - h)) / (h * h);
        let fd_xy = (eval(x + h, y + h) - eval(x + h, y - h) - eval(x - h, y + h)
            + eval(x - h, y - h))
            / (4.0 * h * h);

        assert!((f.v - eval(x, y)).abs() < 1e-14);
        assert!((f.dx - fd_x).abs() < 1e-8);
        assert!((f.dy - fd_y).abs() < 1e-8);
        assert!((f.dxx - fd_xx).abs() < 1e-5);
        assert!((f.dxy - fd_xy).abs() < 1e-5);
        assert!((f.dyy - fd_yy).abs() < 1e-5);
    }

    #[test]
    fn constant_power_matches_monomial() {
        let x = Dual2::var_x(1.5);
        let p = Dual2::powc(x, 3.0);
        assert!((p.v - 3.375).abs() < 1e-14);
        assert!((p.dx - 6.75).abs() < 1e-14);
        assert!((p.dxx - 9.0).abs() < 1e-14);
        // Negative base with an integer exponent stays finite.
        let q = Dual2::powc(Dual2::var_x(-1.5), 2.0);
        assert!((q.v - 2.25).abs() < 1e-14);
        assert!((q.dx + 3.0).abs() < 1e-14);
        assert!((q.dxx - 2.0).abs() < 1e-14);
    }

    #[test]
    fn min_max_take_the_active_branch_and_first_on_ties() {
        let a = Dual2 { v: 1.0, dx: 2.0, ..Default::default() };
        let b = Dual2 { v: 1.0, dx: -5.0, ..Default::default() };
        assert_eq!(Dual2::max(a, b).dx, 2.0);
        assert_eq!(Dual2::min(a, b).dx, 2.0);
        let c = Dual2 { v: 0.5, dx: 9.0, ..Default::default() };
        assert_eq!(Dual2::max(a, c).dx, 2.0);
        assert_eq!(Dual2::min(a, c).dx, 9.0);
    }
}
