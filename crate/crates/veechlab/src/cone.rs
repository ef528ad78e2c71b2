//! Hilbert projective metric on the open positive quadrant, the
//! contraction coefficient of nonnegative matrices, and extraction of
//! the forward-invariant expanding direction by backward cone iteration.

use crate::cocycle::{CocycleMap, Mat2, ScaledProduct};
use crate::subshift::{shift, PointWindow};

#[derive(Debug, thiserror::Error)]
pub enum ConeError {
    #[error("matrix has a zero row or column; no ray survives")]
    Degenerate,
    #[error("ray requires strictly positive coordinates, got ({0}, {1})")]
    NotPositive(f64, f64),
    #[error("base point lies on Y; the unperturbed factors are not strictly positive")]
    OnY,
    #[error("cone factor has a nonpositive entry at backward step {0}")]
    FactorNotPositive(i64),
    #[error("diameter {achieved:.3e} above tolerance after {depth} backward steps")]
    NoConvergence { achieved: f64, depth: i64 },
    #[error(transparent)]
    Cocycle(#[from] crate::cocycle::CocycleError),
    #[error(transparent)]
    Point(#[from] crate::subshift::PointError),
}

pub type Result<T> = std::result::Result<T, ConeError>;

/// A direction [e^t : 1] in the open positive quadrant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub t: f64,
}

impl Ray {
    pub fn from_t(t: f64) -> Ray {
        Ray { t }
    }

    pub fn from_vec(v1: f64, v2: f64) -> Result<Ray> {
        if v1 <= 0.0 || v2 <= 0.0 || !v1.is_finite() || !v2.is_finite() {
            return Err(ConeError::NotPositive(v1, v2));
        }
        Ok(Ray { t: v1.ln() - v2.ln() })
    }

    /// Unit vector representative.
    pub fn unit(&self) -> [f64; 2] {
        // guard against overflow of e^t for extreme rays
        let h = 0.5 * self.t;
        let n = (h.exp().powi(2) + (-h).exp().powi(2)).sqrt();
        [h.exp() / n, (-h).exp() / n]
    }

    pub fn map_by(&self, m: &Mat2) -> Result<Ray> {
        let v = self.unit();
        let w = m.apply(v);
        Ray::from_vec(w[0], w[1])
    }
}

/// d_H([e^t:1], [e^s:1]) = |t - s|.
pub fn hilbert_dist(r1: Ray, r2: Ray) -> f64 {
    (r1.t - r2.t).abs()
}

/// Diameter of the image cone of an entrywise-nonnegative matrix:
/// |log(ad/bc)|, infinite when an off-product vanishes, error when a
/// row or column is zero.
pub fn cone_diameter(m: &Mat2) -> Result<f64> {
    if m.a < 0.0 || m.b < 0.0 || m.c < 0.0 || m.d < 0.0 {
        return Err(ConeError::NotPositive(m.a.min(m.b), m.c.min(m.d)));
    }
    let row0 = m.a.max(m.b);
    let row1 = m.c.max(m.d);
    let col0 = m.a.max(m.c);
    let col1 = m.b.max(m.d);
    if row0 == 0.0 || row1 == 0.0 || col0 == 0.0 || col1 == 0.0 {
        return Err(ConeError::Degenerate);
    }
    let ad = m.a * m.d;
    let bc = m.b * m.c;
    if ad == 0.0 || bc == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((ad.ln() - bc.ln()).abs())
}

/// Birkhoff contraction coefficient tanh(D/4); 1 for infinite diameter.
pub fn contraction_coeff(m: &Mat2) -> Result<f64> {
    let d = cone_diameter(m)?;
    if d.is_infinite() {
        Ok(1.0)
    } else {
        Ok((d / 4.0).tanh())
    }
}

/// Result of the backward cone iteration at a point.
#[derive(Debug, Clone, Copy)]
pub struct InvariantDirection {
    /// Unit positive vector spanning the expanding direction u(x).
    pub u: [f64; 2],
    /// Log-coordinate of the same ray.
    pub ray: Ray,
    /// Expansion log-rate relative to the supplied lambda0:
    /// P(x)u(x) = e^{lambda0 + f} u(Tx).
    pub f: f64,
    pub achieved_diameter: f64,
    pub depth: i64,
}

/// Extract u(x) as the midpoint of the nested cone images
/// P^{(n)}(T^{-n}x)·(positive quadrant), iterating backward until the
/// Hilbert diameter drops below `tol` or `depth_max` is reached (the
/// achieved diameter is always reported; callers decide whether a
/// shallow result is usable). `lambda0` only shifts the reported f.
pub fn invariant_direction(
    p_map: &CocycleMap,
    x: &PointWindow,
    depth_max: i64,
    tol: f64,
    lambda0: f64,
    require_tol: bool,
) -> Result<InvariantDirection> {
    if x.is_on_y() {
        return Err(ConeError::OnY);
    }
    let mut acc = ScaledProduct::identity();
    let mut achieved = f64::INFINITY;
    let mut depth = 0;
    let mut y = x.clone();
    for n in 1..=depth_max {
        y = shift(&y, -p_map.step)?;
        let factor = p_map.value(&y)?;
        if factor.a <= 0.0 || factor.b <= 0.0 || factor.c <= 0.0 || factor.d <= 0.0 {
            return Err(ConeError::FactorNotPositive(n));
        }
        acc.push_back(&factor);
        achieved = cone_diameter(&acc.mat)?;
        depth = n;
        if achieved < tol {
            break;
        }
    }
    if require_tol && achieved >= tol {
        return Err(ConeError::NoConvergence { achieved, depth });
    }
    // image rays of the two coordinate axes are the matrix columns
    let t1 = acc.mat.a.ln() - acc.mat.c.ln();
    let t2 = acc.mat.b.ln() - acc.mat.d.ln();
    let ray = Ray::from_t(0.5 * (t1 + t2));
    let u = ray.unit();
    let pu = p_map.value(x)?.apply(u);
    let f = (pu[0] * pu[0] + pu[1] * pu[1]).sqrt().ln() - lambda0;
    Ok(InvariantDirection { u, ray, f, achieved_diameter: achieved, depth })
}

/// Check the positivity comparison ||P^{(n)}(x)v|| >= theta·||B^{(n)}(x)||·||v||
/// over a fan of nonnegative unit vectors.
pub fn positivity_bound_check(
    p_map: &CocycleMap,
    b_map: &CocycleMap,
    x: &PointWindow,
    theta: f64,
    n: i64,
    v_samples: usize,
    slack: f64,
) -> Result<bool> {
    let p_prod = crate::cocycle::product(p_map, x, n)?;
    let b_log = crate::cocycle::product(b_map, x, n)?.log_norm();
    for j in 0..v_samples {
        let ang = std::f64::consts::FRAC_PI_2 * j as f64 / (v_samples - 1).max(1) as f64;
        let v = [ang.cos(), ang.sin()];
        let (_, log_len) = p_prod.apply_log(v);
        if theta > 0.0 && log_len < theta.ln() + b_log - slack {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn hilbert_examples() {
        let r0 = Ray::from_vec(1.0, 1.0).unwrap();
        let r1 = Ray::from_vec(std::f64::consts::E, 1.0).unwrap();
        assert!((hilbert_dist(r0, r1) - 1.0).abs() < 1e-14);
        // invariance under scaling of representatives
        let r2 = Ray::from_vec(7.3 * std::f64::consts::E, 7.3).unwrap();
        assert!((r1.t - r2.t).abs() < 1e-12);
        assert_eq!(hilbert_dist(r0, r1), hilbert_dist(r1, r0));
        let mut g = rng();
        for _ in 0..100 {
            let t: [f64; 3] = [g.gen_range(-3.0..3.0), g.gen_range(-3.0..3.0), g.gen_range(-3.0..3.0)];
            let (a, b, c) = (Ray::from_t(t[0]), Ray::from_t(t[1]), Ray::from_t(t[2]));
            assert!(hilbert_dist(a, c) <= hilbert_dist(a, b) + hilbert_dist(b, c) + 1e-12);
        }
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(cone_diameter(&Mat2::IDENTITY).unwrap(), f64::INFINITY);
        let m = Mat2::new(2.0, 1.0, 1.0, 1.0);
        assert!((cone_diameter(&m).unwrap() - 2.0f64.ln()).abs() < 1e-14);
        let flat = Mat2::new(1.0, 1.0, 1.0, 1.0);
        assert_eq!(cone_diameter(&flat).unwrap(), 0.0);
        assert!(matches!(
            cone_diameter(&Mat2::new(1.0, 1.0, 0.0, 0.0)),
            Err(ConeError::Degenerate)
        ));
    }

    #[test]
    fn diameter_matches_axis_image_oracle() {
        let mut g = rng();
        for _ in 0..1000 {
            let m = Mat2::new(
                g.gen_range(0.01..5.0),
                g.gen_range(0.01..5.0),
                g.gen_range(0.01..5.0),
                g.gen_range(0.01..5.0),
            );
            let c0 = Ray::from_vec(m.a, m.c).unwrap();
            let c1 = Ray::from_vec(m.b, m.d).unwrap();
            let oracle = hilbert_dist(c0, c1);
            assert!((cone_diameter(&m).unwrap() - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn contraction_inequality_on_random_instances() {
        let mut g = rng();
        for _ in 0..10_000 {
            let m = Mat2::new(
                g.gen_range(0.01..5.0),
                g.gen_range(0.01..5.0),
                g.gen_range(0.01..5.0),
                g.gen_range(0.01..5.0),
            );
            let coeff = contraction_coeff(&m).unwrap();
            let r1 = Ray::from_t(g.gen_range(-4.0..4.0));
            let r2 = Ray::from_t(g.gen_range(-4.0..4.0));
            let lhs = hilbert_dist(r1.map_by(&m).unwrap(), r2.map_by(&m).unwrap());
            assert!(lhs <= coeff * hilbert_dist(r1, r2) + 1e-10, "{m:?}");
        }
    }

    #[test]
    fn diameter_submultiplicative_on_random_pairs() {
        let mut g = rng();
        for _ in 0..10_000 {
            let mk = |g: &mut rand_chacha::ChaCha8Rng| {
                Mat2::new(
                    g.gen_range(0.01..5.0),
                    g.gen_range(0.01..5.0),
                    g.gen_range(0.01..5.0),
                    g.gen_range(0.01..5.0),
                )
            };
            let (m1, m2) = (mk(&mut g), mk(&mut g));
            let lhs = cone_diameter(&m2.mul(&m1)).unwrap();
            let rhs = contraction_coeff(&m2).unwrap() * cone_diameter(&m1).unwrap();
            assert!(lhs <= rhs + 1e-10);
        }
    }

    #[test]
    fn constant_map_gives_perron_direction() {
        use crate::subshift::PointWindow;
        use crate::words::{Word, WordParams};
        let m = Mat2::new(1.7, 0.4, 0.9, 1.2);
        let p_map = CocycleMap::constant(m);
        // any off-Y window with enough validity
        let w: Word = "UDUDZUDDUDUZDU".parse::<Word>().unwrap().repeat(200);
        let x = PointWindow::window(w, -1400, WordParams::Pow2);
        let lam0 = 0.1;
        let dir = invariant_direction(&p_map, &x, 500, 1e-12, lam0, true).unwrap();
        // Perron oracle by power iteration
        let mut v = [1.0, 1.0];
        for _ in 0..5000 {
            let w = m.apply(v);
            let n = (w[0] * w[0] + w[1] * w[1]).sqrt();
            v = [w[0] / n, w[1] / n];
        }
        assert!((dir.u[0] - v[0]).abs() < 1e-9 && (dir.u[1] - v[1]).abs() < 1e-9);
        let mv = m.apply(v);
        let perron = (mv[0] * mv[0] + mv[1] * mv[1]).sqrt();
        assert!((dir.f - (perron.ln() - lam0)).abs() < 1e-9);
        // residual of the defining equation
        let pu = m.apply(dir.u);
        let scale = (lam0 + dir.f).exp();
        let u_next = dir.u; // constant map: u(Tx) = u(x)
        let res = ((pu[0] - scale * u_next[0]).powi(2) + (pu[1] - scale * u_next[1]).powi(2)).sqrt();
        assert!(res < 1e-8, "residual {res}");
    }

    #[test]
    fn backward_diameters_decrease() {
        let m = Mat2::new(1.7, 0.4, 0.9, 1.2);
        let mut acc = ScaledProduct::identity();
        let mut prev = f64::INFINITY;
        for _ in 0..60 {
            acc.push_back(&m);
            let d = cone_diameter(&acc.mat).unwrap();
            assert!(d <= prev + 1e-12);
            prev = d;
        }
        assert!(prev < 1e-9);
    }
}
